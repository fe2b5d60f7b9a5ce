//! Uniform Cartesian grids and non-overlapping rectangular domain
//! decompositions.
//!
//! Cells are indexed row-major: cell `(i, j)` has flat index `j * nx + i`,
//! with `(0, 0)` at the lower-left corner. All geometry below assumes the
//! uniform cell sizes `hx = (x1 - x0) / nx`, `hy = (y1 - y0) / ny`.

use crate::error::{MsmError, Result};

/// Uniform Cartesian mesh of rectangular cells over `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub hx: f64,
    pub hy: f64,
}

impl CartesianGrid {
    /// Builds a grid over an arbitrary rectangle.
    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(MsmError::Argument(format!(
                "grid dimensions must be positive, got nx = {nx}, ny = {ny}"
            )));
        }
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(MsmError::Argument("grid extents must be finite".into()));
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(MsmError::Argument(format!(
                "grid extents must satisfy x1 > x0 and y1 > y0, \
                 got [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(CartesianGrid {
            nx,
            ny,
            x0,
            y0,
            x1,
            y1,
            hx: (x1 - x0) / nx as f64,
            hy: (y1 - y0) / ny as f64,
        })
    }

    /// Builds a grid over the unit square.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, 0.0, 0.0, 1.0, 1.0)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index of cell `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Inverse of [`index`](Self::index).
    pub fn ij(&self, cell: usize) -> (usize, usize) {
        debug_assert!(cell < self.n_cells());
        (cell % self.nx, cell / self.nx)
    }

    /// Center coordinates of a cell.
    pub fn center(&self, cell: usize) -> (f64, f64) {
        let (i, j) = self.ij(cell);
        (
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Flat index of the cell containing `(x, y)`, or `None` outside the
    /// domain. Points on an interior cell edge belong to the higher cell;
    /// points on the domain's upper boundary are clamped into the last cell
    /// so the closed rectangle is fully covered.
    pub fn cell_containing(&self, x: f64, y: f64) -> Option<usize> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        if x < self.x0 || x > self.x1 || y < self.y0 || y > self.y1 {
            return None;
        }
        let i = (((x - self.x0) / self.hx).floor() as usize).min(self.nx - 1);
        let j = (((y - self.y0) / self.hy).floor() as usize).min(self.ny - 1);
        Some(self.index(i, j))
    }
}

/// Partition of a grid into `mx * my` congruent rectangular subdomains.
///
/// Subdomains are indexed row-major like cells: subdomain `(si, sj)` has flat
/// index `sj * mx + si`. Every subdomain holds `(nx / mx) * (ny / my)` cells,
/// listed row-major within the subdomain.
#[derive(Debug, Clone)]
pub struct DomainDecomposition {
    grid: CartesianGrid,
    mx: usize,
    my: usize,
    sub_nx: usize,
    sub_ny: usize,
}

impl DomainDecomposition {
    /// Splits `grid` into `mx x my` subdomains. The subdomain counts must
    /// divide the grid dimensions exactly.
    pub fn new(grid: &CartesianGrid, mx: usize, my: usize) -> Result<Self> {
        if mx == 0 || my == 0 {
            return Err(MsmError::Argument(format!(
                "subdomain counts must be positive, got mx = {mx}, my = {my}"
            )));
        }
        if grid.nx % mx != 0 || grid.ny % my != 0 {
            return Err(MsmError::Argument(format!(
                "subdomain counts must divide the grid: nx = {} vs mx = {}, ny = {} vs my = {}",
                grid.nx, mx, grid.ny, my
            )));
        }
        Ok(DomainDecomposition {
            grid: *grid,
            mx,
            my,
            sub_nx: grid.nx / mx,
            sub_ny: grid.ny / my,
        })
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn mx(&self) -> usize {
        self.mx
    }

    pub fn my(&self) -> usize {
        self.my
    }

    pub fn n_subdomains(&self) -> usize {
        self.mx * self.my
    }

    /// Fine cells per subdomain along each axis.
    pub fn sub_dims(&self) -> (usize, usize) {
        (self.sub_nx, self.sub_ny)
    }

    pub fn cells_per_subdomain(&self) -> usize {
        self.sub_nx * self.sub_ny
    }

    /// Subdomain edge lengths `(Hx, Hy)`.
    pub fn subdomain_extents(&self) -> (f64, f64) {
        (
            self.sub_nx as f64 * self.grid.hx,
            self.sub_ny as f64 * self.grid.hy,
        )
    }

    /// Flat subdomain index owning a cell.
    pub fn subdomain_of(&self, cell: usize) -> usize {
        debug_assert!(cell < self.grid.n_cells());
        let (i, j) = self.grid.ij(cell);
        (j / self.sub_ny) * self.mx + i / self.sub_nx
    }

    /// Cells of a subdomain, row-major within the subdomain: local cell
    /// `(li, lj)` sits at position `lj * sub_nx + li` of the returned list.
    pub fn cells_of(&self, subdomain: usize) -> Result<Vec<usize>> {
        if subdomain >= self.n_subdomains() {
            return Err(MsmError::Argument(format!(
                "subdomain index {subdomain} out of range, have {}",
                self.n_subdomains()
            )));
        }
        let si = subdomain % self.mx;
        let sj = subdomain / self.mx;
        let mut cells = Vec::with_capacity(self.cells_per_subdomain());
        for lj in 0..self.sub_ny {
            for li in 0..self.sub_nx {
                cells.push(self.grid.index(si * self.sub_nx + li, sj * self.sub_ny + lj));
            }
        }
        Ok(cells)
    }

    /// Local grid a single subdomain lives on: same cell sizes as the parent
    /// grid, origin at zero. All subdomains are congruent, so one local grid
    /// (and one local basis built on it) serves every subdomain.
    pub fn local_grid(&self) -> CartesianGrid {
        let (hx_sub, hy_sub) = self.subdomain_extents();
        CartesianGrid {
            nx: self.sub_nx,
            ny: self.sub_ny,
            x0: 0.0,
            y0: 0.0,
            x1: hx_sub,
            y1: hy_sub,
            hx: self.grid.hx,
            hy: self.grid.hy,
        }
    }

    /// Local cell index within its owning subdomain (row-major within the
    /// subdomain), matching the ordering of [`cells_of`](Self::cells_of).
    pub fn local_index_of(&self, cell: usize) -> usize {
        let (i, j) = self.grid.ij(cell);
        (j % self.sub_ny) * self.sub_nx + i % self.sub_nx
    }

    /// Cells whose centers lie within `hbar` (Euclidean distance) of an
    /// interior subdomain interface. Domain boundary edges never count.
    /// Returned indices are strictly increasing.
    pub fn interface_band(&self, hbar: f64) -> Result<Vec<usize>> {
        if !hbar.is_finite() || hbar < 0.0 {
            return Err(MsmError::Argument(format!(
                "band half-width must be finite and non-negative, got {hbar}"
            )));
        }
        let g = &self.grid;
        let (hx_sub, hy_sub) = self.subdomain_extents();
        let mut band = Vec::new();
        for cell in 0..g.n_cells() {
            let (cx, cy) = g.center(cell);
            let near_vertical = (1..self.mx)
                .any(|s| (cx - (g.x0 + s as f64 * hx_sub)).abs() <= hbar);
            let near_horizontal = (1..self.my)
                .any(|t| (cy - (g.y0 + t as f64 * hy_sub)).abs() <= hbar);
            if near_vertical || near_horizontal {
                band.push(cell);
            }
        }
        Ok(band)
    }

    /// Cells of the averaging neighborhood of `cell`: centers inside the
    /// ellipse with semi-axes `(ax, ay)` around the cell's own center,
    /// restricted to the cell's subdomain. Always contains `cell` itself.
    pub fn neighborhood(&self, cell: usize, ax: f64, ay: f64) -> Result<Vec<usize>> {
        let g = &self.grid;
        if cell >= g.n_cells() {
            return Err(MsmError::Argument(format!(
                "cell index {cell} out of range, have {}",
                g.n_cells()
            )));
        }
        if !(ax.is_finite() && ay.is_finite()) || ax <= 0.0 || ay <= 0.0 {
            return Err(MsmError::Argument(format!(
                "neighborhood semi-axes must be finite and positive, got ({ax}, {ay})"
            )));
        }
        let home = self.subdomain_of(cell);
        let (ci, cj) = g.ij(cell);
        let (cx, cy) = g.center(cell);
        // Candidate index window covering the ellipse, clipped to the grid.
        let ri = (ax / g.hx).ceil() as usize;
        let rj = (ay / g.hy).ceil() as usize;
        let i_lo = ci.saturating_sub(ri);
        let i_hi = (ci + ri).min(g.nx - 1);
        let j_lo = cj.saturating_sub(rj);
        let j_hi = (cj + rj).min(g.ny - 1);
        let mut hood = Vec::new();
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let cand = g.index(i, j);
                if self.subdomain_of(cand) != home {
                    continue;
                }
                let (px, py) = g.center(cand);
                let ex = (cx - px) / ax;
                let ey = (cy - py) / ay;
                if ex * ex + ey * ey <= 1.0 {
                    hood.push(cand);
                }
            }
        }
        Ok(hood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_round_trips() {
        let g = CartesianGrid::unit_square(16, 9).unwrap();
        assert_eq!(g.n_cells(), 144);
        for cell in 0..g.n_cells() {
            let (i, j) = g.ij(cell);
            assert_eq!(g.index(i, j), cell);
        }
        assert_eq!(g.index(0, 0), 0);
        assert_eq!(g.index(1, 0), 1);
        assert_eq!(g.index(0, 1), 16);
    }

    #[test]
    fn grid_centers_and_containment() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let (x, y) = g.center(0);
        assert!((x - 0.03125).abs() < 1e-15);
        assert!((y - 0.03125).abs() < 1e-15);
        for cell in 0..g.n_cells() {
            let (x, y) = g.center(cell);
            assert_eq!(g.cell_containing(x, y), Some(cell));
        }
        // Upper boundary points clamp into the last cells.
        assert_eq!(g.cell_containing(1.0, 1.0), Some(g.n_cells() - 1));
        assert_eq!(g.cell_containing(-0.01, 0.5), None);
        assert_eq!(g.cell_containing(f64::NAN, 0.5), None);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(CartesianGrid::unit_square(0, 4).is_err());
        assert!(CartesianGrid::new(4, 4, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(CartesianGrid::new(4, 4, 0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn decomposition_partitions_cells() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 2, 2).unwrap();
        assert_eq!(dd.n_subdomains(), 4);
        assert_eq!(dd.cells_per_subdomain(), 64);
        assert_eq!(dd.subdomain_extents(), (0.5, 0.5));

        let mut seen = vec![false; g.n_cells()];
        for s in 0..dd.n_subdomains() {
            for &c in &dd.cells_of(s).unwrap() {
                assert!(!seen[c], "cell {c} assigned twice");
                seen[c] = true;
                assert_eq!(dd.subdomain_of(c), s);
            }
        }
        assert!(seen.iter().all(|&v| v));
    }

    #[test]
    fn decomposition_local_ordering_matches_cells_of() {
        let g = CartesianGrid::unit_square(12, 8).unwrap();
        let dd = DomainDecomposition::new(&g, 3, 2).unwrap();
        for s in 0..dd.n_subdomains() {
            for (local, &c) in dd.cells_of(s).unwrap().iter().enumerate() {
                assert_eq!(dd.local_index_of(c), local);
            }
        }
        let lg = dd.local_grid();
        assert_eq!((lg.nx, lg.ny), (4, 4));
        assert!((lg.hx - g.hx).abs() < 1e-15);
        assert!((lg.x1 - 4.0 * g.hx).abs() < 1e-15);
    }

    #[test]
    fn decomposition_rejects_nondivisible_counts() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        assert!(DomainDecomposition::new(&g, 3, 2).is_err());
        assert!(DomainDecomposition::new(&g, 0, 2).is_err());
    }

    #[test]
    fn interface_band_counts_on_quartered_grid() {
        // 2 x 2 split of a 16 x 16 unit-square grid. Interior interfaces are
        // the lines x = 0.5 and y = 0.5; centers sit at odd multiples of
        // 1/32, so the nearest centers are 1/32 = 0.03125 away.
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 2, 2).unwrap();
        // Half-width 0.05 captures one cell layer each side of each line:
        // 32 + 32 - 4 overlap cells.
        assert_eq!(dd.interface_band(0.05).unwrap().len(), 60);
        // Half-width 0.1 captures two layers each side: 64 + 64 - 16.
        assert_eq!(dd.interface_band(0.1).unwrap().len(), 112);
        // Below the nearest center distance the band is empty.
        assert!(dd.interface_band(0.03).unwrap().is_empty());
        let band = dd.interface_band(0.05).unwrap();
        assert!(band.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn interface_band_empty_for_single_subdomain() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 1, 1).unwrap();
        assert!(dd.interface_band(10.0).unwrap().is_empty());
    }

    #[test]
    fn neighborhood_is_clipped_to_subdomain_and_contains_self() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 2, 2).unwrap();
        // Interior cell of subdomain 0, two cells from any interface: the
        // circle of radius 0.1 on h = 1/16 covers offsets with
        // di^2 + dj^2 <= 2.56, i.e. the 3 x 3 stencil.
        let cell = g.index(4, 4);
        let hood = dd.neighborhood(cell, 0.1, 0.1).unwrap();
        assert_eq!(hood.len(), 9);
        assert!(hood.contains(&cell));
        for &c in &hood {
            assert_eq!(dd.subdomain_of(c), dd.subdomain_of(cell));
        }

        // Cell adjacent to the vertical interface: the stencil loses its
        // out-of-subdomain column.
        let edge_cell = g.index(7, 4);
        let hood = dd.neighborhood(edge_cell, 0.1, 0.1).unwrap();
        assert_eq!(hood.len(), 6);
        assert!(hood.iter().all(|&c| dd.subdomain_of(c) == 0));

        // Corner cell of the grid keeps only the in-domain quadrant.
        let hood = dd.neighborhood(0, 0.1, 0.1).unwrap();
        assert_eq!(hood.len(), 4);
    }

    #[test]
    fn neighborhood_respects_anisotropic_axes() {
        let g = CartesianGrid::unit_square(16, 16).unwrap();
        let dd = DomainDecomposition::new(&g, 1, 1).unwrap();
        let cell = g.index(8, 8);
        // Semi-axes of one cell in x, three cells in y: the ellipse test
        // keeps |di| <= 1, |dj| <= 3 with (di/1)^2 + (dj/3)^2 <= 1 on the
        // cell-offset lattice.
        let hood = dd.neighborhood(cell, 0.0625, 0.1875).unwrap();
        let mut expected = Vec::new();
        for dj in -3i64..=3 {
            for di in -1i64..=1 {
                let e = (di as f64).powi(2) + (dj as f64 / 3.0).powi(2);
                if e <= 1.0 {
                    expected.push(g.index((8 + di) as usize, (8 + dj) as usize));
                }
            }
        }
        expected.sort_unstable();
        let mut got = hood.clone();
        got.sort_unstable();
        assert_eq!(got, expected);
    }

    #[test]
    fn neighborhood_rejects_bad_arguments() {
        let g = CartesianGrid::unit_square(8, 8).unwrap();
        let dd = DomainDecomposition::new(&g, 2, 2).unwrap();
        assert!(dd.neighborhood(999, 0.1, 0.1).is_err());
        assert!(dd.neighborhood(0, 0.0, 0.1).is_err());
        assert!(dd.neighborhood(0, 0.1, f64::NAN).is_err());
    }
}
