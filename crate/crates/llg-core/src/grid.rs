//! Cell-centered structured grids on the unit interval or unit cube, with
//! mirror ghost cells, the compact Laplacian stencil, and the discrete norms
//! used by the integrator and the verification harness.
//!
//! The domain (0,1)^d with d ∈ {1, 3} is split into n cells per axis of width
//! h = 1/n. Unknowns live at cell centers x_i = (i − 1/2)h for i = 1..n. One
//! layer of ghost cells surrounds the interior; homogeneous Neumann boundary
//! conditions are enforced by mirror copying, so each ghost holds the value of
//! the interior cell it reflects and the centered difference across the
//! boundary vanishes.
//!
//! Discrete norms are weighted so they are consistent with their continuum
//! counterparts: the ℓ² norm carries a factor h^d per cell, and the gradient
//! seminorm sums forward differences over interior links with the same cell
//! weight. With mirror ghosts these choices satisfy the summation-by-parts
//! identity ⟨−Δ_h f, g⟩ = (∇_h f, ∇_h g), which is what the energy estimates
//! for the implicit diffusion half rely on.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::ops::RangeInclusive;

/// Dimension and resolution of a cell-centered grid on (0,1)^d.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    /// A grid with `n` cells per axis in `dim` dimensions. Only `dim ∈ {1, 3}`
    /// is supported and at least two cells per axis are required so that
    /// interior links exist.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 3, got {dim}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per axis, got {n}"
            )));
        }
        Ok(GridSpec { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh width h = 1/n.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of interior cells, n^dim.
    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Coordinate of the i-th cell center along one axis, (i − 1/2)h for
    /// i ∈ 1..=n.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 - 0.5) * self.h()
    }

    /// Storage extent per component, (n+2)^dim sites including ghosts.
    pub fn ext(&self) -> usize {
        (self.n + 2).pow(self.dim as u32)
    }

    /// Flat-index strides per axis; inactive axes have stride 0 so a 1-D grid
    /// addresses as `[i, 0, 0]`.
    pub fn strides(&self) -> [usize; 3] {
        if self.dim == 1 {
            [1, 0, 0]
        } else {
            let e = self.n + 2;
            [1, e, e * e]
        }
    }

    /// Flat storage index of the site with per-axis indices `idx`, each in
    /// 0..=n+1 (0 and n+1 are ghosts). Inactive axes must be 0.
    pub fn site(&self, idx: [usize; 3]) -> usize {
        let s = self.strides();
        idx[0] * s[0] + idx[1] * s[1] + idx[2] * s[2]
    }

    /// Physical position of a cell center; inactive axes report 0.
    pub fn position(&self, idx: [usize; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.center(idx[a]);
        }
        p
    }

    /// Interior index range per axis: 1..=n on active axes, 0..=0 otherwise.
    pub fn interior_range(&self, axis: usize) -> RangeInclusive<usize> {
        if axis < self.dim {
            1..=self.n
        } else {
            0..=0
        }
    }

    fn full_range(&self, axis: usize) -> RangeInclusive<usize> {
        if axis < self.dim {
            0..=self.n + 1
        } else {
            0..=0
        }
    }

    /// All interior cell indices in canonical order (x fastest, then y, then
    /// z). This order defines the row order of CSV snapshots and the layout of
    /// per-cell scalar buffers such as [`avg_gradient_sq`].
    pub fn interior_cells(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::with_capacity(self.cells());
        for k in self.interior_range(2) {
            for j in self.interior_range(1) {
                for i in self.interior_range(0) {
                    out.push([i, j, k]);
                }
            }
        }
        out
    }
}

/// A three-component field sampled at cell centers, stored with one ghost
/// layer per active axis. Components are stored contiguously (component-major)
/// so stencil sweeps stay cache-friendly.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: GridSpec,
    ext: usize,
    data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        let ext = grid.ext();
        VectorField {
            grid,
            ext,
            data: vec![0.0; 3 * ext],
        }
    }

    /// Constant field with value `v` everywhere, ghosts included.
    pub fn constant(grid: GridSpec, v: [f64; 3]) -> Self {
        let mut f = Self::zeros(grid);
        for c in 0..3 {
            f.comp_mut(c).fill(v[c]);
        }
        f
    }

    /// Sample `f(position)` at every interior cell center and fill ghosts.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for idx in grid.interior_cells() {
            let v = f(grid.position(idx));
            let p = grid.site(idx);
            for c in 0..3 {
                out.data[c * out.ext + p] = v[c];
            }
        }
        out.fill_ghosts();
        out
    }

    /// Seeded random field with each interior component drawn independently
    /// from the uniform distribution on [−1, 1); cells are visited in
    /// canonical order and ghosts are filled afterwards. No normalization is
    /// applied.
    pub fn random_uniform(grid: GridSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(grid);
        for idx in grid.interior_cells() {
            let p = grid.site(idx);
            for c in 0..3 {
                out.data[c * out.ext + p] = rng.gen_range(-1.0..1.0);
            }
        }
        out.fill_ghosts();
        out
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Read-only storage of one component, ghosts included.
    pub fn comp(&self, c: usize) -> &[f64] {
        &self.data[c * self.ext..(c + 1) * self.ext]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.ext..(c + 1) * self.ext]
    }

    /// Value of component `c` at site `idx` (ghosts addressable).
    pub fn at(&self, c: usize, idx: [usize; 3]) -> f64 {
        self.data[c * self.ext + self.grid.site(idx)]
    }

    pub fn at_mut(&mut self, c: usize, idx: [usize; 3]) -> &mut f64 {
        let p = c * self.ext + self.grid.site(idx);
        &mut self.data[p]
    }

    /// The three components at one site.
    pub fn vec_at(&self, idx: [usize; 3]) -> [f64; 3] {
        let p = self.grid.site(idx);
        [
            self.data[p],
            self.data[self.ext + p],
            self.data[2 * self.ext + p],
        ]
    }

    /// Mirror-copy ghost layers, one axis at a time in x, y, z order. Each
    /// pass copies whole planes over the full extent of the other axes, so
    /// after all passes edge and corner ghosts hold composed reflections and
    /// every centered difference across a boundary face vanishes.
    pub fn fill_ghosts(&mut self) {
        let g = self.grid;
        let n = g.n();
        let s = g.strides();
        for c in 0..3 {
            let base = c * self.ext;
            for axis in 0..g.dim() {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let sa = s[axis];
                for b in g.full_range(u) {
                    for d in g.full_range(v) {
                        let row = base + b * s[u] + d * s[v];
                        self.data[row] = self.data[row + sa];
                        self.data[row + (n + 1) * sa] = self.data[row + n * sa];
                    }
                }
            }
        }
    }

    pub fn copy_from(&mut self, other: &VectorField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.data.copy_from_slice(&other.data);
    }

    /// self += a·x over all storage (ghosts included, which keeps ghost
    /// layers consistent for linear combinations of ghost-filled fields).
    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        assert_eq!(self.grid, x.grid, "grid mismatch");
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in self.data.iter_mut() {
            *s *= a;
        }
    }

    /// self = s·(a − b) over interior cells; ghost entries are left
    /// unchanged, so a buffer with zeroed ghosts keeps them.
    pub fn interior_scaled_diff(&mut self, s: f64, a: &VectorField, b: &VectorField) {
        assert_eq!(self.grid, a.grid, "grid mismatch");
        assert_eq!(self.grid, b.grid, "grid mismatch");
        let g = self.grid;
        let st = g.strides();
        for c in 0..3 {
            let base = c * self.ext;
            let av = a.comp(c);
            let bv = b.comp(c);
            for k in g.interior_range(2) {
                for j in g.interior_range(1) {
                    let row = j * st[1] + k * st[2];
                    for i in g.interior_range(0) {
                        self.data[base + row + i] = s * (av[row + i] - bv[row + i]);
                    }
                }
            }
        }
    }

    /// Discrete ℓ² norm, sqrt(h^d Σ_cells |m_I|²) over interior cells.
    pub fn l2_norm(&self) -> f64 {
        (self.norm_sq_unweighted() / self.grid.cells() as f64).sqrt()
    }

    /// Maximum absolute component value over interior cells.
    pub fn linf_norm(&self) -> f64 {
        let g = self.grid;
        let s = g.strides();
        let mut m: f64 = 0.0;
        for c in 0..3 {
            let a = self.comp(c);
            for k in g.interior_range(2) {
                for j in g.interior_range(1) {
                    let row = j * s[1] + k * s[2];
                    for i in g.interior_range(0) {
                        m = m.max(a[row + i].abs());
                    }
                }
            }
        }
        m
    }

    /// Squared gradient seminorm Σ_links h^d |(f(I+e) − f(I))/h|² with the sum
    /// over interior forward links of every active axis.
    pub fn grad_norm_sq(&self) -> f64 {
        grad_inner(self, self)
    }

    /// Discrete H¹ norm, sqrt(ℓ²² + ‖∇_h m‖²).
    pub fn h1_norm(&self) -> f64 {
        (self.norm_sq_unweighted() / self.grid.cells() as f64 + self.grad_norm_sq()).sqrt()
    }

    /// ℓ² inner product h^d Σ_cells f_I · g_I over interior cells.
    pub fn inner(&self, other: &VectorField) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let g = self.grid;
        let s = g.strides();
        let mut acc = 0.0;
        for c in 0..3 {
            let a = self.comp(c);
            let b = other.comp(c);
            for k in g.interior_range(2) {
                for j in g.interior_range(1) {
                    let row = j * s[1] + k * s[2];
                    for i in g.interior_range(0) {
                        acc += a[row + i] * b[row + i];
                    }
                }
            }
        }
        acc / g.cells() as f64
    }

    /// Largest deviation of the pointwise magnitude from one, max_I ||m_I| − 1|.
    pub fn max_unit_drift(&self) -> f64 {
        let g = self.grid;
        let mut m: f64 = 0.0;
        for idx in g.interior_cells() {
            let v = self.vec_at(idx);
            let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            m = m.max((len - 1.0).abs());
        }
        m
    }

    /// True if every stored value (ghosts included) is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn norm_sq_unweighted(&self) -> f64 {
        let g = self.grid;
        let s = g.strides();
        let mut acc = 0.0;
        for c in 0..3 {
            let a = self.comp(c);
            for k in g.interior_range(2) {
                for j in g.interior_range(1) {
                    let row = j * s[1] + k * s[2];
                    for i in g.interior_range(0) {
                        acc += a[row + i] * a[row + i];
                    }
                }
            }
        }
        acc
    }
}

/// Compact 3-point (1-D) or 7-point (3-D) Laplacian, interior cells only.
/// `src` must have current ghost values; `dst` ghost sites are left untouched.
pub fn laplacian(src: &VectorField, dst: &mut VectorField) {
    assert_eq!(src.grid, dst.grid, "grid mismatch");
    let g = src.grid;
    let n = g.n();
    let s = g.strides();
    let inv_h2 = (n * n) as f64;
    let two_d = 2.0 * g.dim() as f64;
    for c in 0..3 {
        let (a, b) = (src.comp(c), c);
        let out = dst.comp_mut(b);
        for k in g.interior_range(2) {
            for j in g.interior_range(1) {
                let row = j * s[1] + k * s[2];
                for i in 1..=n {
                    let p = row + i;
                    let mut acc = a[p - 1] + a[p + 1] - two_d * a[p];
                    if g.dim() == 3 {
                        acc += a[p - s[1]] + a[p + s[1]] + a[p - s[2]] + a[p + s[2]];
                    }
                    out[p] = acc * inv_h2;
                }
            }
        }
    }
}

/// Gradient inner product (∇_h f, ∇_h g) = h^d Σ_links (Δf · Δg)/h², summed
/// over interior forward links of every active axis and all components. With
/// mirror ghosts on `f` this equals ⟨−Δ_h f, g⟩ (summation by parts).
pub fn grad_inner(f: &VectorField, g: &VectorField) -> f64 {
    assert_eq!(f.grid, g.grid, "grid mismatch");
    let gr = f.grid;
    let n = gr.n();
    let s = gr.strides();
    // h^d / h² = n^(2-d)
    let w = match gr.dim() {
        1 => gr.n() as f64,
        _ => 1.0 / gr.n() as f64,
    };
    let mut acc = 0.0;
    for c in 0..3 {
        let a = f.comp(c);
        let b = g.comp(c);
        for axis in 0..gr.dim() {
            let sa = s[axis];
            for k in gr.interior_range(2) {
                for j in gr.interior_range(1) {
                    let row = j * s[1] + k * s[2];
                    for i in gr.interior_range(0) {
                        let idx = [i, j, k];
                        if idx[axis] == n {
                            continue; // no forward link out of the last cell
                        }
                        let p = row + i;
                        acc += (a[p + sa] - a[p]) * (b[p + sa] - b[p]);
                    }
                }
            }
        }
    }
    acc * w
}

/// Per-cell averaged squared gradient, Σ_axes Σ_comps ((m_c(I+e) −
/// m_c(I−e))/(2h))², evaluated with centered differences that reach into the
/// ghost layer. Returned in canonical interior order (see
/// [`GridSpec::interior_cells`]).
pub fn avg_gradient_sq(src: &VectorField) -> Vec<f64> {
    let g = src.grid;
    let s = g.strides();
    let half_inv_h = 0.5 * g.n() as f64; // 1/(2h)
    let mut out = Vec::with_capacity(g.cells());
    for k in g.interior_range(2) {
        for j in g.interior_range(1) {
            for i in g.interior_range(0) {
                let p = g.site([i, j, k]);
                let mut acc = 0.0;
                for c in 0..3 {
                    let a = src.comp(c);
                    for axis in 0..g.dim() {
                        let sa = s[axis];
                        let d = (a[p + sa] - a[p - sa]) * half_inv_h;
                        acc += d * d;
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Write a field snapshot as CSV with index, position, and component columns
/// (`i[,j,k],x[,y,z],m1,m2,m3`), rows in canonical interior order, floats at
/// 17 significant digits.
pub fn write_snapshot_csv<W: Write>(field: &VectorField, mut w: W) -> std::io::Result<()> {
    let g = field.grid();
    if g.dim() == 1 {
        writeln!(w, "i,x,m1,m2,m3")?;
    } else {
        writeln!(w, "i,j,k,x,y,z,m1,m2,m3")?;
    }
    for idx in g.interior_cells() {
        let pos = g.position(idx);
        let v = field.vec_at(idx);
        for a in 0..g.dim() {
            write!(w, "{},", idx[a])?;
        }
        for a in 0..g.dim() {
            write!(w, "{:.16e},", pos[a])?;
        }
        writeln!(w, "{:.16e},{:.16e},{:.16e}", v[0], v[1], v[2])?;
    }
    Ok(())
}
