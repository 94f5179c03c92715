//! Constant-coefficient Helmholtz stage solver: (I − σΔ_h)u = rhs with
//! homogeneous Neumann (mirror ghost) boundary conditions and σ ≥ 0.
//!
//! Every implicit stage of the IMEX scheme reduces to this solve with
//! σ = aᵢᵢ β k. Two backends cover the use cases:
//!
//! - Fast diagonalization. The Neumann Laplacian on a cell-centered grid is
//!   diagonalized exactly by even cosine modes v_p(i) = cos(pπ(i − 1/2)/n)
//!   with eigenvalues λ_p = (4/h²) sin²(pπ/(2n)). The orthonormal transform
//!   is applied as a dense matrix product per axis (tensorized in 3-D), the
//!   spectrum is shifted by 1 + σΣλ, and the transform is inverted. Because
//!   the transform is orthogonal and every mode is multiplied by a factor in
//!   (0, 1], the solve is structurally non-amplifying in ℓ², which is what
//!   the unconditional stability experiment leans on at extreme σ/h².
//! - Tridiagonal sweep. Long 1-D grids (n > 64) use the Thomas algorithm on
//!   the strictly diagonally dominant tridiagonal system; the mirror boundary
//!   folds the ghost coefficient into the wall diagonal.
//!
//! Either backend is followed by iterative refinement: the residual
//! rhs − (I − σΔ_h)u is solved again and added back, which pushes the
//! residual to rounding level. Accuracy is enforced as a normwise backward
//! error, η = ‖rhs − Au‖ / (‖A‖·‖u‖ + ‖rhs‖) ≤ 1e−12 with ‖A‖ the row-sum
//! norm 1 + 4·dim·σ/h². For every σ the scheme produces (σ/h² up to about
//! 1e4) this coincides with a plain relative residual at the same level; at
//! far larger σ/h² the plain ratio is not evaluable in double precision
//! (the residual computation itself rounds at eps·‖A‖‖u‖), which is why the
//! contract is stated in backward-error form.
//!
//! A deliberately slow dense Cholesky oracle ([`dense_reference_solve`]) and
//! the raw operator application ([`apply_operator`]) are exported for
//! validation; the acceptance suite compares the fast paths against them.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, VectorField};

/// Largest 1-D grid handled by dense diagonalization; longer lines switch to
/// the O(n) tridiagonal sweep. All 3-D grids use diagonalization.
const DCT_MAX_1D: usize = 64;

/// Normwise backward error above which a solve is reported as failed.
const RESIDUAL_TOL: f64 = 1e-12;

enum Backend {
    /// Orthonormal cosine transform per axis: `fwd[p*n + i]` holds Q_{ip},
    /// `inv[i*n + p]` the same entry laid out for the inverse sweep, `lam[p]`
    /// the Laplacian eigenvalue of mode p.
    Diagonalization {
        fwd: Vec<f64>,
        inv: Vec<f64>,
        lam: Vec<f64>,
    },
    Tridiagonal,
}

/// Reusable solver for one grid; construction precomputes the transform.
pub struct HelmholtzSolver {
    grid: GridSpec,
    backend: Backend,
}

impl HelmholtzSolver {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n();
        let backend = if grid.dim() == 1 && n > DCT_MAX_1D {
            Backend::Tridiagonal
        } else {
            let mut fwd = vec![0.0; n * n];
            let mut inv = vec![0.0; n * n];
            let mut lam = vec![0.0; n];
            let nf = n as f64;
            for p in 0..n {
                let scale = if p == 0 {
                    (1.0 / nf).sqrt()
                } else {
                    (2.0 / nf).sqrt()
                };
                let freq = p as f64 * std::f64::consts::PI / nf;
                lam[p] = 4.0 * nf * nf * (0.5 * freq).sin().powi(2);
                for i in 0..n {
                    let q = scale * (freq * (i as f64 + 0.5)).cos();
                    fwd[p * n + i] = q;
                    inv[i * n + p] = q;
                }
            }
            Backend::Diagonalization { fwd, inv, lam }
        };
        HelmholtzSolver { grid, backend }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Solve (I − σΔ_h)u = rhs for all three components; `out` gets a
    /// ghost-consistent solution. Fails for σ < 0 or when the refined
    /// normwise backward error still exceeds 1e−12.
    pub fn solve(&self, sigma: f64, rhs: &VectorField, out: &mut VectorField) -> Result<()> {
        if rhs.grid() != self.grid || out.grid() != self.grid {
            return Err(Error::Solver(
                "field grid does not match solver grid".into(),
            ));
        }
        for c in 0..3 {
            let x = gather_interior(rhs, c);
            let u = self.solve_compact(sigma, &x)?;
            scatter_interior(out, c, &u);
        }
        out.fill_ghosts();
        Ok(())
    }

    /// Scalar solve on a compact interior buffer in canonical cell order.
    pub fn solve_compact(&self, sigma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let cells = self.grid.cells();
        if rhs.len() != cells {
            return Err(Error::Solver(format!(
                "rhs has {} entries, grid has {} cells",
                rhs.len(),
                cells
            )));
        }
        if sigma < 0.0 {
            return Err(Error::Solver(format!(
                "negative diffusion coefficient sigma = {sigma:.3e}"
            )));
        }
        if sigma == 0.0 {
            return Ok(rhs.to_vec());
        }
        let rhs_norm = l2(rhs);
        if rhs_norm == 0.0 {
            return Ok(vec![0.0; cells]);
        }
        let n = self.grid.n();
        let op_norm = 1.0 + 4.0 * self.grid.dim() as f64 * sigma * (n * n) as f64;
        let mut u = self.raw_solve(sigma, rhs);
        for pass in 0.. {
            let mut r = apply_operator(self.grid, sigma, &u);
            for (ri, xi) in r.iter_mut().zip(rhs) {
                *ri = xi - *ri;
            }
            let eta = l2(&r) / (op_norm * l2(&u) + rhs_norm);
            if eta <= RESIDUAL_TOL {
                break;
            }
            if pass == 2 {
                return Err(Error::Solver(format!(
                    "backward error {eta:.3e} exceeds {RESIDUAL_TOL:.1e} (sigma = {sigma:.3e}, \
                     n = {n})"
                )));
            }
            let du = self.raw_solve(sigma, &r);
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui += di;
            }
        }
        Ok(u)
    }

    fn raw_solve(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Tridiagonal => thomas_solve(self.grid, sigma, rhs),
            Backend::Diagonalization { fwd, inv, lam } => {
                let n = self.grid.n();
                let mut u = rhs.to_vec();
                match self.grid.dim() {
                    1 => {
                        let mut hat = vec![0.0; n];
                        matvec(fwd, &u, &mut hat, n);
                        for p in 0..n {
                            hat[p] /= 1.0 + sigma * lam[p];
                        }
                        matvec(inv, &hat, &mut u, n);
                    }
                    _ => {
                        for axis in 0..3 {
                            transform_axis(&mut u, fwd, n, axis);
                        }
                        let mut idx = 0;
                        for pz in 0..n {
                            for py in 0..n {
                                for px in 0..n {
                                    u[idx] /= 1.0 + sigma * (lam[px] + lam[py] + lam[pz]);
                                    idx += 1;
                                }
                            }
                        }
                        for axis in 0..3 {
                            transform_axis(&mut u, inv, n, axis);
                        }
                    }
                }
                u
            }
        }
    }
}

/// Apply (I − σΔ_h) with mirror boundaries to a compact interior buffer.
pub fn apply_operator(grid: GridSpec, sigma: f64, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), grid.cells(), "buffer does not match grid");
    let n = grid.n();
    let coef = sigma * (n * n) as f64; // σ/h²
    let mut out = vec![0.0; u.len()];
    let strides = match grid.dim() {
        1 => [1usize, 0, 0],
        _ => [1, n, n * n],
    };
    let shape = |axis: usize| if axis < grid.dim() { n } else { 1 };
    for kz in 0..shape(2) {
        for ky in 0..shape(1) {
            for kx in 0..shape(0) {
                let p = kx + ky * strides[1] + kz * strides[2];
                let pos = [kx, ky, kz];
                let mut lap = 0.0;
                for axis in 0..grid.dim() {
                    let s = strides[axis];
                    // Mirror boundary: the missing neighbor equals the cell
                    // itself, so its difference term drops out.
                    if pos[axis] > 0 {
                        lap += u[p - s] - u[p];
                    }
                    if pos[axis] + 1 < n {
                        lap += u[p + s] - u[p];
                    }
                }
                out[p] = u[p] - coef * lap;
            }
        }
    }
    out
}

/// Solve (I − σΔ_h)u = rhs by dense Cholesky factorization. Slow by design;
/// this is the reference the fast backends are validated against. Fails if
/// the assembled matrix is not positive definite.
pub fn dense_reference_solve(grid: GridSpec, sigma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let m = dense_matrix(grid, sigma);
    let n = grid.cells();
    assert_eq!(rhs.len(), n, "buffer does not match grid");
    let l = cholesky(n, m)?;
    // Forward then backward substitution.
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut v = y[i];
        for j in 0..i {
            v -= l[i * n + j] * y[j];
        }
        y[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for j in i + 1..n {
            v -= l[j * n + i] * y[j];
        }
        y[i] = v / l[i * n + i];
    }
    Ok(y)
}

/// Assemble the dense operator matrix (row-major, canonical cell order).
pub fn dense_matrix(grid: GridSpec, sigma: f64) -> Vec<f64> {
    let cells = grid.cells();
    let n = grid.n();
    let coef = sigma * (n * n) as f64;
    let mut m = vec![0.0; cells * cells];
    let strides = match grid.dim() {
        1 => [1usize, 0, 0],
        _ => [1, n, n * n],
    };
    let shape = |axis: usize| if axis < grid.dim() { n } else { 1 };
    for kz in 0..shape(2) {
        for ky in 0..shape(1) {
            for kx in 0..shape(0) {
                let p = kx + ky * strides[1] + kz * strides[2];
                let pos = [kx, ky, kz];
                let mut diag = 1.0;
                for axis in 0..grid.dim() {
                    let s = strides[axis];
                    if pos[axis] > 0 {
                        diag += coef;
                        m[p * cells + (p - s)] = -coef;
                    }
                    if pos[axis] + 1 < n {
                        diag += coef;
                        m[p * cells + (p + s)] = -coef;
                    }
                }
                m[p * cells + p] = diag;
            }
        }
    }
    m
}

fn cholesky(n: usize, mut m: Vec<f64>) -> Result<Vec<f64>> {
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Solver(format!(
                        "matrix is not positive definite (pivot {s:.3e} at row {i})"
                    )));
                }
                m[i * n + i] = s.sqrt();
            } else {
                m[i * n + j] = s / m[j * n + j];
            }
        }
        for j in i + 1..n {
            m[i * n + j] = 0.0;
        }
    }
    Ok(m)
}

fn thomas_solve(grid: GridSpec, sigma: f64, rhs: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let coef = sigma * (n * n) as f64;
    let off = -coef;
    // Strict diagonal dominance (margin 1) makes the sweep stable without
    // pivoting.
    let diag = |i: usize| {
        let interior_links = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        1.0 + interior_links * coef
    };
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    c_prime[0] = off / diag(0);
    d_prime[0] = rhs[0] / diag(0);
    for i in 1..n {
        let denom = diag(i) - off * c_prime[i - 1];
        c_prime[i] = off / denom;
        d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = d_prime[i] - c_prime[i] * u[i + 1];
    }
    u
}

fn matvec(m: &[f64], x: &[f64], out: &mut [f64], n: usize) {
    for r in 0..n {
        let row = &m[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for i in 0..n {
            acc += row[i] * x[i];
        }
        out[r] = acc;
    }
}

/// Apply the n×n transform along one axis of a compact n³ cube.
fn transform_axis(u: &mut [f64], m: &[f64], n: usize, axis: usize) {
    let strides = [1usize, n, n * n];
    let s = strides[axis];
    let (su, sv) = match axis {
        0 => (n, n * n),
        1 => (1, n * n),
        _ => (1, n),
    };
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            let base = a * su + b * sv;
            for i in 0..n {
                line[i] = u[base + i * s];
            }
            matvec(m, &line, &mut out, n);
            for i in 0..n {
                u[base + i * s] = out[i];
            }
        }
    }
}

/// Extract one component's interior values in canonical cell order.
pub fn gather_interior(f: &VectorField, c: usize) -> Vec<f64> {
    let g = f.grid();
    let data = f.comp(c);
    let mut out = Vec::with_capacity(g.cells());
    for idx in g.interior_cells() {
        out.push(data[g.site(idx)]);
    }
    out
}

/// Write one component's interior values from canonical cell order.
pub fn scatter_interior(f: &mut VectorField, c: usize, vals: &[f64]) {
    let g = f.grid();
    assert_eq!(vals.len(), g.cells(), "buffer does not match grid");
    for (v, idx) in vals.iter().zip(g.interior_cells()) {
        *f.at_mut(c, idx) = *v;
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
