//! The coupled Runge-Kutta coefficient pair driving the IMEX scheme, with
//! structure validation, order-condition residuals, stability margins, a text
//! format, and a numerical coefficient search.
//!
//! A four-stage pair consists of a diagonally implicit matrix A (lower
//! triangular including the diagonal, first stage explicit so a₁₁ = 0), a
//! strictly lower triangular explicit matrix Ã, quadrature weights b (implicit
//! slot) and b̃ (explicit slot), and abscissae c and c̃. One time step treats
//! the artificial diffusion L = βΔ_h m through A and b, and the remaining
//! nonlinear terms N through Ã and b̃.
//!
//! Formal accuracy of the pair is expressed by coupled order conditions. Up
//! to third order they are, with every mixed combination of the two tableau
//! included:
//!
//! - order 1: Σbᵢ = 1 and Σb̃ᵢ = 1;
//! - order 2: Σ wᵢ zᵢ = 1/2 for w ∈ {b, b̃}, z ∈ {c, c̃};
//! - order 3: Σ wᵢ uᵢ vᵢ = 1/3 for w ∈ {b, b̃} and unordered {u, v} ⊆ {c, c̃},
//!   and Σ wᵢ Mᵢⱼ zⱼ = 1/6 for w ∈ {b, b̃}, M ∈ {A, Ã}, z ∈ {c, c̃}.
//!
//! That makes 2 + 4 + 14 = 20 conditions through order 3. When b̃ = b and
//! c̃ = c (as in the built-in pair) many coincide numerically, but every
//! condition is still evaluated and reported.
//!
//! The three stability margins are the slacks in the per-stage energy
//! inequalities for the implicit diffusion half,
//!
//! ```text
//! m₂ = 2a₂₂ − |a₃₂ − a₂₂| − |a₄₂ − a₃₂|
//! m₃ = 2a₃₃ − |a₃₂ − a₂₂| − |a₄₃ − a₃₃|
//! m₄ = 2a₄₄ − |a₄₂ − a₃₂| − |a₄₃ − a₃₃|
//! ```
//!
//! Positivity of all three yields, for the pure diffusion problem and any
//! step size, the decay ‖mₙ₊₁‖² ≤ ‖mₙ‖² − βk Σᵢ mᵢ ‖∇_h m̃ᵢ‖², hence an
//! unconditional ℓ∞(ℓ²) ∩ ℓ²(H¹) bound. The diffusion stability experiment
//! in the integrator module checks exactly this decay, margin weights
//! included.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Number of stages of the pairs handled by this crate.
pub const STAGES: usize = 4;

/// A coupled implicit/explicit Runge-Kutta coefficient pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImexTableau {
    /// Diagonally implicit coefficients, rows = stages.
    pub a_im: [[f64; STAGES]; STAGES],
    /// Explicit coefficients, strictly lower triangular.
    pub a_ex: [[f64; STAGES]; STAGES],
    /// Quadrature weights applied to the implicit (diffusion) stage values.
    pub b: [f64; STAGES],
    /// Quadrature weights applied to the explicit (nonlinear) stage values.
    pub b_tilde: [f64; STAGES],
    /// Implicit abscissae (row sums of `a_im`).
    pub c: [f64; STAGES],
    /// Explicit abscissae (row sums of `a_ex`); stage time arguments.
    pub c_tilde: [f64; STAGES],
}

/// The built-in third-order pair. Coefficients are stated to eight decimal
/// places, so row sums and order conditions hold to about 1e−8 rather than to
/// machine precision; the weights b coincide with the last implicit row, which
/// makes the diffusion-only update stiffly accurate (it returns the last
/// stage).
pub fn reference() -> ImexTableau {
    ImexTableau {
        a_im: [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.625, 0.0, 0.0],
            [0.0, -0.23587004, 0.54934357, 0.0],
            [0.0, 0.085, 0.68187464, 0.23312535],
        ],
        a_ex: [
            [0.0, 0.0, 0.0, 0.0],
            [0.625, 0.0, 0.0, 0.0],
            [0.17055712, 0.14291640, 0.0, 0.0],
            [0.0, 0.45, 0.55, 0.0],
        ],
        b: [0.0, 0.085, 0.68187464, 0.23312535],
        b_tilde: [0.0, 0.085, 0.68187464, 0.23312535],
        c: [0.0, 0.625, 0.31347352, 1.0],
        c_tilde: [0.0, 0.625, 0.31347352, 1.0],
    }
}

/// Shape and consistency diagnostics for a coefficient pair.
#[derive(Clone, Copy, Debug)]
pub struct StructureReport {
    /// Entries that must vanish by shape (upper triangle of A including a₁₁,
    /// lower-or-diagonal violations of Ã) all do.
    pub shape_ok: bool,
    /// Implicit diagonal entries of stages 2..4 are nonnegative, so every
    /// stage solve is a well-posed Helmholtz problem.
    pub diag_nonnegative: bool,
    /// max_i |Σ_j a_im[i][j] − c_i|.
    pub max_row_defect_im: f64,
    /// max_i |Σ_j a_ex[i][j] − c̃_i|.
    pub max_row_defect_ex: f64,
}

impl StructureReport {
    pub fn passes(&self, row_tol: f64) -> bool {
        self.shape_ok
            && self.diag_nonnegative
            && self.max_row_defect_im <= row_tol
            && self.max_row_defect_ex <= row_tol
    }
}

impl ImexTableau {
    pub fn structure_report(&self) -> StructureReport {
        let mut shape_ok = true;
        for i in 0..STAGES {
            for j in 0..STAGES {
                if j > i && self.a_im[i][j] != 0.0 {
                    shape_ok = false;
                }
                if j >= i && self.a_ex[i][j] != 0.0 {
                    shape_ok = false;
                }
            }
        }
        if self.a_im[0][0] != 0.0 {
            shape_ok = false;
        }
        let diag_nonnegative = (1..STAGES).all(|i| self.a_im[i][i] >= 0.0);
        let mut d_im: f64 = 0.0;
        let mut d_ex: f64 = 0.0;
        for i in 0..STAGES {
            let sum_im: f64 = self.a_im[i].iter().sum();
            let sum_ex: f64 = self.a_ex[i].iter().sum();
            d_im = d_im.max((sum_im - self.c[i]).abs());
            d_ex = d_ex.max((sum_ex - self.c_tilde[i]).abs());
        }
        StructureReport {
            shape_ok,
            diag_nonnegative,
            max_row_defect_im: d_im,
            max_row_defect_ex: d_ex,
        }
    }

    /// Refuse pairs whose shape is wrong, whose implicit diagonal is
    /// negative, or whose row sums are inconsistent beyond `row_tol`.
    pub fn validate(&self, row_tol: f64) -> Result<()> {
        let r = self.structure_report();
        if !r.shape_ok {
            return Err(Error::InvalidTableau(
                "triangular shape violated (implicit must be lower triangular with a11 = 0, \
                 explicit strictly lower triangular)"
                    .into(),
            ));
        }
        if !r.diag_nonnegative {
            return Err(Error::InvalidTableau(
                "implicit diagonal has a negative entry; stage solves would be ill-posed".into(),
            ));
        }
        if r.max_row_defect_im > row_tol || r.max_row_defect_ex > row_tol {
            return Err(Error::InvalidTableau(format!(
                "row sums inconsistent with abscissae (implicit defect {:.3e}, explicit defect \
                 {:.3e}, tolerance {:.3e})",
                r.max_row_defect_im, r.max_row_defect_ex, row_tol
            )));
        }
        Ok(())
    }
}

/// One evaluated order condition: `lhs` is the coefficient contraction,
/// `rhs` the value required for formal accuracy.
#[derive(Clone, Debug)]
pub struct OrderCondition {
    pub name: String,
    pub order: u8,
    pub lhs: f64,
    pub rhs: f64,
}

impl OrderCondition {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Evaluate every coupled order condition of the requested order and below
/// (`order` ∈ 1..=3). Names use a `t` suffix for the explicit-slot arrays, so
/// `bt.A.ct` is Σ b̃ᵢ Aᵢⱼ c̃ⱼ.
pub fn order_residuals(t: &ImexTableau, order: u8) -> Vec<OrderCondition> {
    assert!((1..=3).contains(&order), "supported orders are 1..=3");
    let weights = [("b", &t.b), ("bt", &t.b_tilde)];
    let abscissae = [("c", &t.c), ("ct", &t.c_tilde)];
    let matrices = [("A", &t.a_im), ("At", &t.a_ex)];
    let mut out = Vec::new();

    for (wn, w) in weights {
        out.push(OrderCondition {
            name: format!("sum({wn})"),
            order: 1,
            lhs: w.iter().sum(),
            rhs: 1.0,
        });
    }
    if order >= 2 {
        for (wn, w) in weights {
            for (zn, z) in abscissae {
                let lhs = (0..STAGES).map(|i| w[i] * z[i]).sum();
                out.push(OrderCondition {
                    name: format!("{wn}.{zn}"),
                    order: 2,
                    lhs,
                    rhs: 0.5,
                });
            }
        }
    }
    if order >= 3 {
        // Unordered abscissa pairs {u, v} ⊆ {c, ct}.
        let pairs = [(0usize, 0usize), (0, 1), (1, 1)];
        for (wn, w) in weights {
            for &(ui, vi) in &pairs {
                let (un, u) = abscissae[ui];
                let (vn, v) = abscissae[vi];
                let lhs = (0..STAGES).map(|i| w[i] * u[i] * v[i]).sum();
                out.push(OrderCondition {
                    name: format!("{wn}.{un}.{vn}"),
                    order: 3,
                    lhs,
                    rhs: 1.0 / 3.0,
                });
            }
        }
        for (wn, w) in weights {
            for (mn, m) in matrices {
                for (zn, z) in abscissae {
                    let mut lhs = 0.0;
                    for i in 0..STAGES {
                        for j in 0..STAGES {
                            lhs += w[i] * m[i][j] * z[j];
                        }
                    }
                    out.push(OrderCondition {
                        name: format!("{wn}.{mn}.{zn}"),
                        order: 3,
                        lhs,
                        rhs: 1.0 / 6.0,
                    });
                }
            }
        }
    }
    out
}

/// Largest residual among all conditions of the requested order and below.
pub fn max_order_residual(t: &ImexTableau, order: u8) -> f64 {
    order_residuals(t, order)
        .iter()
        .map(|c| c.residual())
        .fold(0.0, f64::max)
}

/// The three per-stage energy slacks of the implicit matrix (see the module
/// docs). All must be positive for the unconditional diffusion bound.
pub fn stability_margins(t: &ImexTableau) -> [f64; 3] {
    let a = &t.a_im;
    let d21 = (a[2][1] - a[1][1]).abs();
    let d32 = (a[3][1] - a[2][1]).abs();
    let d33 = (a[3][2] - a[2][2]).abs();
    [
        2.0 * a[1][1] - d21 - d32,
        2.0 * a[2][2] - d21 - d33,
        2.0 * a[3][3] - d32 - d33,
    ]
}

pub fn min_stability_margin(t: &ImexTableau) -> f64 {
    stability_margins(t)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Parse the key = value text format:
///
/// ```text
/// s = 4
/// c = 0 0.625 0.31347352 1
/// a_implicit = 0 0 0 0            # one line per row, in row order
/// ...
/// a_explicit = 0 0 0 0
/// ...
/// b = 0 0.085 0.68187464 0.23312535
/// b_tilde = ...                   # optional, defaults to b
/// c_tilde = ...                   # optional, defaults to c
/// ```
///
/// `#` starts a comment, blank lines are ignored, and unknown keys are
/// rejected.
pub fn parse(text: &str) -> Result<ImexTableau> {
    let mut s: Option<usize> = None;
    let mut rows_im: Vec<[f64; STAGES]> = Vec::new();
    let mut rows_ex: Vec<[f64; STAGES]> = Vec::new();
    let mut b: Option<[f64; STAGES]> = None;
    let mut bt: Option<[f64; STAGES]> = None;
    let mut c: Option<[f64; STAGES]> = None;
    let mut ct: Option<[f64; STAGES]> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ln = ln + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::TableauParse(format!("line {ln}: expected `key = values`")))?;
        let key = key.trim();
        let value = value.trim();
        let parse_row = |ln: usize, value: &str| -> Result<[f64; STAGES]> {
            let vals: Vec<f64> = value
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        Error::TableauParse(format!("line {ln}: `{v}` is not a number"))
                    })
                })
                .collect::<Result<_>>()?;
            vals.try_into().map_err(|v: Vec<f64>| {
                Error::TableauParse(format!(
                    "line {ln}: expected {STAGES} values, got {}",
                    v.len()
                ))
            })
        };
        let set_once =
            |ln: usize, key: &str, slot: &mut Option<[f64; STAGES]>, value: &str| -> Result<()> {
                if slot.is_some() {
                    return Err(Error::TableauParse(format!(
                        "line {ln}: duplicate key `{key}`"
                    )));
                }
                *slot = Some(parse_row(ln, value)?);
                Ok(())
            };
        match key {
            "s" => {
                if s.is_some() {
                    return Err(Error::TableauParse(format!("line {ln}: duplicate key `s`")));
                }
                let v: usize = value.parse().map_err(|_| {
                    Error::TableauParse(format!("line {ln}: `{value}` is not a stage count"))
                })?;
                if v != STAGES {
                    return Err(Error::TableauParse(format!(
                        "line {ln}: only {STAGES}-stage pairs are supported, got s = {v}"
                    )));
                }
                s = Some(v);
            }
            "a_implicit" => rows_im.push(parse_row(ln, value)?),
            "a_explicit" => rows_ex.push(parse_row(ln, value)?),
            "b" => set_once(ln, "b", &mut b, value)?,
            "b_tilde" => set_once(ln, "b_tilde", &mut bt, value)?,
            "c" => set_once(ln, "c", &mut c, value)?,
            "c_tilde" => set_once(ln, "c_tilde", &mut ct, value)?,
            other => {
                return Err(Error::TableauParse(format!(
                    "line {ln}: unknown key `{other}`"
                )))
            }
        }
    }

    if s.is_none() {
        return Err(Error::TableauParse("missing `s = 4`".into()));
    }
    let to_matrix = |rows: Vec<[f64; STAGES]>, what: &str| -> Result<[[f64; STAGES]; STAGES]> {
        let n = rows.len();
        rows.try_into()
            .map_err(|_| Error::TableauParse(format!("expected {STAGES} `{what}` rows, got {n}")))
    };
    let a_im = to_matrix(rows_im, "a_implicit")?;
    let a_ex = to_matrix(rows_ex, "a_explicit")?;
    let b = b.ok_or_else(|| Error::TableauParse("missing `b`".into()))?;
    let c = c.ok_or_else(|| Error::TableauParse("missing `c`".into()))?;
    Ok(ImexTableau {
        a_im,
        a_ex,
        b,
        b_tilde: bt.unwrap_or(b),
        c,
        c_tilde: ct.unwrap_or(c),
    })
}

/// Serialize in the format accepted by [`parse`], with floats at 17
/// significant digits so a round trip reproduces the values exactly.
pub fn to_text(t: &ImexTableau) -> String {
    let mut out = String::new();
    let row = |vals: &[f64; STAGES]| {
        vals.iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "s = {STAGES}").unwrap();
    writeln!(out, "c = {}", row(&t.c)).unwrap();
    writeln!(out, "c_tilde = {}", row(&t.c_tilde)).unwrap();
    for r in &t.a_im {
        writeln!(out, "a_implicit = {}", row(r)).unwrap();
    }
    for r in &t.a_ex {
        writeln!(out, "a_explicit = {}", row(r)).unwrap();
    }
    writeln!(out, "b = {}", row(&t.b)).unwrap();
    writeln!(out, "b_tilde = {}", row(&t.b_tilde)).unwrap();
    out
}

// ---------------------------------------------------------------------------
// Numerical search for third-order pairs with positive margins.
//
// The search works in a reduced family: b̃ = b, c̃ = c, b₁ = 0, and row sums
// built in exactly, which leaves twelve free parameters
// (c₂, c₃, c₄, b₂, b₃, b₄, a₃₂, a₄₂, a₄₃, ã₃₂, ã₄₂, ã₄₃). Within that family
// the twenty coupled conditions through order 3 collapse to five independent
// equations (Σb = 1, Σbc = 1/2, Σbc² = 1/3, ΣbÃc = 1/6, ΣbAc = 1/6). A
// Levenberg-Marquardt iteration drives those five residuals to zero while a
// hinge penalty max(0, δ − mᵢ) keeps each stability margin above δ = 0.01.
// ---------------------------------------------------------------------------

const NPAR: usize = 12;
const NRES: usize = 8;
const MARGIN_FLOOR: f64 = 0.01;

fn build_from_params(x: &[f64; NPAR]) -> ImexTableau {
    let [c2, c3, c4, b2, b3, b4, a32, a42, a43, e32, e42, e43] = *x;
    let b = [0.0, b2, b3, b4];
    let c = [0.0, c2, c3, c4];
    ImexTableau {
        a_im: [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, c2, 0.0, 0.0],
            [0.0, a32, c3 - a32, 0.0],
            [0.0, a42, a43, c4 - a42 - a43],
        ],
        a_ex: [
            [0.0, 0.0, 0.0, 0.0],
            [c2, 0.0, 0.0, 0.0],
            [c3 - e32, e32, 0.0, 0.0],
            [c4 - e42 - e43, e42, e43, 0.0],
        ],
        b,
        b_tilde: b,
        c,
        c_tilde: c,
    }
}

fn params_from(t: &ImexTableau) -> Result<[f64; NPAR]> {
    if t.b[0].abs() > 1e-12 {
        return Err(Error::InvalidTableau(
            "search family fixes b1 = 0; cannot start from a pair with b1 != 0".into(),
        ));
    }
    Ok([
        t.c[1],
        t.c[2],
        t.c[3],
        t.b[1],
        t.b[2],
        t.b[3],
        t.a_im[2][1],
        t.a_im[3][1],
        t.a_im[3][2],
        t.a_ex[2][1],
        t.a_ex[3][1],
        t.a_ex[3][2],
    ])
}

fn search_residuals(x: &[f64; NPAR]) -> [f64; NRES] {
    let t = build_from_params(x);
    let contract = |m: &[[f64; STAGES]; STAGES]| -> f64 {
        let mut acc = 0.0;
        for i in 0..STAGES {
            for j in 0..STAGES {
                acc += t.b[i] * m[i][j] * t.c[j];
            }
        }
        acc
    };
    let sum_b: f64 = t.b.iter().sum();
    let sum_bc: f64 = (0..STAGES).map(|i| t.b[i] * t.c[i]).sum();
    let sum_bcc: f64 = (0..STAGES).map(|i| t.b[i] * t.c[i] * t.c[i]).sum();
    let m = stability_margins(&t);
    [
        sum_b - 1.0,
        sum_bc - 0.5,
        sum_bcc - 1.0 / 3.0,
        contract(&t.a_ex) - 1.0 / 6.0,
        contract(&t.a_im) - 1.0 / 6.0,
        (MARGIN_FLOOR - m[0]).max(0.0),
        (MARGIN_FLOOR - m[1]).max(0.0),
        (MARGIN_FLOOR - m[2]).max(0.0),
    ]
}

fn cost(r: &[f64; NRES]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solve a dense n×n system in place by Gaussian elimination with partial
/// pivoting; returns false if the matrix is numerically singular.
fn solve_linear(n: usize, a: &mut [f64], rhs: &mut [f64]) -> bool {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            rhs.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = rhs[col];
        for k in col + 1..n {
            v -= a[col * n + k] * rhs[k];
        }
        rhs[col] = v / a[col * n + col];
    }
    true
}

fn jacobian(x: &[f64; NPAR]) -> [[f64; NPAR]; NRES] {
    let mut j = [[0.0; NPAR]; NRES];
    for p in 0..NPAR {
        let hstep = 1e-7 * (1.0 + x[p].abs());
        let mut xp = *x;
        let mut xm = *x;
        xp[p] += hstep;
        xm[p] -= hstep;
        let rp = search_residuals(&xp);
        let rm = search_residuals(&xm);
        for r in 0..NRES {
            j[r][p] = (rp[r] - rm[r]) / (2.0 * hstep);
        }
    }
    j
}

fn converged(r: &[f64; NRES]) -> bool {
    r[..5].iter().all(|v| v.abs() <= 1e-12) && r[5..].iter().all(|v| *v == 0.0)
}

fn lm_refine(mut x: [f64; NPAR]) -> ([f64; NPAR], bool) {
    let mut r = search_residuals(&x);
    let mut lambda = 1e-3;
    for _ in 0..250 {
        if converged(&r) {
            return (x, true);
        }
        let j = jacobian(&x);
        let mut jtj = [0.0; NPAR * NPAR];
        let mut jtr = [0.0; NPAR];
        for a in 0..NPAR {
            for b in 0..NPAR {
                let mut acc = 0.0;
                for k in 0..NRES {
                    acc += j[k][a] * j[k][b];
                }
                jtj[a * NPAR + b] = acc;
            }
            for k in 0..NRES {
                jtr[a] += j[k][a] * r[k];
            }
        }
        let mut improved = false;
        while lambda < 1e9 {
            let mut m = jtj;
            for d in 0..NPAR {
                m[d * NPAR + d] += lambda * (jtj[d * NPAR + d] + 1e-12);
            }
            let mut step = jtr;
            for v in step.iter_mut() {
                *v = -*v;
            }
            if solve_linear(NPAR, &mut m, &mut step) {
                let mut xn = x;
                for p in 0..NPAR {
                    xn[p] += step[p];
                }
                let rn = search_residuals(&xn);
                if cost(&rn) < cost(&r) {
                    x = xn;
                    r = rn;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let ok = converged(&r);
    (x, ok)
}

fn accept(x: &[f64; NPAR]) -> Option<ImexTableau> {
    let t = build_from_params(x);
    if t.validate(1e-9).is_err() {
        return None;
    }
    if min_stability_margin(&t) <= 0.0 {
        return None;
    }
    if max_order_residual(&t, 3) > 1e-10 {
        return None;
    }
    Some(t)
}

/// Search for a third-order pair with positive stability margins, restarting
/// from seeded random initial guesses until one converges (at most 40
/// attempts). Deterministic for a fixed seed.
pub fn search(seed: u64) -> Result<ImexTableau> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = 40;
    for _ in 0..attempts {
        let x0 = [
            rng.gen_range(0.2..0.8),  // c2
            rng.gen_range(0.2..0.9),  // c3
            rng.gen_range(0.9..1.1),  // c4
            rng.gen_range(0.0..0.7),  // b2
            rng.gen_range(0.0..0.7),  // b3
            rng.gen_range(0.1..0.5),  // b4
            rng.gen_range(-0.5..0.5), // a32
            rng.gen_range(-0.3..0.5), // a42
            rng.gen_range(0.0..0.9),  // a43
            rng.gen_range(-0.5..0.5), // e32
            rng.gen_range(0.0..0.8),  // e42
            rng.gen_range(0.0..0.8),  // e43
        ];
        let (x, ok) = lm_refine(x0);
        if !ok {
            continue;
        }
        if let Some(t) = accept(&x) {
            return Ok(t);
        }
    }
    Err(Error::SearchFailed { attempts })
}

/// Polish an existing pair inside the search family (b̃ = b, c̃ = c, b₁ = 0).
/// Starting from a pair that already satisfies the conditions approximately
/// converges to a nearby exact solution.
pub fn search_from(guess: &ImexTableau) -> Result<ImexTableau> {
    let x0 = params_from(guess)?;
    let (x, ok) = lm_refine(x0);
    if !ok {
        return Err(Error::SearchFailed { attempts: 1 });
    }
    accept(&x).ok_or(Error::SearchFailed { attempts: 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_margins_are_frozen() {
        let m = stability_margins(&reference());
        let want = [0.06825992, 0.10528603, 0.01284959];
        for (got, want) in m.iter().zip(want.iter()) {
            assert!((got - want).abs() <= 1e-10, "{m:?}");
        }
    }

    #[test]
    fn reference_structure_is_consistent_to_rounding() {
        let r = reference().structure_report();
        assert!(r.shape_ok);
        assert!(r.diag_nonnegative);
        // Coefficients are stated to eight decimals; two row sums are off by
        // exactly one unit in the eighth place.
        assert!(r.max_row_defect_im <= 1.1e-8, "{r:?}");
        assert!(r.max_row_defect_im >= 0.9e-8, "{r:?}");
        assert!(r.max_row_defect_ex <= 1e-12, "{r:?}");
        reference().validate(1e-7).unwrap();
    }

    #[test]
    fn reference_order_residuals_sit_at_rounding_level() {
        let t = reference();
        let conds = order_residuals(&t, 3);
        assert_eq!(conds.len(), 20);
        let by_name = |n: &str| -> f64 {
            conds
                .iter()
                .find(|c| c.name == n)
                .unwrap_or_else(|| panic!("missing condition {n}"))
                .residual()
        };
        // Σb = 0.99999999 exactly.
        assert!((by_name("sum(b)") - 1e-8).abs() <= 1e-12);
        assert!((by_name("sum(bt)") - 1e-8).abs() <= 1e-12);
        // Σbc − 1/2 = −6.40e−9 from the printed digits.
        let r2 = by_name("b.c");
        assert!((6.3e-9..=6.5e-9).contains(&r2), "{r2}");
        // Third-order contractions: the implicit one lands within ~1e−11,
        // the explicit one within ~1e−9, the abscissa quadratics within
        // ~6e−9. Cap each family a little above its measured level.
        assert!(by_name("b.A.c") <= 5e-11);
        assert!(by_name("b.At.c") <= 1.5e-9);
        assert!(by_name("b.c.c") <= 1e-8);
        assert!(max_order_residual(&t, 3) <= 1.1e-8);
    }

    #[test]
    fn order_condition_census_and_targets() {
        let t = reference();
        assert_eq!(order_residuals(&t, 1).len(), 2);
        assert_eq!(order_residuals(&t, 2).len(), 6);
        let all = order_residuals(&t, 3);
        assert_eq!(all.len(), 20);
        assert_eq!(all.iter().filter(|c| c.order == 3).count(), 14);
        for c in &all {
            let want = match c.order {
                1 => 1.0,
                2 => 0.5,
                3 => {
                    if c.name.matches('.').count() == 2 && !c.name.contains('A') {
                        1.0 / 3.0
                    } else {
                        1.0 / 6.0
                    }
                }
                _ => unreachable!(),
            };
            assert_eq!(c.rhs, want, "{}", c.name);
        }
    }

    // A single classical fourth-order tableau placed in both slots satisfies
    // every coupled condition exactly, which pins the contraction formulas
    // (index order, matrix orientation) to machine precision.
    #[test]
    fn classical_tableau_in_both_slots_is_exact() {
        let a = [
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ];
        let b = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
        let c = [0.0, 0.5, 0.5, 1.0];
        let t = ImexTableau {
            a_im: a,
            a_ex: a,
            b,
            b_tilde: b,
            c,
            c_tilde: c,
        };
        for cond in order_residuals(&t, 3) {
            assert!(
                cond.residual() <= 1e-15,
                "{}: {}",
                cond.name,
                cond.residual()
            );
        }
    }

    #[test]
    fn perturbed_weight_shows_up_as_first_order_residual() {
        let mut t = reference();
        t.b[1] += 0.01;
        let conds = order_residuals(&t, 1);
        let r = conds
            .iter()
            .find(|c| c.name == "sum(b)")
            .unwrap()
            .residual();
        // The unperturbed sum already carries the 1e-8 rounding defect.
        assert!((r - 0.01).abs() <= 2e-8, "{r}");
    }

    #[test]
    fn negated_diagonal_is_rejected() {
        let mut t = reference();
        t.a_im[2][2] = -t.a_im[2][2];
        assert!(t.validate(1e-7).is_err());
        assert!(!t.structure_report().diag_nonnegative);
    }

    #[test]
    fn weights_equal_last_implicit_row() {
        let t = reference();
        assert_eq!(t.b, t.a_im[STAGES - 1]);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = reference();
        let text = to_text(&t);
        let back = parse(&text).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn parse_accepts_comments_and_defaults() {
        let text = "\
# four stages
s = 4
c = 0 0.5 0.5 1   # abscissae
a_implicit = 0 0 0 0
a_implicit = 0.25 0.25 0 0
a_implicit = 0 0.5 0 0
a_implicit = 0 0 0.5 0.5
a_explicit = 0 0 0 0
a_explicit = 0.5 0 0 0
a_explicit = 0 0.5 0 0
a_explicit = 0 0 1 0
b = 0.16 0.34 0.34 0.16
";
        let t = parse(text).unwrap();
        assert_eq!(t.b_tilde, t.b);
        assert_eq!(t.c_tilde, t.c);
        assert_eq!(t.a_im[1][0], 0.25);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(parse("").is_err());
        assert!(parse("s = 3\n").is_err());
        assert!(parse("s = 4\nwhat = 1 2 3 4\n").is_err());
        assert!(parse("s = 4\nb = 1 2 3\n").is_err());
        assert!(parse("s = 4\nb = 1 2 3 x\n").is_err());
        // Wrong number of matrix rows.
        let text = "s = 4\nc = 0 0 0 0\nb = 0 0 0 1\na_implicit = 0 0 0 0\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn polish_stays_near_the_reference() {
        let t = reference();
        let polished = search_from(&t).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6;
        for i in 0..STAGES {
            assert!(close(polished.b[i], t.b[i]), "b[{i}]");
            assert!(close(polished.c[i], t.c[i]), "c[{i}]");
            for j in 0..STAGES {
                assert!(close(polished.a_im[i][j], t.a_im[i][j]), "a_im[{i}][{j}]");
                assert!(close(polished.a_ex[i][j], t.a_ex[i][j]), "a_ex[{i}][{j}]");
            }
        }
        assert!(max_order_residual(&polished, 3) <= 1e-11);
        assert!(min_stability_margin(&polished) > 0.0);
    }

    #[test]
    fn search_finds_a_valid_pair() {
        let t = search(3).unwrap();
        t.validate(1e-9).unwrap();
        assert!(max_order_residual(&t, 3) <= 1e-10);
        assert!(min_stability_margin(&t) > 0.0);
    }
}
