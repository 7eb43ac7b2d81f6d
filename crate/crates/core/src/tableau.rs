//! Stochastic Runge-Kutta tableaus: the diagonally implicit family built from
//! weight vectors, and the algebraic conditions under which a tableau
//! preserves the symplectic structure almost surely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficients of an s-stage stochastic Runge-Kutta method with m noises:
/// one drift matrix A⁰, one diffusion matrix Aʳ per noise, and matching
/// weight vectors b⁰, bʳ.
#[derive(Debug, Clone, PartialEq)]
pub struct SrkTableau {
    s: usize,
    m: usize,
    a0: DMatrix<f64>,
    ar: Vec<DMatrix<f64>>,
    b0: DVector<f64>,
    br: Vec<DVector<f64>>,
}

/// Residuals of the three symplecticity condition families:
///
/// ```text
/// b_i⁰ b_j⁰ − b_i⁰ a_ij⁰ − b_j⁰ a_ji⁰ = 0
/// b_i⁰ b_jʳ − b_i⁰ a_ijʳ − b_jʳ a_ji⁰ = 0
/// b_iʳ b_jᶻ − b_iʳ a_ijᶻ − b_jᶻ a_jiʳ = 0
/// ```
#[derive(Debug, Clone, Copy)]
pub struct SymplecticReport {
    pub residual_drift: f64,
    pub residual_mixed: f64,
    pub residual_diffusion: f64,
    pub tolerance: f64,
    pub passes: bool,
}

impl SymplecticReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_drift
            .max(self.residual_mixed)
            .max(self.residual_diffusion)
    }
}

impl SrkTableau {
    pub fn new(
        a0: DMatrix<f64>,
        ar: Vec<DMatrix<f64>>,
        b0: DVector<f64>,
        br: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let s = b0.len();
        if s == 0 {
            return Err(Error::InvalidTableau("stage count must be ≥ 1".into()));
        }
        let m = br.len();
        if m == 0 {
            return Err(Error::InvalidTableau("noise count must be ≥ 1".into()));
        }
        if ar.len() != m {
            return Err(Error::InvalidTableau(format!(
                "{} diffusion matrices for {} weight vectors",
                ar.len(),
                m
            )));
        }
        let square = |mat: &DMatrix<f64>| mat.nrows() == s && mat.ncols() == s;
        if !square(&a0) || !ar.iter().all(square) || br.iter().any(|b| b.len() != s) {
            return Err(Error::InvalidTableau(format!(
                "coefficient shapes inconsistent with s = {s}"
            )));
        }
        let finite = a0.iter().all(|v| v.is_finite())
            && ar.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && b0.iter().all(|v| v.is_finite())
            && br.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidTableau("non-finite coefficient".into()));
        }
        Ok(SrkTableau { s, m, a0, ar, b0, br })
    }

    /// The diagonally implicit family: given weight vectors b⁰..bᵐ (each
    /// summing to 1), every coefficient matrix is
    ///
    /// ```text
    /// a_ij = b_j/2 (i = j),  b_j (i > j),  0 (i < j)
    /// ```
    ///
    /// which composes the step from implicit-midpoint substeps and satisfies
    /// the symplecticity conditions exactly.
    pub fn dirk(weights: &[Vec<f64>]) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidWeights(
                "need a drift weight vector plus one per noise".into(),
            ));
        }
        let s = weights[0].len();
        if s == 0 {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.len() != s {
                return Err(Error::InvalidWeights(format!(
                    "weight vector {l} has length {}, expected {s}",
                    w.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-14 {
                return Err(Error::InvalidWeights(format!(
                    "weight vector {l} sums to {sum:.17}, expected 1"
                )));
            }
        }
        let build = |w: &[f64]| {
            DMatrix::from_fn(s, s, |i, j| {
                if i == j {
                    w[j] / 2.0
                } else if i > j {
                    w[j]
                } else {
                    0.0
                }
            })
        };
        let a0 = build(&weights[0]);
        let ar = weights[1..].iter().map(|w| build(w)).collect();
        let b0 = DVector::from_row_slice(&weights[0]);
        let br = weights[1..]
            .iter()
            .map(|w| DVector::from_row_slice(w))
            .collect();
        SrkTableau::new(a0, ar, b0, br)
    }

    /// Explicit Euler written as a one-stage tableau (a = 0, b = 1 for every
    /// level). Does not satisfy the symplecticity conditions; used as a
    /// negative control.
    pub fn explicit_euler(m: usize) -> Self {
        let a0 = DMatrix::zeros(1, 1);
        let ar = vec![DMatrix::zeros(1, 1); m];
        let b0 = DVector::from_element(1, 1.0);
        let br = vec![DVector::from_element(1, 1.0); m];
        SrkTableau::new(a0, ar, b0, br).expect("static shape")
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn noise_count(&self) -> usize {
        self.m
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn ar(&self, r: usize) -> &DMatrix<f64> {
        &self.ar[r]
    }

    pub fn b0(&self) -> &DVector<f64> {
        &self.b0
    }

    pub fn br(&self, r: usize) -> &DVector<f64> {
        &self.br[r]
    }

    /// True when every coefficient matrix has exact zeros strictly above the
    /// diagonal, so stages can be solved one at a time.
    pub fn is_lower_triangular(&self) -> bool {
        let lower = |mat: &DMatrix<f64>| {
            (0..self.s).all(|i| ((i + 1)..self.s).all(|j| mat[(i, j)] == 0.0))
        };
        lower(&self.a0) && self.ar.iter().all(lower)
    }

    /// Negative weights are accepted but worth surfacing to the user.
    pub fn weight_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.b0.iter().any(|v| *v < 0.0) {
            warnings.push("drift weights contain negative entries".to_string());
        }
        for (r, b) in self.br.iter().enumerate() {
            if b.iter().any(|v| *v < 0.0) {
                warnings.push(format!("diffusion weights {} contain negative entries", r + 1));
            }
        }
        warnings
    }

    /// Plain-text form: `s m`, then row-major A⁰, A¹..Aᵐ, then b⁰, b¹..bᵐ.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.s, self.m));
        let mut push_matrix = |mat: &DMatrix<f64>| {
            for i in 0..self.s {
                let row: Vec<String> =
                    (0..self.s).map(|j| format!("{:.17e}", mat[(i, j)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        };
        push_matrix(&self.a0);
        for r in 0..self.m {
            push_matrix(&self.ar[r]);
        }
        for b in std::iter::once(&self.b0).chain(self.br.iter()) {
            let row: Vec<String> = b.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .filter(|line| !line.trim_start().starts_with('#'))
            .flat_map(|line| line.split_whitespace());
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("tableau text ended before {what}")))
        };
        let s: usize = next("stage count")?
            .parse()
            .map_err(|e| Error::Parse(format!("stage count: {e}")))?;
        let m: usize = next("noise count")?
            .parse()
            .map_err(|e| Error::Parse(format!("noise count: {e}")))?;
        if s == 0 || m == 0 {
            return Err(Error::Parse(format!("degenerate tableau shape {s}x{m}")));
        }
        let mut floats = |count: usize, what: &str| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    next(what)?
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{what}: {e}")))
                })
                .collect()
        };
        let a0 = DMatrix::from_row_slice(s, s, &floats(s * s, "drift matrix")?);
        let mut ar = Vec::with_capacity(m);
        for r in 0..m {
            ar.push(DMatrix::from_row_slice(
                s,
                s,
                &floats(s * s, &format!("diffusion matrix {}", r + 1))?,
            ));
        }
        let b0 = DVector::from_row_slice(&floats(s, "drift weights")?);
        let mut br = Vec::with_capacity(m);
        for r in 0..m {
            br.push(DVector::from_row_slice(&floats(
                s,
                &format!("diffusion weights {}", r + 1),
            )?));
        }
        if tokens.next().is_some() {
            return Err(Error::Parse("trailing tokens after tableau".into()));
        }
        SrkTableau::new(a0, ar, b0, br)
    }
}

/// Evaluate the three symplecticity condition families over all index pairs
/// and noise pairs.
pub fn check_symplectic_conditions(t: &SrkTableau, tol: f64) -> SymplecticReport {
    let s = t.s;
    let m = t.m;
    let mut residual_drift = 0.0f64;
    let mut residual_mixed = 0.0f64;
    let mut residual_diffusion = 0.0f64;
    for i in 0..s {
        for j in 0..s {
            let r00 = t.b0[i] * t.b0[j] - t.b0[i] * t.a0[(i, j)] - t.b0[j] * t.a0[(j, i)];
            residual_drift = residual_drift.max(r00.abs());
            for r in 0..m {
                let r0r =
                    t.b0[i] * t.br[r][j] - t.b0[i] * t.ar[r][(i, j)] - t.br[r][j] * t.a0[(j, i)];
                residual_mixed = residual_mixed.max(r0r.abs());
                for z in 0..m {
                    let rrz = t.br[r][i] * t.br[z][j]
                        - t.br[r][i] * t.ar[z][(i, j)]
                        - t.br[z][j] * t.ar[r][(j, i)];
                    residual_diffusion = residual_diffusion.max(rrz.abs());
                }
            }
        }
    }
    let passes = residual_drift <= tol && residual_mixed <= tol && residual_diffusion <= tol;
    SymplecticReport {
        residual_drift,
        residual_mixed,
        residual_diffusion,
        tolerance: tol,
        passes,
    }
}
