//! Dense matrix exponential via Padé approximation with scaling and squaring.
//!
//! Degree is chosen from the 1-norm of the argument (3, 5, 7, 9, or 13);
//! arguments above the degree-13 threshold are halved until they fit and the
//! result squared back.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
#[allow(clippy::excessive_precision)]
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum())
        .fold(0.0f64, f64::max)
}

/// (U, V) for the odd/even split of a low-degree Padé numerator.
fn pade_uv(m: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let m2 = m * m;
    let mut even = DMatrix::<f64>::identity(n, n) * b[0];
    let mut odd = DMatrix::<f64>::identity(n, n) * b[1];
    let mut power = DMatrix::<f64>::identity(n, n);
    for k in (2..b.len()).step_by(2) {
        power = &power * &m2;
        even += &power * b[k];
        if k + 1 < b.len() {
            odd += &power * b[k + 1];
        }
    }
    (m * odd, even)
}

fn pade_13_uv(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let m2 = m * m;
    let m4 = &m2 * &m2;
    let m6 = &m2 * &m4;
    let b = &B13;
    let u_inner = &m6 * (&m6 * b[13] + &m4 * b[11] + &m2 * b[9])
        + &m6 * b[7]
        + &m4 * b[5]
        + &m2 * b[3]
        + &identity * b[1];
    let v = &m6 * (&m6 * b[12] + &m4 * b[10] + &m2 * b[8])
        + &m6 * b[6]
        + &m4 * b[4]
        + &m2 * b[2]
        + &identity * b[0];
    (m * u_inner, v)
}

/// exp(M) for a square real matrix.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "matrix exponential needs a square argument, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential argument".into()));
    }
    let norm = one_norm(m);
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_uv(m, &B3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_uv(m, &B5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_uv(m, &B7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_uv(m, &B9);
        (u, v, 0)
    } else {
        let squarings = ((norm / THETA_13).log2().ceil().max(0.0)) as u32;
        let scaled = m / 2f64.powi(squarings as i32);
        let (u, v) = pade_13_uv(&scaled);
        (u, v, squarings)
    };
    let mut result = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::NonFinite("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}
