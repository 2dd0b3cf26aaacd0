use super::{ComplexMatrix, C64};
use crate::error::{Error, Result};

const TRIM_RELATIVE: f64 = 1e-14;
const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;
const POLISH_STEPS: usize = 3;

/// Horner evaluation of a polynomial given in ascending powers.
pub fn eval_poly(coeffs: &[C64], z: C64) -> C64 {
    coeffs
        .iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn eval_with_derivative(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of the polynomial `Σ coeffs[k] z^k`.
///
/// Highest-power coefficients with modulus below `1e-14 · max|coeff|` are
/// trimmed first; the roots are the eigenvalues of the balanced companion
/// matrix of the trimmed polynomial, each polished by a few guarded Newton
/// steps.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    if coeffs.len() < 2 {
        return Err(Error::InvalidInput(
            "polynomial needs at least two coefficients".into(),
        ));
    }
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite polynomial coefficient".into()));
    }
    let scale = coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.norm()));
    if scale == 0.0 {
        return Err(Error::InvalidInput("all polynomial coefficients are zero".into()));
    }
    let degree = coeffs
        .iter()
        .rposition(|c| c.norm() > TRIM_RELATIVE * scale)
        .expect("some coefficient exceeds the trim threshold");
    if degree == 0 {
        return Ok(Vec::new());
    }
    let trimmed = &coeffs[..=degree];
    let lead = trimmed[degree];

    let mut companion = ComplexMatrix::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -trimmed[i] / lead;
    }
    balance(&mut companion);

    let schur = companion
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("companion Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let roots = (0..degree).map(|i| polish(trimmed, t[(i, i)])).collect();
    Ok(roots)
}

fn polish(coeffs: &[C64], mut z: C64) -> C64 {
    let (mut p, _) = eval_with_derivative(coeffs, z);
    for _ in 0..POLISH_STEPS {
        let (_, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        let (pc, _) = eval_with_derivative(coeffs, candidate);
        if pc.norm() < p.norm() {
            z = candidate;
            p = pc;
        } else {
            break;
        }
    }
    z
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable (the scaling stage of the classic balancing algorithm).
fn balance(m: &mut ComplexMatrix) {
    const RADIX: f64 = 2.0;
    let n = m.nrows();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].l1_norm();
                    r += m[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}
