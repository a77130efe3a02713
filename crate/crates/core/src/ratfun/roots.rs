//! Polynomial roots through the eigenvalues of a balanced companion matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Roots of `c[0] z^n + c[1] z^{n-1} + … + c[n]`.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    if coeffs.is_empty() || coeffs[0] == 0.0 || !coeffs[0].is_finite() {
        return Err(Error::Singular("degenerate leading coefficient".into()));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSpec("non-finite polynomial coefficient".into()));
    }
    // exact zero roots
    let mut end = coeffs.len();
    while end > 1 && coeffs[end - 1] == 0.0 {
        end -= 1;
    }
    let n_zero = coeffs.len() - end;
    let c = &coeffs[..end];
    let n = c.len() - 1;
    let mut roots = vec![Complex64::new(0.0, 0.0); n_zero];
    if n == 0 {
        return Ok(roots);
    }
    if n == 1 {
        roots.push(Complex64::new(-c[1] / c[0], 0.0));
        return Ok(roots);
    }

    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    balance(&mut m);
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("companion eigenvalue iteration did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    for z in eig.iter() {
        roots.push(polish(c, *z));
    }
    Ok(symmetrize(roots))
}

/// Parlett–Reinsch diagonal balancing (radix 2), in place.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let radix2 = radix * radix;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix2;
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

fn horner(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(c[0], 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &ci in &c[1..] {
        dp = dp * z + p;
        p = p * z + ci;
    }
    (p, dp)
}

/// A few Newton steps, kept only while they reduce |p(z)|.
fn polish(c: &[f64], mut z: Complex64) -> Complex64 {
    let (mut pz, mut dpz) = horner(c, z);
    for _ in 0..4 {
        if dpz.norm() == 0.0 || pz.norm() == 0.0 {
            break;
        }
        let cand = z - pz / dpz;
        let (pc, dpc) = horner(c, cand);
        if pc.norm() < pz.norm() {
            z = cand;
            pz = pc;
            dpz = dpc;
        } else {
            break;
        }
    }
    z
}

/// Enforce exact conjugate closure: each root with positive imaginary part is
/// paired with its nearest mirror and both are replaced by their average.
pub(crate) fn symmetrize(roots: Vec<Complex64>) -> Vec<Complex64> {
    let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-13 * scale;
    let mut real = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for z in roots {
        if z.im.abs() <= tol {
            real.push(Complex64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            pos.push(z);
        } else {
            neg.push(z);
        }
    }
    let mut out = real;
    let mut used = vec![false; neg.len()];
    for z in pos {
        let best = neg
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .min_by(|a, b| {
                (a.1.conj() - z)
                    .norm()
                    .total_cmp(&(b.1.conj() - z).norm())
            })
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                used[i] = true;
                let avg = (z + neg[i].conj()) * 0.5;
                out.push(avg);
                out.push(avg.conj());
            }
            None => out.push(Complex64::new(z.re, 0.0)),
        }
    }
    for (i, z) in neg.into_iter().enumerate() {
        if !used[i] {
            out.push(Complex64::new(z.re, 0.0));
        }
    }
    out
}
