//! Small complex-vector helpers shared by the channel, aggregation and solver code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

pub fn normalized(a: &[C64]) -> Result<Vec<C64>> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    Ok(a.iter().map(|x| x / n).collect())
}

/// Solves `(I + sum_k z_k z_k^H) x = rhs` by Cholesky factorization.
pub fn solve_identity_plus_gram(z: &[&[C64]], rhs: &[C64]) -> Result<Vec<C64>> {
    let n = rhs.len();
    let mut m = DMatrix::<C64>::identity(n, n);
    for zk in z {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += zk[i] * zk[j].conj();
            }
        }
    }
    let chol = m
        .cholesky()
        .ok_or(Error::NumericDegeneracy("beamformer linear system"))?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Ok(x.iter().copied().collect())
}

/// Dominant eigenvector of the Hermitian PSD matrix `sum_k h_k h_k^H`, unit norm,
/// phase-normalized by [`fix_phase`].
pub fn principal_eigenvector(channels: &[&[C64]]) -> Result<Vec<C64>> {
    let n = channels
        .first()
        .map(|h| h.len())
        .ok_or(Error::EmptySelection)?;
    let mut r = DMatrix::<C64>::zeros(n, n);
    for h in channels {
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] += h[i] * h[j].conj();
            }
        }
    }
    let scale = (0..n).map(|i| r[(i, i)].re).sum::<f64>();
    if !(scale > 0.0) {
        return Err(Error::DegenerateChannel("all channels are zero".into()));
    }
    r /= C64::new(scale, 0.0);
    let eig = r.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let mut out: Vec<C64> = v.iter().copied().collect();
    fix_phase(&mut out);
    Ok(out)
}

/// Rotates `v` so that its largest-magnitude entry is real and positive.
pub fn fix_phase(v: &mut [C64]) {
    if let Some(pivot) = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
    {
        if pivot.norm() > 0.0 {
            let rot = pivot.conj() / pivot.norm();
            for x in v.iter_mut() {
                *x *= rot;
            }
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversion() {
        assert_eq!(dbm_to_mw(0.0), 1.0);
        assert!((dbm_to_mw(-20.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn gram_solve_matches_direct_residual() {
        let z1 = [C64::new(1.0, 0.5), C64::new(-0.3, 0.2)];
        let z2 = [C64::new(0.1, -1.0), C64::new(0.7, 0.0)];
        let rhs = [C64::new(1.0, 2.0), C64::new(-1.0, 0.5)];
        let x = solve_identity_plus_gram(&[&z1, &z2], &rhs).unwrap();
        // (I + z1 z1^H + z2 z2^H) x == rhs
        let mut lhs = x.clone();
        for z in [&z1[..], &z2[..]] {
            let zx = inner(z, &x);
            for i in 0..2 {
                lhs[i] += z[i] * zx;
            }
        }
        for i in 0..2 {
            assert!((lhs[i] - rhs[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn principal_eigenvector_of_rank_one_is_the_channel_direction() {
        let h = [C64::new(3.0, 0.0), C64::new(0.0, 4.0)];
        let v = principal_eigenvector(&[&h]).unwrap();
        let g = inner(&v, &h).norm_sqr();
        assert!((g - 25.0).abs() < 1e-10);
    }
}
