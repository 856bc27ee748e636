//! Dense complex linear algebra on top of nalgebra: matrix exponential,
//! diagonalization with a conditioning guard, principal logarithm, norms.

use crate::error::{Error, Result};
use crate::num::{cabs, cone, cx, czero, lit, principal_ln, to_f64, CMat, CVec, Cplx, Real};
use nalgebra::{DMatrix, DVector, Schur};

/// Eigenvector matrices with condition number above this are rejected.
pub const CONDITION_GUARD: f64 = 1e8;

pub fn identity<R: Real>(n: usize) -> CMat<R> {
    DMatrix::identity(n, n)
}

/// Induced 1-norm (max column sum).
pub fn norm1<R: Real>(a: &CMat<R>) -> R {
    let mut best = R::zero();
    for j in 0..a.ncols() {
        let mut s = R::zero();
        for i in 0..a.nrows() {
            s += cabs(a[(i, j)]);
        }
        best = best.max(s);
    }
    best
}

/// Spectral norm (largest singular value).
pub fn spectral_norm<R: Real>(a: &CMat<R>) -> R {
    if a.nrows() == 0 || a.ncols() == 0 {
        return R::zero();
    }
    if a.ncols() == 1 || a.nrows() == 1 {
        return a.iter().fold(R::zero(), |s, z| s + z.norm_sqr()).sqrt();
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(R::zero(), |m, s| m.max(*s))
}

/// Smallest singular value.
pub fn min_singular_value<R: Real>(a: &CMat<R>) -> R {
    a.clone()
        .singular_values()
        .iter()
        .fold(R::max_value().unwrap_or_else(|| lit(f64::MAX)), |m, s| m.min(*s))
}

pub fn inverse<R: Real>(a: &CMat<R>) -> Result<CMat<R>> {
    a.clone().try_inverse().ok_or(Error::Singular)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé core.
pub fn expm<R: Real>(a: &CMat<R>) -> CMat<R> {
    const B: [f64; 14] = [
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
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let nrm = to_f64(norm1(a));
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale: R = lit(2f64.powi(-s));
    let a = a.map(|z| z * scale);
    let b = |k: usize| -> Cplx<R> { cx(lit(B[k])) };
    let id = identity::<R>(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (a6.map(|z| z * b(13)) + a4.map(|z| z * b(11)) + a2.map(|z| z * b(9)))
        + a6.map(|z| z * b(7))
        + a4.map(|z| z * b(5))
        + a2.map(|z| z * b(3))
        + id.map(|z| z * b(1));
    let u = &a * inner_u;
    let v = &a6 * (a6.map(|z| z * b(12)) + a4.map(|z| z * b(10)) + a2.map(|z| z * b(8)))
        + a6.map(|z| z * b(6))
        + a4.map(|z| z * b(4))
        + a2.map(|z| z * b(2))
        + id.map(|z| z * b(0));
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Diagonalization `A = V diag(values) V⁻¹`.
#[derive(Clone, Debug)]
pub struct Eigen<R: Real> {
    pub values: Vec<Cplx<R>>,
    pub vectors: CMat<R>,
    pub inverse: CMat<R>,
    pub condition: R,
}

/// Eigenvalues of a square matrix via the complex Schur form.
pub fn eigenvalues<R: Real>(a: &CMat<R>) -> Result<Vec<Cplx<R>>> {
    let n = a.nrows();
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur = Schur::try_new(a.clone(), R::default_epsilon(), 10_000 * n.max(1))
        .ok_or_else(|| Error::EigendecompositionFailed("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigendecomposition with the conditioning guard [`CONDITION_GUARD`].
pub fn eig<R: Real>(a: &CMat<R>) -> Result<Eigen<R>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if n == 1 {
        return Ok(Eigen {
            values: vec![a[(0, 0)]],
            vectors: identity(1),
            inverse: identity(1),
            condition: R::one(),
        });
    }
    let schur = Schur::try_new(a.clone(), R::default_epsilon(), 10_000 * n)
        .ok_or_else(|| Error::EigendecompositionFailed("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().fold(R::zero(), |m, z| m.max(cabs(*z))).max(R::min_value().unwrap_or(R::zero()));
    let small = R::default_epsilon() * lit::<R>(64.0) * scale.max(lit(1e-300));
    let mut y = CMat::<R>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = cone();
        let lk = t[(k, k)];
        for i in (0..k).rev() {
            let mut s = czero::<R>();
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let d = t[(i, i)] - lk;
            y[(i, k)] = if cabs(d) > small {
                -s / d
            } else if cabs(s) <= small {
                czero()
            } else {
                -s.unscale(small)
            };
        }
    }
    let mut v = &q * y;
    for k in 0..n {
        let c = v.column(k).norm();
        if c > R::zero() {
            let inv = R::one() / c;
            v.column_mut(k).scale_mut(inv);
        }
    }
    let sv = v.clone().singular_values();
    let smax = sv.iter().fold(R::zero(), |m, s| m.max(*s));
    let smin = sv.iter().fold(smax, |m, s| m.min(*s));
    let condition = if smin > R::zero() { smax / smin } else { R::max_value().unwrap_or(lit(f64::MAX)) };
    if to_f64(condition) > CONDITION_GUARD || !to_f64(condition).is_finite() {
        return Err(Error::NotDiagonalizable { cond: to_f64(condition) });
    }
    let inverse = inverse(&v).map_err(|_| Error::NotDiagonalizable { cond: f64::INFINITY })?;
    Ok(Eigen {
        values: (0..n).map(|i| t[(i, i)]).collect(),
        vectors: v,
        inverse,
        condition,
    })
}

/// `V diag(d) V⁻¹` for a diagonalization.
pub fn recompose<R: Real>(e: &Eigen<R>, d: &[Cplx<R>]) -> CMat<R> {
    let n = d.len();
    let mut vd = e.vectors.clone();
    for k in 0..n {
        for i in 0..n {
            vd[(i, k)] *= d[k];
        }
    }
    vd * &e.inverse
}

/// Principal matrix logarithm through diagonalization. Returns the logarithm
/// and the eigenvalue logarithms used.
pub fn logm_principal<R: Real>(m: &CMat<R>) -> Result<(CMat<R>, Vec<Cplx<R>>)> {
    let e = eig(m)?;
    if e.values.iter().any(|z| cabs(*z) == R::zero()) {
        return Err(Error::Singular);
    }
    let logs: Vec<_> = e.values.iter().map(|z| principal_ln(*z)).collect();
    Ok((recompose(&e, &logs), logs))
}

/// Right singular vector for the largest singular value, phase-normalized so
/// that its first nonzero entry is real and positive. Ties among top singular
/// values are broken by the lexicographically largest real parts.
pub fn top_right_singular_vector<R: Real>(a: &CMat<R>) -> CVec<R> {
    let n = a.ncols();
    if n == 1 {
        return DVector::from_element(1, cone());
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(R::zero(), |m, s| m.max(*s));
    let tol = smax * lit::<R>(1e-12);
    let mut best: Option<CVec<R>> = None;
    for k in 0..sv.len() {
        if smax - sv[k] > tol {
            continue;
        }
        let cand = normalize_phase(&DVector::from_fn(n, |i, _| vt[(k, i)].conj()));
        best = match best {
            None => Some(cand),
            Some(b) => {
                if lex_greater(&cand, &b) {
                    Some(cand)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.expect("at least one singular vector")
}

fn lex_greater<R: Real>(a: &CVec<R>, b: &CVec<R>) -> bool {
    let tol = lit::<R>(1e-12);
    for (x, y) in a.iter().zip(b.iter()) {
        if x.re > y.re + tol {
            return true;
        }
        if x.re < y.re - tol {
            return false;
        }
    }
    false
}

/// Rotates the phase so the first entry with modulus above 1e-12 is real positive.
pub fn normalize_phase<R: Real>(v: &CVec<R>) -> CVec<R> {
    let nrm = v.norm();
    let thresh = nrm * lit::<R>(1e-12);
    for z in v.iter() {
        let m = cabs(*z);
        if m > thresh {
            let ph = z.conj().unscale(m);
            return v.map(|w| w * ph);
        }
    }
    v.clone()
}

/// Largest entry of `|B − B*|` relative to `max(1, max|B|)`.
pub fn hermitian_defect<R: Real>(b: &CMat<R>) -> R {
    let mut d = R::zero();
    let mut s = R::one();
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            d = d.max(cabs(b[(i, j)] - b[(j, i)].conj()));
            s = s.max(cabs(b[(i, j)]));
        }
    }
    d / s
}

/// `‖U*U − E‖` in the spectral norm.
pub fn unitary_defect<R: Real>(u: &CMat<R>) -> R {
    let n = u.ncols();
    spectral_norm(&(u.adjoint() * u - identity::<R>(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{cdiag_real, cmat_from_real};
    use approx::assert_relative_eq;

    fn dist(a: &CMat<f64>, b: &CMat<f64>) -> f64 {
        spectral_norm(&(a - b))
    }

    #[test]
    fn expm_of_nilpotent_is_exact() {
        let a = cmat_from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a);
        assert!(dist(&e, &cmat_from_real(2, 2, &[1.0, 1.0, 0.0, 1.0])) < 1e-15);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let th = 2.5f64;
        let a = cmat_from_real(2, 2, &[0.0, th, -th, 0.0]);
        let e = expm(&a);
        let want = cmat_from_real(2, 2, &[th.cos(), th.sin(), -th.sin(), th.cos()]);
        assert!(dist(&e, &want) < 1e-13);
    }

    #[test]
    fn expm_large_diagonal() {
        let a = cdiag_real(&[-30.0, 12.0]);
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)].re, (-30f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(1, 1)].re, 12f64.exp(), max_relative = 1e-12);
        assert!(e[(0, 1)].norm() < 1e-3);
    }

    #[test]
    fn eig_of_rotation_is_plus_minus_i() {
        let a = cmat_from_real(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = eig(&a).unwrap();
        let mut ims: Vec<f64> = e.values.iter().map(|z| z.im).collect();
        ims.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_relative_eq!(ims[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(ims[1], 1.0, epsilon = 1e-12);
        let back = recompose(&e, &e.values);
        assert!(dist(&back, &a) < 1e-12);
    }

    #[test]
    fn eig_rejects_jordan_block() {
        let a = cmat_from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(eig(&a), Err(Error::NotDiagonalizable { .. })));
    }

    #[test]
    fn eig_accepts_identity() {
        let e = eig(&identity::<f64>(3)).unwrap();
        assert_relative_eq!(e.condition, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn logm_of_negative_diagonal_is_principal() {
        let m = cdiag_real(&[-11.0, -2.0]);
        let (l, _) = logm_principal(&m).unwrap();
        assert_relative_eq!(l[(0, 0)].re, 11f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(l[(0, 0)].im, std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(l[(1, 1)].im, std::f64::consts::PI, epsilon = 1e-12);
        assert!(dist(&expm(&l), &m) < 1e-12);
    }

    #[test]
    fn top_singular_vector_of_diagonal() {
        let m = cdiag_real(&[1.0f64, -5.0, 2.0]);
        let v = top_right_singular_vector(&m);
        assert_relative_eq!(v[1].re, 1.0, epsilon = 1e-12);
        assert!(v[1].im.abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let a = cdiag_real(&[0.5f32, -0.25]);
        let e = expm(&a);
        assert!((e[(0, 0)].re - 0.5f32.exp()).abs() < 1e-6);
        assert!(eig(&a).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn expm_inverse_is_expm_of_negative(entries in proptest::collection::vec(-2.0f64..2.0, 9)) {
                let a = cmat_from_real(3, 3, &entries);
                let p = expm(&a) * expm(&(-&a));
                prop_assert!(dist(&p, &identity(3)) < 1e-10);
            }

            #[test]
            fn logm_inverts_expm_for_small_generators(entries in proptest::collection::vec(-0.8f64..0.8, 4)) {
                let a = cmat_from_real(2, 2, &entries);
                let m = expm(&a);
                if let Ok((l, _)) = logm_principal(&m) {
                    prop_assert!(dist(&expm(&l), &m) < 1e-9 * (1.0 + spectral_norm(&m)));
                }
            }
        }
    }
}
