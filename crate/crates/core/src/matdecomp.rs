//! Deterministic complex-matrix decompositions.
//!
//! Everything downstream manipulates `DMatrix<Complex<f64>>` values, aliased
//! here as [`CMat`]. The decompositions are thin wrappers over nalgebra with
//! two extra guarantees the rest of the crate relies on:
//!
//! - singular values are always returned in descending order, and
//! - factorizations are made phase-deterministic, so equal inputs produce
//!   bit-equal factors across calls.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Ordered singular value decomposition `m = u * diag(s) * v^H`.
///
/// `u` and `v` hold the thin factors (`m x r` and `n x r` with
/// `r = min(m, n)`); both have orthonormal columns.
#[derive(Debug, Clone)]
pub struct OrderedSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

impl OrderedSvd {
    /// `u * diag(s) * v^H`.
    pub fn reconstruct(&self) -> CMat {
        let r = self.s.len();
        let sd = CMat::from_fn(r, r, |i, j| {
            if i == j {
                C64::new(self.s[i], 0.0)
            } else {
                C64::default()
            }
        });
        &self.u * sd * self.v.adjoint()
    }

    /// First `k` columns of `u`.
    pub fn u_cols(&self, k: usize) -> CMat {
        self.u.columns(0, k).into_owned()
    }

    /// First `k` columns of `v`.
    pub fn v_cols(&self, k: usize) -> CMat {
        self.v.columns(0, k).into_owned()
    }
}

/// Triangular factorization `m = q * r * p^H` where `r` is lower triangular
/// with all diagonal entries equal to the geometric mean of the retained
/// singular values.
#[derive(Debug, Clone)]
pub struct GmdFactors {
    pub q: CMat,
    pub r: CMat,
    pub p: CMat,
}

pub(crate) fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Hermitian residual `||a - a^H||_F / max(1, ||a||_F)`.
pub fn hermitian_residual(a: &CMat) -> f64 {
    (a - a.adjoint()).norm() / a.norm().max(1.0)
}

/// SVD with descending singular values and a deterministic phase convention:
/// the largest-modulus entry of every left singular vector is made real and
/// positive (ties broken by the first such entry).
pub fn ordered_svd(m: &CMat) -> Result<OrderedSvd> {
    check_finite(m, "svd input")?;
    let svd = m.clone().svd(true, true);
    let mut u = svd.u.expect("svd requested u");
    let mut v = svd.v_t.expect("svd requested v_t").adjoint();
    let s = svd.singular_values;

    // nalgebra sorts descending already; re-sort defensively so the ordering
    // contract never depends on the backend.
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let u_sorted = CMat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v_sorted = CMat::from_fn(v.nrows(), order.len(), |i, j| v[(i, order[j])]);
    u = u_sorted;
    v = v_sorted;

    for j in 0..sorted.len() {
        let mut best = 0usize;
        let mut best_mod = 0.0f64;
        for i in 0..u.nrows() {
            let md = u[(i, j)].norm();
            if md > best_mod {
                best_mod = md;
                best = i;
            }
        }
        if best_mod > 0.0 {
            let phase = u[(best, j)] / C64::new(best_mod, 0.0);
            let corr = phase.conj();
            for i in 0..u.nrows() {
                u[(i, j)] *= corr;
            }
            for i in 0..v.nrows() {
                v[(i, j)] *= corr;
            }
        }
    }
    Ok(OrderedSvd { u, s: sorted, v })
}

/// Extend a matrix with orthonormal columns to a square unitary matrix.
///
/// Deterministic: missing directions are taken from the identity basis in
/// index order via repeated Gram-Schmidt.
pub fn complete_unitary(cols: &CMat) -> CMat {
    let m = cols.nrows();
    let r = cols.ncols();
    assert!(r <= m, "more columns than rows");
    let mut basis: Vec<CVec> = (0..r).map(|j| cols.column(j).into_owned()).collect();
    let mut i = 0usize;
    while basis.len() < m && i < m {
        let mut cand = CVec::zeros(m);
        cand[i] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let coeff = b.dotc(&cand);
                cand -= b * coeff;
            }
        }
        let n = cand.norm();
        if n > 1e-8 {
            basis.push(cand / C64::new(n, 0.0));
        }
        i += 1;
    }
    assert_eq!(basis.len(), m, "failed to complete unitary basis");
    CMat::from_fn(m, m, |i, j| basis[j][i])
}

fn hermitian_eigen_checked(a: &CMat, what: &str) -> Result<(CMat, Vec<f64>)> {
    check_finite(a, what)?;
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!("{what} must be square")));
    }
    if hermitian_residual(a) > 1e-10 {
        return Err(Error::InvalidInput(format!("{what} is not Hermitian")));
    }
    let sym = (a + a.adjoint()).map(|z| z * 0.5);
    let eig = sym.symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    Ok((eig.eigenvectors, vals))
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted
/// ascending and eigenvector columns in matching order.
pub fn hermitian_eigen(a: &CMat) -> Result<(CMat, Vec<f64>)> {
    let (vecs, vals) = hermitian_eigen_checked(a, "hermitian_eigen input")?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let v = CMat::from_fn(vecs.nrows(), order.len(), |i, j| vecs[(i, order[j])]);
    Ok((v, sorted))
}

/// Hermitian square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-1e-6, 0)` are treated as rounding noise and clamped;
/// anything more negative is rejected.
pub fn hermitian_sqrt(a: &CMat) -> Result<CMat> {
    let (vecs, vals) = hermitian_eigen_checked(a, "hermitian_sqrt input")?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if vals.iter().any(|&v| v < -1e-6 * scale) {
        return Err(Error::NotPsd(format!(
            "eigenvalue {:.3e} below tolerance",
            vals.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    let d = CMat::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j {
            C64::new(vals[i].max(0.0).sqrt(), 0.0)
        } else {
            C64::default()
        }
    });
    Ok(&vecs * d * vecs.adjoint())
}

/// Hermitian inverse square root; eigenvalues below `1e-12 * lambda_max` are
/// pseudo-inverted to zero.
pub fn hermitian_inv_sqrt(a: &CMat) -> Result<CMat> {
    let (vecs, vals) = hermitian_eigen_checked(a, "hermitian_inv_sqrt input")?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if vals.iter().any(|&v| v < -1e-6 * scale) {
        return Err(Error::NotPsd("negative eigenvalue".into()));
    }
    let lmax = vals.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * lmax.max(1e-300);
    let d = CMat::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j && vals[i] > tol {
            C64::new(1.0 / vals[i].sqrt(), 0.0)
        } else {
            C64::default()
        }
    });
    Ok(&vecs * d * vecs.adjoint())
}

/// Cholesky factor `L` (lower triangular, real positive diagonal) of a
/// Hermitian positive definite matrix: `a = L * L^H`.
pub fn cholesky_lower(a: &CMat) -> Result<CMat> {
    check_finite(a, "cholesky input")?;
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch("cholesky input must be square".into()));
    }
    if hermitian_residual(a) > 1e-10 {
        return Err(Error::InvalidInput("cholesky input is not Hermitian".into()));
    }
    let sym = (a + a.adjoint()).map(|z| z * 0.5);
    let l = sym
        .cholesky()
        .ok_or_else(|| Error::NotPd("cholesky failed".into()))?
        .l();
    // nalgebra's complex path takes complex square roots, so an indefinite
    // input can slip through; a valid factor has a real positive diagonal.
    let scale = l.norm().max(1e-300);
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-12 * scale || !d.re.is_finite() {
            return Err(Error::NotPd(format!("pivot {i} is {d}")));
        }
    }
    Ok(l)
}

/// Geometric mean decomposition of the rank-`k` part of `m`.
///
/// Returns `q` (`nrows x k`), `r` (`k x k` lower triangular, equal real
/// positive diagonal) and `p` (`ncols x k`) with `q * r * p^H` equal to the
/// best rank-`k` approximation of `m` (equal to `m` itself when
/// `k = rank(m)`).
pub fn gmd(m: &CMat, k: usize) -> Result<GmdFactors> {
    if k == 0 {
        return Err(Error::InvalidInput("gmd requires k >= 1".into()));
    }
    let svd = ordered_svd(m)?;
    if k > svd.s.len() || svd.s[k - 1] <= 1e-12 * svd.s[0].max(1e-300) {
        return Err(Error::RankDeficient(format!(
            "gmd requires rank >= {k}, singular values {:?}",
            svd.s
        )));
    }

    // Build the upper-triangular GMD of m^H from the swapped SVD factors,
    // then conjugate-transpose the triangle: m^H = V S U^H = Q Ru P^H gives
    // m = P Ru^H Q^H with a lower-triangular equal-diagonal factor.
    let (uq, ru, up) = gmd_upper(&svd.v, &svd.s[..k], &svd.u);
    let r = CMat::from_fn(k, k, |i, j| C64::new(ru[(j, i)], 0.0));
    Ok(GmdFactors { q: up, r, p: uq })
}

/// Upper-triangular GMD core: given the SVD factors of some matrix `x`
/// (`x = u diag(s) v^H`, top `k = s.len()` components), produce
/// `(q, r, p)` with `x_k = q r p^H`, `r` real upper triangular with constant
/// diagonal equal to the geometric mean of `s`.
fn gmd_upper(u: &CMat, s: &[f64], v: &CMat) -> (CMat, DMatrix<f64>, CMat) {
    let k = s.len();
    let sbar = (s.iter().map(|x| x.ln()).sum::<f64>() / k as f64).exp();
    let mut r = DMatrix::<f64>::zeros(k, k);
    let mut z: Vec<f64> = s.to_vec();
    for (i, &si) in s.iter().enumerate() {
        r[(i, i)] = si;
    }
    let mut q = u.columns(0, k).into_owned();
    let mut p = v.columns(0, k).into_owned();

    for i in 0..k.saturating_sub(1) {
        // Pair the current entry with one on the other side of the mean.
        let need_small = z[i] > sbar;
        let mut jsel = i + 1;
        for j in (i + 1)..k {
            if (need_small && z[j] < z[jsel]) || (!need_small && z[j] > z[jsel]) {
                jsel = j;
            }
        }
        if jsel != i + 1 {
            r.swap_columns(i + 1, jsel);
            r.swap_rows(i + 1, jsel);
            q.swap_columns(i + 1, jsel);
            p.swap_columns(i + 1, jsel);
            z.swap(i + 1, jsel);
        }

        let d1 = z[i];
        let d2 = z[i + 1];
        let (c, sn) = if (d1 - d2).abs() <= 1e-14 * d1.max(d2) {
            (1.0, 0.0)
        } else {
            let c2 = ((sbar * sbar - d2 * d2) / (d1 * d1 - d2 * d2)).clamp(0.0, 1.0);
            (c2.sqrt(), (1.0 - c2).sqrt())
        };
        // Right rotation on columns (i, i+1) of r and p.
        for row in 0..k {
            let a = r[(row, i)];
            let b = r[(row, i + 1)];
            r[(row, i)] = c * a + sn * b;
            r[(row, i + 1)] = -sn * a + c * b;
        }
        rotate_cols(&mut p, i, i + 1, c, sn);
        // Left rotation on rows (i, i+1) of r; the matching column rotation
        // accumulates into q.
        let sigma = (c * d1).hypot(sn * d2);
        let (cl, sl) = (c * d1 / sigma, sn * d2 / sigma);
        for col in 0..k {
            let a = r[(i, col)];
            let b = r[(i + 1, col)];
            r[(i, col)] = cl * a + sl * b;
            r[(i + 1, col)] = -sl * a + cl * b;
        }
        rotate_cols(&mut q, i, i + 1, cl, sl);
        // Round off the enforced structure so the triangle is exact.
        r[(i, i)] = sigma;
        r[(i + 1, i)] = 0.0;
        z[i] = sigma;
        z[i + 1] = d1 * d2 / sigma;
        r[(i + 1, i + 1)] = z[i + 1];
    }
    (q, r, p)
}

fn rotate_cols(m: &mut CMat, i: usize, j: usize, c: f64, s: f64) {
    for row in 0..m.nrows() {
        let a = m[(row, i)];
        let b = m[(row, j)];
        m[(row, i)] = a * c + b * s;
        m[(row, j)] = a * (-s) + b * c;
    }
}

/// Unitary DFT matrix: entry `(j, l) = exp(-2 pi i j l / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(Error::InvalidInput("dft_matrix requires n >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CMat::from_fn(n, n, |j, l| {
        let theta = -2.0 * std::f64::consts::PI * (j as f64) * (l as f64) / n as f64;
        C64::from_polar(scale, theta)
    }))
}

/// Entry-wise angle projection: every entry is replaced by its phase factor.
/// Zero entries map to 1.
pub fn phase_project(m: &CMat) -> CMat {
    m.map(|z| {
        let n = z.norm();
        if n == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            z / C64::new(n, 0.0)
        }
    })
}

/// Orthogonal Procrustes: the semi-unitary `q` minimizing `||b q - a||_F`,
/// computed as `u v^H` from the SVD of `b^H a`.
pub fn procrustes(b: &CMat, a: &CMat) -> Result<CMat> {
    if b.nrows() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "procrustes: b is {}x{}, a is {}x{}",
            b.nrows(),
            b.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let prod = b.adjoint() * a;
    let svd = ordered_svd(&prod)?;
    let (p, q) = (prod.nrows(), prod.ncols());
    if svd.s.len() == p.min(q) && p == q {
        return Ok(&svd.u * svd.v.adjoint());
    }
    let uf = complete_unitary(&svd.u);
    let vf = complete_unitary(&svd.v);
    let rect = CMat::from_fn(p, q, |i, j| {
        if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::default()
        }
    });
    Ok(uf * rect * vf.adjoint())
}

/// Water-filling: maximize `sum log(1 + g_i p_i)` subject to
/// `sum p_i = budget`, `p_i >= 0`. Returns the per-stream powers.
pub fn waterfill(gains: &[f64], budget: f64) -> Result<Vec<f64>> {
    if gains.is_empty() {
        return Err(Error::InvalidInput("waterfill: empty gains".into()));
    }
    if gains.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("waterfill: gains must be positive".into()));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::InvalidInput("waterfill: budget must be positive".into()));
    }
    let n = gains.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gains[b].partial_cmp(&gains[a]).unwrap());

    let mut powers = vec![0.0; n];
    for m in (1..=n).rev() {
        let inv_sum: f64 = order[..m].iter().map(|&i| 1.0 / gains[i]).sum();
        let mu = (budget + inv_sum) / m as f64;
        if mu - 1.0 / gains[order[m - 1]] >= 0.0 {
            for &i in &order[..m] {
                powers[i] = mu - 1.0 / gains[i];
            }
            return Ok(powers);
        }
    }
    // Limit case of the KKT system: everything to the strongest gain.
    powers[order[0]] = budget;
    Ok(powers)
}

/// MMSE power allocation: minimize `sum 1 / (1 + lambda_i^2 p_i)` subject to
/// `sum p_i = budget`. Active streams get `p_i = mu / lambda_i - 1 / lambda_i^2`.
pub fn mmse_allocation(lambdas: &[f64], budget: f64) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("mmse_allocation: empty gains".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(
            "mmse_allocation: gains must be positive".into(),
        ));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::InvalidInput(
            "mmse_allocation: budget must be positive".into(),
        ));
    }
    let n = lambdas.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());

    let mut powers = vec![0.0; n];
    for m in (1..=n).rev() {
        let inv2: f64 = order[..m].iter().map(|&i| 1.0 / (lambdas[i] * lambdas[i])).sum();
        let inv1: f64 = order[..m].iter().map(|&i| 1.0 / lambdas[i]).sum();
        let mu = (budget + inv2) / inv1;
        if mu >= 1.0 / lambdas[order[m - 1]] {
            for &i in &order[..m] {
                powers[i] = mu / lambdas[i] - 1.0 / (lambdas[i] * lambdas[i]);
            }
            return Ok(powers);
        }
    }
    powers[order[0]] = budget;
    Ok(powers)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn svd_identity_is_trivial() {
        let svd = ordered_svd(&identity(3)).unwrap();
        assert_eq!(svd.s, vec![1.0, 1.0, 1.0]);
        assert!((svd.reconstruct() - identity(3)).norm() < 1e-12);
    }

    #[test]
    fn svd_reorders_diagonal() {
        let m = CMat::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new([1.0, 3.0, 2.0][i], 0.0)
            } else {
                C64::default()
            }
        });
        let svd = ordered_svd(&m).unwrap();
        assert_relative_eq!(svd.s[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(svd.s[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(svd.s[2], 1.0, max_relative = 1e-12);
        assert!((svd.reconstruct() - &m).norm() < 1e-12);
        // Permutation-phase factors stay unitary.
        assert!(unitarity_defect(&svd.u) < 1e-12);
        assert!(unitarity_defect(&svd.v) < 1e-12);
    }

    #[test]
    fn svd_matches_hermitian_eigen_oracle() {
        // Independent oracle: singular values of m are the square roots of
        // the eigenvalues of m^H m from the Hermitian eigensolver.
        let mut r = rng(42);
        let m = random_cmat(4, 3, &mut r);
        let gram = m.adjoint() * &m;
        let mut eigs: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let svd = ordered_svd(&m).unwrap();
        for (sv, ev) in svd.s.iter().zip(eigs.iter()) {
            assert_relative_eq!(*sv, ev.max(0.0).sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn svd_is_deterministic_and_phase_fixed() {
        let mut r = rng(7);
        let m = random_cmat(5, 4, &mut r);
        let a = ordered_svd(&m).unwrap();
        let b = ordered_svd(&m).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.v, b.v);
        for j in 0..a.s.len() {
            let col = a.u.column(j);
            let (mut best, mut best_mod) = (0usize, 0.0f64);
            for i in 0..col.len() {
                if col[i].norm() > best_mod {
                    best_mod = col[i].norm();
                    best = i;
                }
            }
            assert!(col[best].im.abs() < 1e-12 && col[best].re > 0.0);
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = identity(2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(ordered_svd(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn svd_invariants_on_random_inputs() {
        let mut r = rng(1234);
        for _ in 0..50 {
            let m = random_cmat(6, 4, &mut r);
            let svd = ordered_svd(&m).unwrap();
            assert!(unitarity_defect(&svd.u) < 1e-10);
            assert!(unitarity_defect(&svd.v) < 1e-10);
            assert!((svd.reconstruct() - &m).norm() / m.norm() < 1e-10);
            for w in svd.s.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn hermitian_sqrt_identity_and_diag() {
        assert!((hermitian_sqrt(&identity(3)).unwrap() - identity(3)).norm() < 1e-12);
        let d = CMat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::new([4.0, 9.0][i], 0.0)
            } else {
                C64::default()
            }
        });
        let s = hermitian_sqrt(&d).unwrap();
        assert_relative_eq!(s[(0, 0)].re, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s[(1, 1)].re, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn hermitian_sqrt_reconstructs_random_psd() {
        let mut r = rng(7);
        let a = random_psd(5, &mut r);
        let s = hermitian_sqrt(&a).unwrap();
        assert!((&s * &s - &a).norm() / a.norm() < 1e-9);
        assert!(hermitian_residual(&s) < 1e-10);
    }

    #[test]
    fn hermitian_inv_sqrt_pseudo_inverts() {
        let mut r = rng(8);
        let a = random_psd(4, &mut r);
        let is = hermitian_inv_sqrt(&a).unwrap();
        let s = hermitian_sqrt(&a).unwrap();
        assert!((&is * &s - identity(4)).norm() < 1e-8);
        // Singular input: pseudo-inverse leaves the null direction at zero.
        let b = random_cmat(4, 2, &mut r);
        let low = &b * b.adjoint();
        let isl = hermitian_inv_sqrt(&low).unwrap();
        let proj = &isl * &low * &isl; // should be the rank-2 projector
        assert_relative_eq!(proj.trace().re, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn hermitian_sqrt_rejects_indefinite() {
        let mut m = identity(2);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        assert!(matches!(hermitian_sqrt(&m), Err(Error::NotPsd(_))));
    }

    #[test]
    fn cholesky_identity_and_diag() {
        assert!((cholesky_lower(&identity(3)).unwrap() - identity(3)).norm() < 1e-12);
        let d = CMat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::new([4.0, 9.0][i], 0.0)
            } else {
                C64::default()
            }
        });
        let l = cholesky_lower(&d).unwrap();
        assert_relative_eq!(l[(0, 0)].re, 2.0, epsilon = 1e-12);
        assert_relative_eq!(l[(1, 1)].re, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_reconstructs_random_pd() {
        let mut r = rng(11);
        let a = random_psd(4, &mut r) + identity(4) * C64::new(0.1, 0.0);
        let l = cholesky_lower(&a).unwrap();
        assert!((&l * l.adjoint() - &a).norm() / a.norm() < 1e-10);
        for i in 0..4 {
            assert!(l[(i, i)].im.abs() < 1e-14 && l[(i, i)].re > 0.0);
            for j in (i + 1)..4 {
                assert_eq!(l[(i, j)], C64::default());
            }
        }
        let mut neg = identity(2);
        neg[(0, 0)] = C64::new(-1.0, 0.0);
        assert!(matches!(cholesky_lower(&neg), Err(Error::NotPd(_))));
    }

    #[test]
    fn gmd_equal_singular_values_give_scaled_identity() {
        let c = 1.7;
        let m = identity(3) * C64::new(c, 0.0);
        let g = gmd(&m, 3).unwrap();
        for i in 0..3 {
            assert_relative_eq!(g.r[(i, i)].re, c, max_relative = 1e-10);
        }
        assert!((&g.q * &g.r * g.p.adjoint() - &m).norm() < 1e-9);
    }

    #[test]
    fn gmd_two_by_two_diagonal_forced_by_determinant() {
        let m = CMat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::new([4.0, 1.0][i], 0.0)
            } else {
                C64::default()
            }
        });
        let g = gmd(&m, 2).unwrap();
        assert_relative_eq!(g.r[(0, 0)].re, 2.0, epsilon = 1e-10);
        assert_relative_eq!(g.r[(1, 1)].re, 2.0, epsilon = 1e-10);
        assert!((&g.q * &g.r * g.p.adjoint() - &m).norm() < 1e-9);
    }

    #[test]
    fn gmd_determinant_oracle() {
        let mut r = rng(3);
        let m = random_cmat(4, 4, &mut r);
        let svd = ordered_svd(&m).unwrap();
        let sv_product: f64 = svd.s.iter().product();
        let g = gmd(&m, 4).unwrap();
        let diag_product: f64 = (0..4).map(|i| g.r[(i, i)].re).product();
        assert_relative_eq!(diag_product, sv_product, max_relative = 1e-9);
        // All diagonal entries equal within 1e-8 relative.
        let mean = diag_product.powf(0.25);
        for i in 0..4 {
            assert_relative_eq!(g.r[(i, i)].re, mean, max_relative = 1e-8);
            for j in (i + 1)..4 {
                assert!(g.r[(i, j)].norm() < 1e-12, "r must be lower triangular");
            }
        }
        assert!((&g.q * &g.r * g.p.adjoint() - &m).norm() / m.norm() < 1e-9);
        assert!(unitarity_defect(&g.q) < 1e-10);
        assert!(unitarity_defect(&g.p) < 1e-10);
    }

    #[test]
    fn gmd_rejects_rank_deficiency() {
        let mut r = rng(4);
        let b = random_cmat(4, 2, &mut r);
        let low = &b * b.adjoint().columns(0, 4).into_owned();
        assert!(matches!(gmd(&low, 4), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn dft_matrix_small_cases() {
        let d1 = dft_matrix(1).unwrap();
        assert_relative_eq!(d1[(0, 0)].re, 1.0, epsilon = 1e-15);
        let d2 = dft_matrix(2).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        assert_relative_eq!(d2[(0, 0)].re, s, epsilon = 1e-15);
        assert_relative_eq!(d2[(1, 1)].re, -s, epsilon = 1e-15);
        let d8 = dft_matrix(8).unwrap();
        assert!(unitarity_defect(&d8) < 1e-12);
        assert!(matches!(dft_matrix(0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn phase_project_contract() {
        let z = C64::new(1.0, 1.0);
        let m = CMat::from_element(1, 1, z);
        let p = phase_project(&m);
        assert_relative_eq!(p[(0, 0)].re, 1.0 / 2.0f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(p[(0, 0)].im, 1.0 / 2.0f64.sqrt(), epsilon = 1e-14);

        let zero = CMat::from_element(2, 2, C64::default());
        let pz = phase_project(&zero);
        assert!(pz.iter().all(|e| (e - C64::new(1.0, 0.0)).norm() < 1e-15));

        let mut r = rng(5);
        let u = phase_project(&random_cmat(3, 3, &mut r));
        assert!((phase_project(&u) - &u).norm() < 1e-12, "fixed point");
        assert!(u.iter().all(|e| (e.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn procrustes_trivial_cases() {
        let q = procrustes(&identity(3), &identity(3)).unwrap();
        assert!((q - identity(3)).norm() < 1e-12);
        let mut r = rng(6);
        let a = random_unitary(3, &mut r);
        let q = procrustes(&identity(3), &a).unwrap();
        assert!((q - &a).norm() < 1e-10);
    }

    #[test]
    fn procrustes_beats_grid_search_oracle() {
        // Oracle: coarse scan over the 4-angle parametrization of U(2)
        // followed by per-axis golden-section refinement down to 1e-4.
        let mut r = rng(5);
        let b = random_cmat(2, 2, &mut r);
        let a = random_cmat(2, 2, &mut r);
        let obj = |q: &CMat| (&b * q - &a).norm_squared();

        let unitary2 = |al: f64, th: f64, be: f64, ga: f64| {
            let e = |x: f64| C64::from_polar(1.0, x);
            let (c, s) = (th.cos(), th.sin());
            CMat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => e(al) * e(be) * c,
                (0, 1) => e(al) * e(ga) * s,
                (1, 0) => -e(al) * e(-ga) * s,
                _ => e(al) * e(-be) * c,
            })
        };
        let mut best = (0.0, 0.0, 0.0, 0.0);
        let mut best_val = f64::INFINITY;
        let steps = 14usize;
        let grid = |i: usize| i as f64 * 2.0 * std::f64::consts::PI / steps as f64;
        for i in 0..steps {
            for j in 0..steps / 2 {
                for k in 0..steps {
                    for l in 0..steps {
                        let v = obj(&unitary2(grid(i), grid(j), grid(k), grid(l)));
                        if v < best_val {
                            best_val = v;
                            best = (grid(i), grid(j), grid(k), grid(l));
                        }
                    }
                }
            }
        }
        // Coordinate-wise golden-section refinement.
        let gr = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            for axis in 0..4 {
                let mut lo = -0.5f64;
                let mut hi = 0.5f64;
                let eval = |d: f64, best: (f64, f64, f64, f64)| {
                    let mut p = [best.0, best.1, best.2, best.3];
                    p[axis] += d;
                    obj(&unitary2(p[0], p[1], p[2], p[3]))
                };
                while hi - lo > 1e-6 {
                    let m1 = hi - gr * (hi - lo);
                    let m2 = lo + gr * (hi - lo);
                    if eval(m1, best) < eval(m2, best) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let d = 0.5 * (lo + hi);
                let mut p = [best.0, best.1, best.2, best.3];
                p[axis] += d;
                best = (p[0], p[1], p[2], p[3]);
                best_val = obj(&unitary2(p[0], p[1], p[2], p[3]));
            }
        }

        let q = procrustes(&b, &a).unwrap();
        assert!(obj(&q) <= best_val + 1e-6, "{} vs oracle {}", obj(&q), best_val);
        assert!(obj(&q) <= obj(&identity(2)) + 1e-12);
    }

    #[test]
    fn procrustes_dominates_random_unitaries() {
        let mut r = rng(17);
        let b = random_cmat(3, 3, &mut r);
        let a = random_cmat(3, 3, &mut r);
        let q = procrustes(&b, &a).unwrap();
        let val = (&b * &q - &a).norm_squared();
        for _ in 0..100 {
            let u = random_unitary(3, &mut r);
            assert!(val <= (&b * u - &a).norm_squared() + 1e-10);
        }
    }

    #[test]
    fn waterfill_basic_cases() {
        assert_eq!(waterfill(&[2.0], 3.5).unwrap(), vec![3.5]);
        let p = waterfill(&[1.5, 1.5, 1.5], 3.0).unwrap();
        for pi in &p {
            assert_relative_eq!(*pi, 1.0, epsilon = 1e-12);
        }
        assert!(waterfill(&[], 1.0).is_err());
        assert!(waterfill(&[1.0], 0.0).is_err());
        assert!(waterfill(&[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn waterfill_matches_kkt_bisection_oracle() {
        // Oracle: bisect the water level mu until the implied total power
        // matches the budget, independently of the active-set closed form.
        let gains = [10.0, 0.1];
        let budget = 0.5;
        let total_at = |mu: f64| -> f64 {
            gains.iter().map(|g| (mu - 1.0 / g).max(0.0)).sum()
        };
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total_at(mid) > budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mu = 0.5 * (lo + hi);
        let oracle: Vec<f64> = gains.iter().map(|g| (mu - 1.0 / g).max(0.0)).collect();
        let p = waterfill(&gains, budget).unwrap();
        assert!(oracle[1] == 0.0 && p[1] == 0.0, "weak stream shut off");
        assert_relative_eq!(p[0], oracle[0], epsilon = 1e-6);
        assert_relative_eq!(p.iter().sum::<f64>(), budget, max_relative = 1e-9);
    }

    #[test]
    fn waterfill_sums_to_budget_on_random_gains() {
        let mut r = rng(99);
        for _ in 0..100 {
            use rand::Rng;
            let n = 1 + r.gen_range(0..6);
            let gains: Vec<f64> = (0..n).map(|_| 10f64.powf(r.gen_range(-3.0..2.0))).collect();
            let budget = 10f64.powf(r.gen_range(-2.0..2.0));
            let p = waterfill(&gains, budget).unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert_relative_eq!(p.iter().sum::<f64>(), budget, max_relative = 1e-9);
        }
    }

    #[test]
    fn mmse_allocation_grid_oracle() {
        // lambda = (2, 1), P = 1: scan p1 over a fine grid and compare.
        let lambdas = [2.0, 1.0];
        let budget = 1.0;
        let obj = |p1: f64| 1.0 / (1.0 + 4.0 * p1) + 1.0 / (1.0 + (budget - p1));
        let mut best_p1 = 0.0;
        let mut best = f64::INFINITY;
        for i in 0..=10_000 {
            let p1 = budget * i as f64 / 10_000.0;
            let v = obj(p1);
            if v < best {
                best = v;
                best_p1 = p1;
            }
        }
        let p = mmse_allocation(&lambdas, budget).unwrap();
        assert!(obj(p[0]) <= best + 1e-6, "{} vs grid {}", obj(p[0]), best);
        assert_relative_eq!(p[0], best_p1, epsilon = 1e-3);
        assert_relative_eq!(p.iter().sum::<f64>(), budget, max_relative = 1e-9);
    }

    #[test]
    fn mmse_allocation_symmetry() {
        let p = mmse_allocation(&[1.3, 1.3], 2.0).unwrap();
        assert_relative_eq!(p[0], p[1], epsilon = 1e-12);
    }

    #[test]
    fn complete_unitary_extends_orthonormal_columns() {
        let mut r = rng(21);
        let m = random_cmat(5, 2, &mut r);
        let svd = ordered_svd(&m).unwrap();
        let full = complete_unitary(&svd.u);
        assert!(unitarity_defect(&full) < 1e-10);
        assert!((full.columns(0, 2).into_owned() - svd.u).norm() < 1e-14);
    }
}
