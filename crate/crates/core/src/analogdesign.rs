//! Unit-modulus analog beamformer optimization.
//!
//! The matching problem is
//! `min || w^{1/2} (v_target sigma_l v_l^H - d f_a) ||_F^2`
//! over a diagonal-block scale `sigma_l`, a unitary `v_l` and a unit-modulus
//! `f_a`. The alternating scheme updates the scale and the unitary in closed
//! form and re-projects the beamformer through `d^{-1}`; an iterate is kept
//! only if the weighted residual actually dropped, so the recorded residual
//! sequence is non-increasing by construction. The zero-iteration point is
//! the one-shot alignment design.

use crate::matdecomp::{ordered_svd, phase_project, CMat, C64};
use crate::{Error, Result};

/// One analog matching problem.
///
/// `v_target` carries the singular vectors to match (`n x n_rf`), `w` the
/// Hermitian PSD weight, `d` the invertible whitener. The first `n_streams`
/// columns form the signal block; the remaining `n_rf - n_streams` columns
/// are the extra-RF-chain block.
#[derive(Debug, Clone)]
pub struct AnalogDesignProblem {
    pub v_target: CMat,
    pub w: CMat,
    pub d: CMat,
    pub n_streams: usize,
    pub eps: f64,
    pub max_iters: usize,
}

impl AnalogDesignProblem {
    /// Problem with the identity weight and the default stopping rule
    /// (`eps = 1e-6`, at most 100 iterations).
    pub fn new(v_target: CMat, d: CMat, n_streams: usize) -> Self {
        let n = v_target.nrows();
        AnalogDesignProblem {
            v_target,
            w: CMat::identity(n, n),
            d,
            n_streams,
            eps: 1e-6,
            max_iters: 100,
        }
    }

    pub fn n_rf(&self) -> usize {
        self.v_target.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.n_streams > self.n_rf() {
            return Err(Error::Config(format!(
                "n_streams {} exceeds target columns {}",
                self.n_streams,
                self.n_rf()
            )));
        }
        if self.d.nrows() != self.v_target.nrows() || self.d.nrows() != self.d.ncols() {
            return Err(Error::ShapeMismatch("whitener must be square n x n".into()));
        }
        Ok(())
    }
}

/// Result of the alternating minimization.
#[derive(Debug, Clone)]
pub struct AnalogSolution {
    /// Unit-modulus beamformer, `n x n_rf`.
    pub f_a: CMat,
    /// Diagonal-block scale (signal block then extra block).
    pub sigma_l: CMat,
    /// Right unitary.
    pub v_l: CMat,
    /// Final weighted-Frobenius residual.
    pub residual: f64,
    /// Residual after each accepted iterate, starting point included.
    pub residual_trace: Vec<f64>,
    pub iters: usize,
    /// Set when the loop ran out of iterations before the change fell
    /// below `eps`.
    pub converged: bool,
}

fn weighted_residual(p: &AnalogDesignProblem, w_half: &CMat, sigma_l: &CMat, v_l: &CMat, f_a: &CMat) -> f64 {
    (w_half * (&p.v_target * sigma_l * v_l.adjoint() - &p.d * f_a)).norm_squared()
}

/// Closed-form update of the diagonal scale blocks.
///
/// The signal block is a real diagonal; the extra block is the unconstrained
/// least-squares block solution.
pub fn sigma_update(p: &AnalogDesignProblem, f_a: &CMat, v_l: &CMat) -> Result<(CMat, CMat)> {
    let n = p.n_streams;
    let extra = p.n_rf() - n;
    let vt_sig = p.v_target.columns(0, n).into_owned();
    let vl_sig = v_l.columns(0, n).into_owned();
    let df = &p.d * f_a;

    let norm_diag = vt_sig.adjoint() * &p.w * &vt_sig;
    let cross = vt_sig.adjoint() * &p.w * &df * &vl_sig;
    let mut sigma_tilde = CMat::zeros(n, n);
    for i in 0..n {
        let denom = norm_diag[(i, i)].re;
        if denom.abs() < 1e-14 {
            return Err(Error::DegenerateWeight(format!(
                "zero normalizer for signal column {i}"
            )));
        }
        sigma_tilde[(i, i)] = C64::new(cross[(i, i)].re / denom, 0.0);
    }

    let sigma_hat = if extra > 0 {
        let vt_ex = p.v_target.columns(n, extra).into_owned();
        let vl_ex = v_l.columns(n, extra).into_owned();
        let gram = vt_ex.adjoint() * &p.w * &vt_ex;
        let rhs = vt_ex.adjoint() * &p.w * &df * &vl_ex;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::DegenerateWeight("extra-block gram is singular".into()))?;
        inv * rhs
    } else {
        CMat::zeros(0, 0)
    };
    Ok((sigma_tilde, sigma_hat))
}

fn assemble_sigma(p: &AnalogDesignProblem, sigma_tilde: &CMat, sigma_hat: &CMat) -> CMat {
    let n = p.n_streams;
    let n_rf = p.n_rf();
    let mut sigma = CMat::zeros(n_rf, n_rf);
    for i in 0..n {
        sigma[(i, i)] = sigma_tilde[(i, i)];
    }
    for i in 0..(n_rf - n) {
        for j in 0..(n_rf - n) {
            sigma[(n + i, n + j)] = sigma_hat[(i, j)];
        }
    }
    sigma
}

/// Procrustes update of the right unitary: the minimizer of the weighted
/// residual for fixed `sigma_l` and `f_a`.
pub fn unitary_update(p: &AnalogDesignProblem, f_a: &CMat, sigma_l: &CMat) -> Result<CMat> {
    let b = &p.v_target * sigma_l;
    let prod = b.adjoint() * &p.w * &p.d * f_a;
    let svd = ordered_svd(&prod)?;
    // min ||b q^H - a|| over unitary q^H gives q^H = u v^H, i.e. q = v u^H.
    Ok(&svd.v * svd.u.adjoint())
}

/// Alternating minimization for the unit-modulus matching problem.
pub fn run_alg1(p: &AnalogDesignProblem) -> Result<AnalogSolution> {
    p.validate()?;
    let w_half = crate::matdecomp::hermitian_sqrt(&p.w)?;
    let d_inv = p
        .d
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("whitener is not invertible".into()))?;

    // Start from the alignment point and read the initial scale/unitary off
    // the SVD of d f_a.
    let mut f_a = phase_project(&(&d_inv * &p.v_target));
    let init_svd = ordered_svd(&(&p.d * &f_a))?;
    let mut v_l = {
        let take = init_svd.v.ncols().min(p.n_rf());
        let mut v = CMat::zeros(p.n_rf(), p.n_rf());
        for j in 0..take {
            for i in 0..p.n_rf() {
                v[(i, j)] = init_svd.v[(i, j)];
            }
        }
        for j in take..p.n_rf() {
            v[(j, j)] = C64::new(1.0, 0.0);
        }
        v
    };
    let (st, sh) = sigma_update(p, &f_a, &v_l)?;
    let mut sigma_l = assemble_sigma(p, &st, &sh);
    let mut best = weighted_residual(p, &w_half, &sigma_l, &v_l, &f_a);
    let mut trace = vec![best];
    let mut iters = 0usize;
    let mut converged = false;

    while iters < p.max_iters {
        let (st, sh) = sigma_update(p, &f_a, &v_l)?;
        let sigma_cand = assemble_sigma(p, &st, &sh);
        let v_cand = unitary_update(p, &f_a, &sigma_cand)?;
        let f_cand = phase_project(&(&d_inv * &p.v_target * &sigma_cand * v_cand.adjoint()));
        let cand = weighted_residual(p, &w_half, &sigma_cand, &v_cand, &f_cand);
        iters += 1;
        // The projection step is a surrogate, so a candidate may fail to
        // improve; stop before accepting once the improvement drops below
        // the threshold. The accepted trace is then non-increasing.
        if best - cand < p.eps {
            converged = true;
            break;
        }
        sigma_l = sigma_cand;
        v_l = v_cand;
        f_a = f_cand;
        best = cand;
        trace.push(best);
    }
    Ok(AnalogSolution {
        f_a,
        sigma_l,
        v_l,
        residual: best,
        residual_trace: trace,
        iters,
        converged,
    })
}

/// One-shot unit-modulus alignment: `phase_project(d^{-1} v_target)`.
pub fn uma_analog(d: &CMat, v_target: &CMat) -> Result<CMat> {
    let d_inv = d
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("whitener is not invertible".into()))?;
    Ok(phase_project(&(d_inv * v_target)))
}

/// Pose the receive-combiner design as a transmit-type matching problem.
///
/// The combiner task matches `u_target` through the incoming covariance
/// root: solving the returned problem yields `f_ar^H`; conjugate-transpose
/// the solution to get the combiner.
pub fn combiner_problem(r_x_half: &CMat, u_target: &CMat, n_streams: usize) -> AnalogDesignProblem {
    AnalogDesignProblem::new(u_target.clone(), r_x_half.clone(), n_streams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::rayleigh_channel;
    use crate::matdecomp::{dft_matrix, testutil};
    use approx::assert_relative_eq;

    fn target_of(n: usize, n_rf: usize, rng: &mut rand_chacha::ChaCha8Rng) -> CMat {
        let m = testutil::random_cmat(n, n, rng);
        ordered_svd(&m).unwrap().v_cols(n_rf)
    }

    #[test]
    fn sigma_update_unit_normalizer() {
        // w = I, orthonormal target: the normalizer is one, so the signal
        // scales are plain real inner products.
        let mut rng = crate::rng::stream(50, &[0]);
        let (n, n_rf, streams) = (5, 3, 2);
        let p = AnalogDesignProblem::new(
            target_of(n, n_rf, &mut rng),
            testutil::identity(n),
            streams,
        );
        let f_a = phase_project(&rayleigh_channel(n, n_rf, &mut rng));
        let v_l = testutil::random_unitary(n_rf, &mut rng);
        let (st, _) = sigma_update(&p, &f_a, &v_l).unwrap();
        let vt = p.v_target.columns(0, streams);
        let vl = v_l.columns(0, streams);
        let cross = vt.adjoint() * &f_a * vl;
        for i in 0..streams {
            assert_relative_eq!(st[(i, i)].re, cross[(i, i)].re, epsilon = 1e-12);
            assert_eq!(st[(i, i)].im, 0.0);
        }
    }

    #[test]
    fn sigma_update_exact_fit_recovers_identity_scale() {
        // d = I and f_a equal to the (unit-modulus) target: with v_l = I the
        // residual contribution vanishes at unit scale.
        let n = 4;
        let dft = dft_matrix(n).unwrap();
        let target = dft.columns(0, 2).into_owned() * C64::new((n as f64).sqrt(), 0.0);
        // Normalize columns so the target itself is unit modulus.
        let p = AnalogDesignProblem::new(target.clone(), testutil::identity(n), 2);
        let f_a = target.clone();
        let v_l = testutil::identity(2);
        let (st, _) = sigma_update(&p, &f_a, &v_l).unwrap();
        for i in 0..2 {
            // Target columns have squared norm n at unit modulus.
            assert_relative_eq!(st[(i, i)].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigma_update_grid_oracle() {
        // The closed-form signal scales must beat a fine per-entry scan.
        let mut rng = crate::rng::stream(21, &[0]);
        let (n, n_rf, streams) = (4, 2, 2);
        let p = AnalogDesignProblem::new(
            target_of(n, n_rf, &mut rng),
            testutil::identity(n),
            streams,
        );
        let f_a = phase_project(&rayleigh_channel(n, n_rf, &mut rng));
        let v_l = testutil::random_unitary(n_rf, &mut rng);
        let (st, sh) = sigma_update(&p, &f_a, &v_l).unwrap();
        let sigma = assemble_sigma(&p, &st, &sh);
        let w_half = testutil::identity(n);
        let base = weighted_residual(&p, &w_half, &sigma, &v_l, &f_a);
        for i in 0..streams {
            for k in 0..1000 {
                let delta = -0.5 + k as f64 / 1000.0;
                let mut s = sigma.clone();
                s[(i, i)] += C64::new(delta, 0.0);
                assert!(base <= weighted_residual(&p, &w_half, &s, &v_l, &f_a) + 1e-6);
            }
        }
    }

    #[test]
    fn unitary_update_is_a_descent_step() {
        let mut rng = crate::rng::stream(51, &[0]);
        let (n, n_rf, streams) = (5, 3, 2);
        let p = AnalogDesignProblem::new(
            target_of(n, n_rf, &mut rng),
            testutil::identity(n),
            streams,
        );
        let f_a = phase_project(&rayleigh_channel(n, n_rf, &mut rng));
        let v_l0 = testutil::random_unitary(n_rf, &mut rng);
        let (st, sh) = sigma_update(&p, &f_a, &v_l0).unwrap();
        let sigma = assemble_sigma(&p, &st, &sh);
        let w_half = testutil::identity(n);
        let before = weighted_residual(&p, &w_half, &sigma, &v_l0, &f_a);
        let v_l1 = unitary_update(&p, &f_a, &sigma).unwrap();
        let after = weighted_residual(&p, &w_half, &sigma, &v_l1, &f_a);
        assert!(after <= before + 1e-12);
        // And it dominates 200 random unitaries.
        for _ in 0..200 {
            let q = testutil::random_unitary(n_rf, &mut rng);
            assert!(after <= weighted_residual(&p, &w_half, &sigma, &q, &f_a) + 1e-10);
        }
        // At the fixed point a second update changes nothing measurable.
        let v_l2 = unitary_update(&p, &f_a, &sigma).unwrap();
        let again = weighted_residual(&p, &w_half, &sigma, &v_l2, &f_a);
        assert!((again - after).abs() < 1e-12);
    }

    #[test]
    fn alg1_exact_representable_target_has_zero_residual() {
        // Scaled DFT columns are unit modulus, so with d = I the target is
        // exactly representable and the residual collapses.
        let n = 8;
        let n_rf = 3;
        let dft = dft_matrix(n).unwrap();
        let v_target = dft.columns(0, n_rf).into_owned();
        let mut p = AnalogDesignProblem::new(v_target, testutil::identity(n), n_rf);
        p.eps = 1e-14;
        let sol = run_alg1(&p).unwrap();
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);
        assert!(crate::sysmodel::unit_modulus_defect(&sol.f_a) < 1e-12);
    }

    #[test]
    fn alg1_zero_iteration_point_is_uma() {
        // With an infinite threshold the loop accepts nothing beyond the
        // starting point, which is exactly the alignment design.
        let mut rng = crate::rng::stream(52, &[0]);
        let (n, n_rf) = (6, 3);
        let d = testutil::random_psd(n, &mut rng) + testutil::identity(n) * C64::new(1.0, 0.0);
        let mut p = AnalogDesignProblem::new(target_of(n, n_rf, &mut rng), d.clone(), n_rf);
        p.eps = f64::INFINITY;
        let sol = run_alg1(&p).unwrap();
        let uma = uma_analog(&d, &p.v_target).unwrap();
        assert_eq!(sol.f_a, uma);
    }

    #[test]
    fn alg1_dominates_uma_residual() {
        let mut rng = crate::rng::stream(23, &[0]);
        let (n, n_rf, streams) = (16, 4, 4);
        let d = testutil::random_psd(n, &mut rng) + testutil::identity(n) * C64::new(0.5, 0.0);
        let p = AnalogDesignProblem::new(target_of(n, n_rf, &mut rng), d.clone(), streams);
        let sol = run_alg1(&p).unwrap();
        // The residual trace starts at the alignment point and never rises.
        for w in sol.residual_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(sol.residual <= sol.residual_trace[0] + 1e-12);
    }

    #[test]
    fn alg1_descent_on_many_random_problems() {
        let mut rng = crate::rng::stream(53, &[0]);
        for trial in 0..100 {
            let n = 4 + (trial % 5);
            let n_rf = 2 + (trial % 3);
            let streams = 1 + (trial % n_rf.min(2));
            let d =
                testutil::random_psd(n, &mut rng) + testutil::identity(n) * C64::new(0.3, 0.0);
            let p = AnalogDesignProblem::new(target_of(n, n_rf, &mut rng), d, streams);
            let sol = run_alg1(&p).unwrap();
            for w in sol.residual_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "trial {trial}: residual rose");
            }
            assert!(crate::sysmodel::unit_modulus_defect(&sol.f_a) < 1e-12);
        }
    }

    #[test]
    fn uma_preserves_phases_of_unit_modulus_targets() {
        let mut rng = crate::rng::stream(54, &[0]);
        let t = phase_project(&rayleigh_channel(4, 2, &mut rng));
        let out = uma_analog(&testutil::identity(4), &t).unwrap();
        assert!((out - &t).norm() < 1e-12);

        // Positive diagonal whitener preserves angles.
        let d = CMat::from_fn(4, 4, |i, j| {
            if i == j {
                C64::new(1.0 + i as f64, 0.0)
            } else {
                C64::default()
            }
        });
        let t2 = phase_project(&rayleigh_channel(4, 2, &mut rng));
        let out2 = uma_analog(&d, &t2).unwrap();
        assert!((out2 - &t2).norm() < 1e-12);
        assert!(crate::sysmodel::unit_modulus_defect(&t2) < 1e-12);
    }

    #[test]
    fn combiner_problem_collapses_to_precoder_form() {
        let mut rng = crate::rng::stream(55, &[0]);
        let (n, n_rf) = (5, 2);
        let u_target = target_of(n, n_rf, &mut rng);
        // r_x = I: the combiner problem is the precoder problem with d = I.
        let p = combiner_problem(&testutil::identity(n), &u_target, n_rf);
        assert!((p.d.clone() - testutil::identity(n)).norm() < 1e-15);
        let sol = run_alg1(&p).unwrap();
        let f_ar = sol.f_a.adjoint();
        assert_eq!(f_ar.nrows(), n_rf);
        assert!(crate::sysmodel::unit_modulus_defect(&f_ar) < 1e-12);
    }
}
