//! Optimal-structure digital designs.
//!
//! Each hop reduces to a matrix-monotonic problem over a whitened, projected
//! channel: whiten with `(sigma_n^2 I + P psi)^{-1/2}`, project through the
//! analog stages, take the ordered SVD, put a power allocation on the
//! dominant singular values and map the result back through the analog
//! grams with the power-normalizing scalar `alpha`. The source rotation and
//! the inner rotations align the per-hop factors so the cascade telescopes.

use crate::channel::HopChannel;
use crate::matdecomp::{
    dft_matrix, gmd, hermitian_eigen, mmse_allocation, ordered_svd, waterfill, CMat, OrderedSvd,
    C64,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which of the four Schur-objective families drives the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveFamily {
    AddSchurConvex,
    AddSchurConcave,
    MultSchurConvex,
    MultSchurConcave,
}

/// Concrete metric optimized by the per-hop power allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcreteObjective {
    SumCapacity,
    SumMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub family: ObjectiveFamily,
    pub concrete: ConcreteObjective,
}

impl ObjectiveSpec {
    /// The multiplicative families imply the THP/DFE evaluation path.
    pub fn nonlinear(&self) -> bool {
        matches!(
            self.family,
            ObjectiveFamily::MultSchurConvex | ObjectiveFamily::MultSchurConcave
        )
    }

    pub fn capacity() -> Self {
        ObjectiveSpec {
            family: ObjectiveFamily::AddSchurConcave,
            concrete: ConcreteObjective::SumCapacity,
        }
    }

    pub fn sum_mse() -> Self {
        ObjectiveSpec {
            family: ObjectiveFamily::AddSchurConvex,
            concrete: ConcreteObjective::SumMse,
        }
    }
}

/// One hop after absorbing the noise-plus-error statistics.
#[derive(Debug, Clone)]
pub struct WhitenedHop {
    /// `h_hat (sigma^2 I + P psi)^{-1/2}`.
    pub effective: CMat,
    pub svd: OrderedSvd,
    /// `(sigma^2 I + P psi)^{1/2}`, the whitener handed to the analog design.
    pub whitener_sqrt: CMat,
    pub whitener_inv_sqrt: CMat,
}

/// Whiten a hop. The whitener must be positive definite.
pub fn whiten_hop(hop: &HopChannel, p_k: f64, sigma_n2: f64) -> Result<WhitenedHop> {
    let n = hop.n_tx();
    let w = CMat::identity(n, n) * C64::new(sigma_n2, 0.0) + &hop.psi * C64::new(p_k, 0.0);
    let (vecs, vals) = hermitian_eigen(&w)?;
    if vals[0] <= 0.0 {
        return Err(Error::NotPd(format!(
            "whitener has eigenvalue {:.3e}",
            vals[0]
        )));
    }
    let diag = |f: &dyn Fn(f64) -> f64| {
        CMat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(f(vals[i]), 0.0)
            } else {
                C64::default()
            }
        })
    };
    let whitener_sqrt = &vecs * diag(&|v| v.sqrt()) * vecs.adjoint();
    let whitener_inv_sqrt = &vecs * diag(&|v| 1.0 / v.sqrt()) * vecs.adjoint();
    let effective = &hop.h_hat * &whitener_inv_sqrt;
    let svd = ordered_svd(&effective)?;
    Ok(WhitenedHop { effective, svd, whitener_sqrt, whitener_inv_sqrt })
}

/// `(a^{-1/2}, was_floored)` with an eigenvalue floor of `1e-10 * trace / n`
/// guarding near-singular analog grams.
pub fn floored_inv_sqrt(a: &CMat) -> Result<(CMat, bool)> {
    let (vecs, vals) = hermitian_eigen(a)?;
    let n = vals.len();
    let floor = 1e-10 * (vals.iter().sum::<f64>() / n as f64).max(1e-300);
    let floored = vals.iter().any(|&v| v < floor);
    let d = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(1.0 / vals[i].max(floor).sqrt(), 0.0)
        } else {
            C64::default()
        }
    });
    Ok((&vecs * d * vecs.adjoint(), floored))
}

/// Digital forward design for one hop.
#[derive(Debug, Clone)]
pub struct HopDigitalSolution {
    /// Physical digital forward matrix.
    pub f_d: CMat,
    /// Power-normalizing scalar.
    pub alpha: f64,
    /// Diagonal of the allocation (amplitudes, one per stream).
    pub lambda_fd: Vec<f64>,
    /// Inner alignment unitary (intermediate and final hops).
    pub u_tilde: Option<CMat>,
    /// Set when the projected channel had fewer usable directions than
    /// streams; deficient streams carry zero power.
    pub rank_deficient: bool,
}

/// Per-hop power allocation on the projected singular values.
pub fn power_allocation(lambda_pi: &[f64], budget: f64, obj: &ObjectiveSpec) -> Result<Vec<f64>> {
    match obj.concrete {
        ConcreteObjective::SumCapacity => {
            let gains: Vec<f64> = lambda_pi.iter().map(|l| l * l).collect();
            waterfill(&gains, budget)
        }
        ConcreteObjective::SumMse => mmse_allocation(lambda_pi, budget),
    }
}

/// SVD of the projected whitened channel plus the stream allocation.
struct HopCore {
    f_tilde: CMat,
    lambda_fd: Vec<f64>,
    rank_deficient: bool,
}

fn hop_core(
    projected: &CMat,
    budget: f64,
    obj: &ObjectiveSpec,
    n_streams: usize,
) -> Result<HopCore> {
    let svd = ordered_svd(projected)?;
    let usable = svd
        .s
        .iter()
        .take(n_streams)
        .filter(|&&s| s > 1e-12 * svd.s[0].max(1e-300))
        .count();
    let rank_deficient = usable < n_streams;
    if usable == 0 {
        return Err(Error::RankDeficient("projected channel is zero".into()));
    }
    let powers = power_allocation(&svd.s[..usable], budget, obj)?;
    let mut lambda_fd = vec![0.0; n_streams];
    for (i, p) in powers.iter().enumerate() {
        lambda_fd[i] = p.sqrt();
    }
    let n_rf = projected.ncols();
    let f_tilde = CMat::from_fn(n_rf, n_streams, |i, j| {
        if j < usable {
            svd.v[(i, j)] * C64::new(lambda_fd[j], 0.0)
        } else {
            C64::default()
        }
    });
    Ok(HopCore { f_tilde, lambda_fd, rank_deficient })
}

fn alpha_of(gram_inv_sqrt: &CMat, f_al: &CMat, f_tilde: &CMat) -> f64 {
    let mixed = gram_inv_sqrt * f_al.adjoint() * f_al * gram_inv_sqrt;
    (mixed * f_tilde * f_tilde.adjoint()).trace().re
}

/// First-hop digital design. Returns the physical source digital forward
/// (the `n_rf x N` matrix applied directly to the stream vector).
pub fn design_first_hop(
    wh: &WhitenedHop,
    f_al: &CMat,
    budget: f64,
    sigma0_sq: f64,
    obj: &ObjectiveSpec,
    n_streams: usize,
) -> Result<HopDigitalSolution> {
    let wf = &wh.whitener_sqrt * f_al;
    let gram = wf.adjoint() * &wf;
    let (gram_inv_sqrt, _) = floored_inv_sqrt(&gram)?;
    // h_hat w^{-1/2} pi_1 collapses to h_hat f_al gram^{-1/2}.
    let projected = &hop_channel(wh) * f_al * &gram_inv_sqrt;
    let core = hop_core(&projected, budget, obj, n_streams)?;
    let alpha = alpha_of(&gram_inv_sqrt, f_al, &core.f_tilde);
    let mut f_d = &gram_inv_sqrt
        * &core.f_tilde
        * C64::new((budget / alpha).sqrt() / sigma0_sq.sqrt(), 0.0);
    // The alpha identity makes the power exact analytically; rescale away
    // the floating-point drift so the budget is hit bit-tightly.
    let p_actual = (f_al * &f_d).norm_squared() * sigma0_sq;
    if p_actual > 0.0 {
        f_d *= C64::new((budget / p_actual).sqrt(), 0.0);
    }
    Ok(HopDigitalSolution {
        f_d,
        alpha,
        lambda_fd: core.lambda_fd,
        u_tilde: None,
        rank_deficient: core.rank_deficient,
    })
}

fn hop_channel(wh: &WhitenedHop) -> CMat {
    // h_hat reconstructed as effective * whitener_sqrt, keeping callers in
    // the projected form the structure results are stated in.
    &wh.effective * &wh.whitener_sqrt
}

/// Intermediate-hop digital design. `f_ar_bar` is the combiner times the
/// square root of the incoming covariance, `f_ar * r_prev^{1/2}`.
pub fn design_intermediate_hop(
    wh: &WhitenedHop,
    f_al: &CMat,
    f_ar_bar: &CMat,
    budget: f64,
    obj: &ObjectiveSpec,
    n_streams: usize,
) -> Result<HopDigitalSolution> {
    design_relay_hop(wh, f_al, f_ar_bar, None, budget, obj, n_streams)
}

/// Final-hop digital design: like the intermediate hop but with the
/// destination projector `pi_g = (g_a g_a^H)^{-1/2} g_a` inside the
/// effective channel.
pub fn design_final_hop(
    wh: &WhitenedHop,
    f_al: &CMat,
    f_ar_bar: &CMat,
    g_a: &CMat,
    budget: f64,
    obj: &ObjectiveSpec,
    n_streams: usize,
) -> Result<HopDigitalSolution> {
    design_relay_hop(wh, f_al, f_ar_bar, Some(g_a), budget, obj, n_streams)
}

fn design_relay_hop(
    wh: &WhitenedHop,
    f_al: &CMat,
    f_ar_bar: &CMat,
    g_a: Option<&CMat>,
    budget: f64,
    obj: &ObjectiveSpec,
    n_streams: usize,
) -> Result<HopDigitalSolution> {
    let wf = &wh.whitener_sqrt * f_al;
    let gram = wf.adjoint() * &wf;
    let (gram_inv_sqrt, _) = floored_inv_sqrt(&gram)?;

    let rx_gram = f_ar_bar * f_ar_bar.adjoint();
    let (rx_gram_inv_sqrt, _) = floored_inv_sqrt(&rx_gram)?;
    // pi_r = rx_gram^{-1/2} f_ar_bar is a partial isometry (every singular
    // value is one), so its SVD basis is ambiguous. The alignment below
    // needs the basis inherited from f_ar_bar itself: pi_r is the polar
    // factor u v^H of f_ar_bar's SVD, and that u orders the combined space
    // by incoming signal energy.
    let pi_r_svd = ordered_svd(f_ar_bar)?;

    let mut projected = &hop_channel(wh) * f_al * &gram_inv_sqrt;
    if let Some(g_a) = g_a {
        let g_gram = g_a * g_a.adjoint();
        let (g_gram_inv_sqrt, _) = floored_inv_sqrt(&g_gram)?;
        let pi_g = g_gram_inv_sqrt * g_a;
        projected = pi_g * projected;
    }
    let core = hop_core(&projected, budget, obj, n_streams)?;

    // Inner alignment: the right factor of svd(projected * f_tilde) mapped
    // onto the dominant directions of the incoming signal space.
    let af = &projected * &core.f_tilde;
    let af_svd = ordered_svd(&af)?;
    let take = af_svd.v.ncols().min(pi_r_svd.u.ncols());
    let u_tilde = af_svd.v_cols(take) * pi_r_svd.u_cols(take).adjoint();

    let alpha = alpha_of(&gram_inv_sqrt, f_al, &core.f_tilde);
    let mut f_d = &gram_inv_sqrt
        * &core.f_tilde
        * &u_tilde
        * &rx_gram_inv_sqrt
        * C64::new((budget / alpha).sqrt(), 0.0);
    // f_ar_bar already carries r_prev^{1/2}, so this is the transmit power.
    let p_actual = (f_al * &f_d * f_ar_bar).norm_squared();
    if p_actual > 0.0 {
        f_d *= C64::new((budget / p_actual).sqrt(), 0.0);
    }
    Ok(HopDigitalSolution {
        f_d,
        alpha,
        lambda_fd: core.lambda_fd,
        u_tilde: Some(u_tilde),
        rank_deficient: core.rank_deficient,
    })
}

/// Inner rotations `q_k = v_{k+1} u_k^H` for the per-hop equalized SVDs.
pub fn inner_rotations(hop_svds: &[OrderedSvd]) -> Vec<CMat> {
    let mut out = Vec::new();
    for pair in hop_svds.windows(2) {
        let take = pair[1].v.ncols().min(pair[0].u.ncols());
        out.push(pair[1].v_cols(take) * pair[0].u_cols(take).adjoint());
    }
    out
}

/// Source rotation `q_0` for a given objective family.
///
/// `v1` holds the eigenvectors of the pre-rotation MSE matrix (ascending
/// eigenvalue order, strongest stream first) and `mse_eigs` the matching
/// eigenvalues. The convex families produce the DFT- or GMD-equalizing
/// rotation; the concave families keep the eigenbasis itself.
pub fn source_rotation(
    obj: &ObjectiveSpec,
    v1: &CMat,
    mse_eigs: &[f64],
    n: usize,
) -> Result<CMat> {
    if v1.ncols() < n {
        return Err(Error::ShapeMismatch(format!(
            "v1 has {} columns, need {n}",
            v1.ncols()
        )));
    }
    let v = v1.columns(0, n).into_owned();
    match obj.family {
        ObjectiveFamily::AddSchurConcave | ObjectiveFamily::MultSchurConcave => Ok(v),
        ObjectiveFamily::AddSchurConvex => {
            let dft = dft_matrix(n)?;
            Ok(v * dft.adjoint())
        }
        ObjectiveFamily::MultSchurConvex => {
            if mse_eigs.len() < n {
                return Err(Error::InvalidInput(
                    "GMD rotation needs one MSE eigenvalue per stream".into(),
                ));
            }
            if mse_eigs.iter().take(n).any(|&m| !(m > 0.0)) {
                return Err(Error::NotPd("MSE eigenvalues must be positive".into()));
            }
            let msqrt = CMat::from_fn(n, n, |i, j| {
                if i == j {
                    C64::new(mse_eigs[i].sqrt(), 0.0)
                } else {
                    C64::default()
                }
            });
            let g = gmd(&msqrt, n)?;
            Ok(v * g.q)
        }
    }
}
