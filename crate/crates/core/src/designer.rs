//! End-to-end hybrid design and the comparison baselines.
//!
//! `proposed` walks the chain once — source analog precoder and digital
//! forward, then per relay the analog combiner, analog precoder and digital
//! forward, then the destination analog equalizer and the final-hop digital
//! — and afterwards re-runs the combiner/digital updates against the latest
//! link covariances for a bounded number of passes. `uma` is the same chain
//! built from one-shot phase alignment with no refinement. `full_digital`
//! drops the analog constraints entirely and is the benchmark upper line.
//! The OMP baselines greedily fit the full-digital or SVD-aligned targets
//! from a steering codebook, and `non_robust` is `proposed` with the error
//! statistics ignored at design time.

use serde::{Deserialize, Serialize};

use crate::analogdesign::{combiner_problem, run_alg1, uma_analog, AnalogDesignProblem};
use crate::channel::{ChannelKind, ChannelSet, HopChannel};
use crate::matdecomp::{hermitian_eigen, hermitian_sqrt, ordered_svd, phase_project, CMat, C64};
use crate::structopt::{
    design_final_hop, design_first_hop, design_intermediate_hop, source_rotation, whiten_hop,
    ObjectiveSpec, WhitenedHop,
};
use crate::sysmodel::{
    linear_mse, nonlinear_feedback, optimal_equalizer, HybridDesign, NetworkConfig, NodeStages,
};
use crate::{Error, Result};

/// Which design algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Proposed,
    Uma,
    FullDigital,
    FdOmp,
    SvdOmp,
    NonRobust,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Uma => "uma",
            Algorithm::FullDigital => "full_digital",
            Algorithm::FdOmp => "fd_omp",
            Algorithm::SvdOmp => "svd_omp",
            Algorithm::NonRobust => "non_robust",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Algorithm::Proposed),
            "uma" => Ok(Algorithm::Uma),
            "full_digital" => Ok(Algorithm::FullDigital),
            "fd_omp" => Ok(Algorithm::FdOmp),
            "svd_omp" => Ok(Algorithm::SvdOmp),
            "non_robust" => Ok(Algorithm::NonRobust),
            other => Err(Error::Config(format!("unknown algorithm: {other}"))),
        }
    }
}

/// One design task.
#[derive(Debug, Clone)]
pub struct DesignRequest<'a> {
    pub cfg: &'a NetworkConfig,
    pub channels: &'a ChannelSet,
    pub obj: ObjectiveSpec,
    pub algorithm: Algorithm,
    /// Maximum refinement passes for `proposed` / `non_robust`.
    pub repeat_limit: usize,
    /// Relative change in `Tr(phi)` below which refinement stops early.
    pub tolerance: f64,
    /// Channel model the codebooks are built for (OMP baselines only).
    pub channel_kind: ChannelKind,
}

impl<'a> DesignRequest<'a> {
    pub fn new(
        cfg: &'a NetworkConfig,
        channels: &'a ChannelSet,
        obj: ObjectiveSpec,
        algorithm: Algorithm,
        channel_kind: ChannelKind,
    ) -> Self {
        DesignRequest {
            cfg,
            channels,
            obj,
            algorithm,
            repeat_limit: 3,
            tolerance: 1e-6,
            channel_kind,
        }
    }
}

/// Diagnostics gathered while a design was produced.
#[derive(Debug, Clone, Default)]
pub struct DesignReport {
    /// `Tr(phi)` before refinement and after every pass.
    pub refine_trace: Vec<f64>,
    /// Any hop had fewer usable directions than streams.
    pub rank_deficient: bool,
}

/// Run the requested algorithm.
pub fn design(req: &DesignRequest) -> Result<HybridDesign> {
    design_with_report(req).map(|(d, _)| d)
}

/// Run the requested algorithm and keep the diagnostics.
pub fn design_with_report(req: &DesignRequest) -> Result<(HybridDesign, DesignReport)> {
    req.cfg.validate()?;
    if req.channels.n_hops() != req.cfg.n_hops() {
        return Err(Error::ShapeMismatch(format!(
            "config has {} hops, channels {}",
            req.cfg.n_hops(),
            req.channels.n_hops()
        )));
    }
    match req.algorithm {
        Algorithm::Proposed => structured(req, req.channels.clone(), AnalogMode::Iterative),
        Algorithm::Uma => structured(req, req.channels.clone(), AnalogMode::Alignment),
        Algorithm::NonRobust => {
            structured(req, req.channels.with_zero_psi(), AnalogMode::Iterative)
        }
        Algorithm::FullDigital => full_digital(req).map(|d| (d, DesignReport::default())),
        Algorithm::FdOmp => omp_design(req, OmpInput::FullDigital)
            .map(|d| (d, DesignReport::default())),
        Algorithm::SvdOmp => {
            omp_design(req, OmpInput::SvdAligned).map(|d| (d, DesignReport::default()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AnalogMode {
    /// Alternating minimization.
    Iterative,
    /// One-shot phase alignment; implies no refinement loop.
    Alignment,
}

fn advance(r_prev: &CMat, hop: &HopChannel, f: &CMat, noise: f64) -> (CMat, f64, f64) {
    let t = f * r_prev * f.adjoint();
    let p_tx = t.trace().re;
    let eta = noise + (&t * &hop.psi).trace().re;
    let n_r = hop.n_rx();
    let r = &hop.h_hat * t * hop.h_hat.adjoint() + CMat::identity(n_r, n_r) * C64::new(eta, 0.0);
    ((&r + r.adjoint()) * C64::new(0.5, 0.0), eta, p_tx)
}

fn analog_precoder(wh: &WhitenedHop, n_rf: usize, n: usize, mode: AnalogMode) -> Result<CMat> {
    let target = wh.svd.v_cols(n_rf);
    match mode {
        AnalogMode::Alignment => uma_analog(&wh.whitener_sqrt, &target),
        AnalogMode::Iterative => {
            let p = AnalogDesignProblem::new(target, wh.whitener_sqrt.clone(), n);
            Ok(run_alg1(&p)?.f_a)
        }
    }
}

/// Design the combiner at the receiver of `r_prev`. `u_channel` carries the
/// preceding hop's whitened-channel left singular vectors.
///
/// The iterative path matches the dominant eigenbasis of the incoming
/// covariance itself: that basis spans the same space as the channel
/// vectors once the preceding hop is aligned, but being an invariant
/// subspace of `r_prev` it stays stable when the covariance is nearly
/// singular (high SNR), where whitening a slightly tilted target explodes.
fn analog_combiner(
    u_channel: &CMat,
    r_prev: &CMat,
    n_rf: usize,
    n: usize,
    mode: AnalogMode,
) -> Result<(CMat, CMat)> {
    let (vecs, vals) = crate::matdecomp::hermitian_eigen(r_prev)?;
    let dim = vals.len();
    let r_half = {
        let d = CMat::from_fn(dim, dim, |i, j| {
            if i == j {
                C64::new(vals[i].max(0.0).sqrt(), 0.0)
            } else {
                C64::default()
            }
        });
        &vecs * d * vecs.adjoint()
    };
    let f_ar = match mode {
        // The alignment design assumes an identity incoming covariance, so
        // the channel vectors are matched directly.
        AnalogMode::Alignment => phase_project(u_channel).adjoint(),
        AnalogMode::Iterative => {
            // Eigen-columns come back ascending; take the strongest n_rf.
            let u_target = CMat::from_fn(dim, n_rf, |i, j| vecs[(i, dim - 1 - j)]);
            let p = combiner_problem(&r_half, &u_target, n);
            run_alg1(&p)?.f_a.adjoint()
        }
    };
    Ok((f_ar, r_half))
}

/// The structured pipeline shared by `proposed`, `uma` and `non_robust`.
fn structured(
    req: &DesignRequest,
    design_channels: ChannelSet,
    mode: AnalogMode,
) -> Result<(HybridDesign, DesignReport)> {
    let cfg = req.cfg;
    let hops = cfg.n_hops();
    let n = cfg.streams;
    let mut report = DesignReport::default();

    let wh: Vec<WhitenedHop> = (0..hops)
        .map(|k| whiten_hop(&design_channels.hops[k], cfg.power[k], cfg.noise[k]))
        .collect::<Result<_>>()?;

    // Destination analog equalizer: matched to the left singular vectors of
    // the whitened final hop; its row space is all that matters, so the
    // whitener is the identity.
    let dest_rf = cfg.rx(hops - 1).n_rf;
    let g_a = {
        let target = wh[hops - 1].svd.u_cols(dest_rf);
        match mode {
            AnalogMode::Alignment => phase_project(&target).adjoint(),
            AnalogMode::Iterative => {
                let eye = CMat::identity(target.nrows(), target.nrows());
                let p = AnalogDesignProblem::new(target, eye, n);
                run_alg1(&p)?.f_a.adjoint()
            }
        }
    };

    // First pass along the chain.
    let mut stages: Vec<NodeStages> = Vec::with_capacity(hops);
    let mut r_prev = CMat::identity(n, n) * C64::new(cfg.sigma0_sq, 0.0);
    for k in 0..hops {
        let n_rf = cfg.tx(k).n_rf;
        let f_al = analog_precoder(&wh[k], n_rf, n, mode)?;
        let (f_ar, f_ar_bar) = if k == 0 {
            let eye = CMat::identity(n, n);
            let bar = &eye * C64::new(cfg.sigma0_sq.sqrt(), 0.0);
            (eye, bar)
        } else {
            let (f_ar, r_half) =
                analog_combiner(&wh[k - 1].svd.u_cols(n_rf), &r_prev, n_rf, n, mode)?;
            let bar = &f_ar * &r_half;
            (f_ar, bar)
        };
        let sol = if k == 0 && hops > 1 {
            design_first_hop(&wh[k], &f_al, cfg.power[k], cfg.sigma0_sq, &req.obj, n)?
        } else if k + 1 < hops {
            design_intermediate_hop(&wh[k], &f_al, &f_ar_bar, cfg.power[k], &req.obj, n)?
        } else {
            design_final_hop(&wh[k], &f_al, &f_ar_bar, &g_a, cfg.power[k], &req.obj, n)?
        };
        report.rank_deficient |= sol.rank_deficient;
        let stage = NodeStages { f_al, f_d: sol.f_d, f_ar };
        let (r_next, _, _) = advance(&r_prev, &design_channels.hops[k], &stage.forward(), cfg.noise[k]);
        stages.push(stage);
        r_prev = r_next;
    }

    let mut design = HybridDesign {
        stages,
        g_a,
        g_d: CMat::identity(n, dest_rf),
        b: None,
    };

    // Refinement: re-solve each combiner and digital stage against the
    // latest link covariances.
    if mode == AnalogMode::Iterative && req.repeat_limit > 0 && hops > 1 {
        let mut tr = linear_mse(cfg, &design, &design_channels)?.sum_mse;
        report.refine_trace.push(tr);
        for _ in 0..req.repeat_limit {
            let mut r_prev = CMat::identity(n, n) * C64::new(cfg.sigma0_sq, 0.0);
            for k in 0..hops {
                if k > 0 {
                    let n_rf = cfg.tx(k).n_rf;
                    let (f_ar, r_half) =
                        analog_combiner(&wh[k - 1].svd.u_cols(n_rf), &r_prev, n_rf, n, mode)?;
                    let f_ar_bar = &f_ar * &r_half;
                    let sol = if k + 1 < hops {
                        design_intermediate_hop(
                            &wh[k],
                            &design.stages[k].f_al,
                            &f_ar_bar,
                            cfg.power[k],
                            &req.obj,
                            n,
                        )?
                    } else {
                        design_final_hop(
                            &wh[k],
                            &design.stages[k].f_al,
                            &f_ar_bar,
                            &design.g_a,
                            cfg.power[k],
                            &req.obj,
                            n,
                        )?
                    };
                    report.rank_deficient |= sol.rank_deficient;
                    design.stages[k].f_ar = f_ar;
                    design.stages[k].f_d = sol.f_d;
                }
                let (r_next, _, _) = advance(
                    &r_prev,
                    &design_channels.hops[k],
                    &design.forward(k),
                    cfg.noise[k],
                );
                r_prev = r_next;
            }
            let tr_new = linear_mse(cfg, &design, &design_channels)?.sum_mse;
            report.refine_trace.push(tr_new);
            let rel = (tr - tr_new).abs() / tr.max(1e-300);
            tr = tr_new;
            if rel < req.tolerance {
                break;
            }
        }
    }

    // Transmit powers are normalized against the true statistics: an AF
    // node scales to its measured input power, which includes the error
    // floor a non-robust design ignored. For the robust paths this is a
    // no-op rescale.
    normalize_powers(cfg, &mut design, req.channels);
    finish_design(cfg, design, &design_channels, &req.obj).map(|d| (d, report))
}

/// Scale each hop's digital stage so the realized transmit power matches
/// the budget exactly, chaining the covariance hop by hop.
fn normalize_powers(cfg: &NetworkConfig, design: &mut HybridDesign, channels: &ChannelSet) {
    let n = cfg.streams;
    let mut r_prev = CMat::identity(n, n) * C64::new(cfg.sigma0_sq, 0.0);
    for k in 0..cfg.n_hops() {
        let f = design.forward(k);
        let p_tx = (&f * &r_prev * f.adjoint()).trace().re;
        if p_tx > 0.0 {
            design.stages[k].f_d *= C64::new((cfg.power[k] / p_tx).sqrt(), 0.0);
        }
        let (r_next, _, _) = advance(&r_prev, &channels.hops[k], &design.forward(k), cfg.noise[k]);
        r_prev = r_next;
    }
}

/// Apply the source rotation for the objective family, then close the design
/// with the WMMSE equalizer and, on the nonlinear path, the feedback matrix.
fn finish_design(
    cfg: &NetworkConfig,
    mut design: HybridDesign,
    design_channels: &ChannelSet,
    obj: &ObjectiveSpec,
) -> Result<HybridDesign> {
    let phi0 = linear_mse(cfg, &design, design_channels)?.phi;
    let (v1, eigs) = hermitian_eigen(&phi0)?;
    let q0 = source_rotation(obj, &v1, &eigs, cfg.streams)?;
    design.stages[0].f_d = &design.stages[0].f_d * q0;
    design.g_d = optimal_equalizer(cfg, &design, design_channels)?;
    if obj.nonlinear() {
        let phi = linear_mse(cfg, &design, design_channels)?.phi;
        design.b = Some(nonlinear_feedback(&phi)?.0);
    }
    Ok(design)
}

/// Unconstrained benchmark: identity analog stages, RF chains as wide as the
/// arrays, per-hop whitened water-filled digital forwards.
pub fn full_digital(req: &DesignRequest) -> Result<HybridDesign> {
    let cfg = req.cfg;
    let hops = cfg.n_hops();
    let n = cfg.streams;
    let channels = req.channels;

    let mut stages = Vec::with_capacity(hops);
    let mut r_prev = CMat::identity(n, n) * C64::new(cfg.sigma0_sq, 0.0);
    let dest_n_r = cfg.rx(hops - 1).n_r;
    let g_a = CMat::identity(dest_n_r, dest_n_r);
    for k in 0..hops {
        let n_t = cfg.tx(k).n_t;
        let wh = whiten_hop(&channels.hops[k], cfg.power[k], cfg.noise[k])?;
        let f_al = CMat::identity(n_t, n_t);
        let (f_ar, f_ar_bar) = if k == 0 {
            let eye = CMat::identity(n, n);
            let bar = &eye * C64::new(cfg.sigma0_sq.sqrt(), 0.0);
            (eye, bar)
        } else {
            let n_r_prev = cfg.rx(k - 1).n_r;
            let r_half = hermitian_sqrt(&r_prev)?;
            (CMat::identity(n_r_prev, n_r_prev), r_half)
        };
        let sol = if k == 0 && hops > 1 {
            design_first_hop(&wh, &f_al, cfg.power[k], cfg.sigma0_sq, &req.obj, n)?
        } else if k + 1 < hops {
            design_intermediate_hop(&wh, &f_al, &f_ar_bar, cfg.power[k], &req.obj, n)?
        } else {
            design_final_hop(&wh, &f_al, &f_ar_bar, &g_a, cfg.power[k], &req.obj, n)?
        };
        let stage = NodeStages { f_al, f_d: sol.f_d, f_ar };
        let (r_next, _, _) = advance(&r_prev, &channels.hops[k], &stage.forward(), cfg.noise[k]);
        stages.push(stage);
        r_prev = r_next;
    }
    let design = HybridDesign {
        stages,
        g_a,
        g_d: CMat::identity(n, dest_n_r),
        b: None,
    };
    finish_design(cfg, design, channels, &req.obj)
}

/// Codebook of unit-modulus analog candidate columns.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub columns: CMat,
}

impl Codebook {
    pub fn new(columns: CMat) -> Result<Self> {
        let defect = crate::sysmodel::unit_modulus_defect(&columns);
        if defect > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "codebook entries must be unit modulus (defect {defect:.3e})"
            )));
        }
        Ok(Codebook { columns })
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }
}

/// Transmit- or receive-side codebook for one hop: path steering vectors
/// (scaled to unit modulus) for mmWave, the channel phase matrix for
/// Rayleigh channels.
pub fn hop_codebook(hop: &HopChannel, kind: ChannelKind, transmit_side: bool) -> Result<Codebook> {
    match kind {
        ChannelKind::Mmwave => {
            let (dim, angles) = if transmit_side {
                (hop.n_tx(), &hop.tx_angles)
            } else {
                (hop.n_rx(), &hop.rx_angles)
            };
            if angles.is_empty() {
                return Err(Error::Config("mmWave hop carries no path angles".into()));
            }
            let scale = (dim as f64).sqrt();
            let mut cols = CMat::zeros(dim, angles.len());
            for (j, &a) in angles.iter().enumerate() {
                let v = crate::channel::steering_vector(dim, a) * C64::new(scale, 0.0);
                cols.set_column(j, &v.column(0));
            }
            Codebook::new(cols)
        }
        ChannelKind::Rayleigh => {
            let phases = phase_project(&hop.h_hat);
            let cols = if transmit_side {
                phases.adjoint()
            } else {
                phases
            };
            Codebook::new(cols)
        }
    }
}

/// Orthogonal matching pursuit: greedily pick `n_rf` codebook columns with
/// maximal correlation to the residual, least-squares refit, residual
/// update. Returns the analog matrix and its digital coefficients.
pub fn omp_hybrid(target: &CMat, codebook: &Codebook, n_rf: usize) -> Result<(CMat, CMat)> {
    if codebook.len() < n_rf {
        return Err(Error::Config(format!(
            "codebook has {} columns, need {n_rf}",
            codebook.len()
        )));
    }
    if codebook.columns.nrows() != target.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "codebook rows {} vs target rows {}",
            codebook.columns.nrows(),
            target.nrows()
        )));
    }
    let mut selected: Vec<usize> = Vec::with_capacity(n_rf);
    let mut residual = target.clone();
    let mut analog = CMat::zeros(target.nrows(), 0);
    let mut digital = CMat::zeros(0, target.ncols());
    for _ in 0..n_rf {
        let corr = codebook.columns.adjoint() * &residual;
        let mut best = None;
        let mut best_score = -1.0f64;
        for l in 0..codebook.len() {
            if selected.contains(&l) {
                continue;
            }
            let score = corr.row(l).norm_squared();
            if score > best_score {
                best_score = score;
                best = Some(l);
            }
        }
        let pick = best.ok_or_else(|| Error::Config("codebook exhausted".into()))?;
        selected.push(pick);
        analog = {
            let mut a = CMat::zeros(target.nrows(), selected.len());
            for (j, &l) in selected.iter().enumerate() {
                a.set_column(j, &codebook.columns.column(l));
            }
            a
        };
        // Least-squares refit through the SVD (robust to correlated picks).
        let svd = analog.clone().svd(true, true);
        digital = svd
            .solve(target, 1e-12)
            .map_err(|e| Error::InvalidInput(format!("OMP least squares failed: {e}")))?;
        residual = target - &analog * &digital;
    }
    Ok((analog, digital))
}

#[derive(Debug, Clone, Copy)]
enum OmpInput {
    FullDigital,
    SvdAligned,
}

/// OMP baselines: fit per-node input beamformers from steering codebooks,
/// then normalize each hop to its power budget.
fn omp_design(req: &DesignRequest, input: OmpInput) -> Result<HybridDesign> {
    let cfg = req.cfg;
    let hops = cfg.n_hops();
    let n = cfg.streams;
    let channels = req.channels;

    // Per-node target forward matrices.
    let fd = match input {
        OmpInput::FullDigital => Some(full_digital(req)?),
        OmpInput::SvdAligned => None,
    };
    let hop_svds: Vec<_> = channels
        .hops
        .iter()
        .map(|h| ordered_svd(&h.h_hat))
        .collect::<Result<Vec<_>>>()?;

    let mut stages = Vec::with_capacity(hops);
    for k in 0..hops {
        let n_rf = cfg.tx(k).n_rf;
        let target = match (&fd, input) {
            (Some(fd), OmpInput::FullDigital) => fd.forward(k),
            (_, OmpInput::SvdAligned) => {
                if k == 0 {
                    hop_svds[0].v_cols(n)
                } else {
                    let take = hop_svds[k].v.ncols().min(hop_svds[k - 1].u.ncols());
                    hop_svds[k].v_cols(take) * hop_svds[k - 1].u_cols(take).adjoint()
                }
            }
            _ => unreachable!(),
        };
        let tx_cb = hop_codebook(&channels.hops[k], req.channel_kind, true)?;
        let (f_al, coeff) = omp_hybrid(&target, &tx_cb, n_rf)?;
        let (f_d, f_ar) = if k == 0 {
            (coeff, CMat::identity(n, n))
        } else {
            // Right-side fit on the receive array of the previous hop.
            let rx_cb = hop_codebook(&channels.hops[k - 1], req.channel_kind, false)?;
            let (g, _) = omp_hybrid(&target.adjoint(), &rx_cb, n_rf)?;
            let f_ar = g.adjoint();
            // Digital stage: least squares between the two analog factors.
            let al_svd = f_al.clone().svd(true, true);
            let left = al_svd
                .solve(&target, 1e-12)
                .map_err(|e| Error::InvalidInput(format!("OMP refit failed: {e}")))?;
            let ar_svd = f_ar.adjoint().svd(true, true);
            let right_t = ar_svd
                .solve(&left.adjoint(), 1e-12)
                .map_err(|e| Error::InvalidInput(format!("OMP refit failed: {e}")))?;
            (right_t.adjoint(), f_ar)
        };
        stages.push(NodeStages { f_al, f_d, f_ar });
    }

    // Destination analog equalizer.
    let dest_rf = cfg.rx(hops - 1).n_rf;
    let g_target = match (&fd, input) {
        (Some(fd), OmpInput::FullDigital) => fd.g_d.adjoint(),
        (_, OmpInput::SvdAligned) => hop_svds[hops - 1].u_cols(dest_rf.min(hop_svds[hops - 1].u.ncols())),
        _ => unreachable!(),
    };
    let rx_cb = hop_codebook(&channels.hops[hops - 1], req.channel_kind, false)?;
    let (g, _) = omp_hybrid(&g_target, &rx_cb, dest_rf)?;
    let g_a = g.adjoint();

    let mut design = HybridDesign {
        stages,
        g_a,
        g_d: CMat::identity(n, dest_rf),
        b: None,
    };

    // Hop-by-hop power normalization (each hop's scaling feeds the next
    // covariance).
    let mut r_prev = CMat::identity(n, n) * C64::new(cfg.sigma0_sq, 0.0);
    for k in 0..hops {
        let f = design.forward(k);
        let p_tx = (&f * &r_prev * f.adjoint()).trace().re;
        if p_tx > 0.0 {
            design.stages[k].f_d *= C64::new((cfg.power[k] / p_tx).sqrt(), 0.0);
        }
        let (r_next, _, _) = advance(&r_prev, &channels.hops[k], &design.forward(k), cfg.noise[k]);
        r_prev = r_next;
    }

    design.g_d = optimal_equalizer(cfg, &design, channels)?;
    if req.obj.nonlinear() {
        let phi = linear_mse(cfg, &design, channels)?.phi;
        design.b = Some(nonlinear_feedback(&phi)?.0);
    }
    Ok(design)
}
