//! Link evaluation: given a hybrid design and a channel set, compute the
//! covariance recursion, the data-estimation MSE matrix, the closed-form
//! digital equalizer, the THP/DFE feedback matrix and spectral efficiency.
//!
//! The covariance recursion treats the channel error statistically: each
//! hop adds `Tr(F R F^H Psi)` of error-induced noise on top of the thermal
//! noise, which is what a design sees when only the estimated channel is
//! known. Evaluating against a realized channel is the same computation with
//! `h_hat` replaced by the realization and `psi = 0`.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::matdecomp::{cholesky_lower, hermitian_residual, CMat, C64};
use crate::{Error, Result};

/// Antenna and RF-chain counts for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf: usize,
}

/// The K-hop topology: K+1 nodes, per-hop transmit power and noise power.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Source, relays, destination — in signal order.
    pub nodes: Vec<NodeConfig>,
    /// Number of data streams N.
    pub streams: usize,
    /// Transmit power budget of node k (the transmitter of hop k).
    pub power: Vec<f64>,
    /// Noise power at the receiver of hop k.
    pub noise: Vec<f64>,
    /// Source signal power per stream.
    pub sigma0_sq: f64,
}

impl NetworkConfig {
    pub fn n_hops(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Transmitting node of hop `k` (0-based).
    pub fn tx(&self, k: usize) -> &NodeConfig {
        &self.nodes[k]
    }

    /// Receiving node of hop `k`.
    pub fn rx(&self, k: usize) -> &NodeConfig {
        &self.nodes[k + 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::Config("need at least two nodes (one hop)".into()));
        }
        let k = self.n_hops();
        if self.power.len() != k || self.noise.len() != k {
            return Err(Error::Config(format!(
                "power and noise must have one entry per hop ({k})"
            )));
        }
        if self.streams == 0 {
            return Err(Error::Config("streams must be >= 1".into()));
        }
        if !(self.sigma0_sq > 0.0) {
            return Err(Error::Config("sigma0_sq must be positive".into()));
        }
        if self.power.iter().chain(self.noise.iter()).any(|&p| !(p > 0.0)) {
            return Err(Error::Config("powers and noise levels must be positive".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let is_source = i == 0;
            let is_dest = i == self.nodes.len() - 1;
            if self.streams > node.n_rf {
                return Err(Error::Config(format!(
                    "node {i}: streams {} exceed RF chains {}",
                    self.streams, node.n_rf
                )));
            }
            if !is_dest && node.n_rf > node.n_t {
                return Err(Error::Config(format!(
                    "node {i}: RF chains {} exceed transmit antennas {}",
                    node.n_rf, node.n_t
                )));
            }
            if !is_source && node.n_rf > node.n_r {
                return Err(Error::Config(format!(
                    "node {i}: RF chains {} exceed receive antennas {}",
                    node.n_rf, node.n_r
                )));
            }
        }
        Ok(())
    }
}

/// The three per-node stages of one forward matrix `F_k = f_al * f_d * f_ar`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStages {
    /// Analog transmit precoder, `n_t x n_rf`, unit-modulus.
    pub f_al: CMat,
    /// Digital forward matrix.
    pub f_d: CMat,
    /// Analog receive combiner, `n_rf x n_r_prev`, unit-modulus; the
    /// identity placeholder at the source.
    pub f_ar: CMat,
}

impl NodeStages {
    pub fn forward(&self) -> CMat {
        &self.f_al * &self.f_d * &self.f_ar
    }
}

/// A complete hybrid design for a K-hop chain.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridDesign {
    pub stages: Vec<NodeStages>,
    /// Destination analog equalizer, `n_rf x n_r`, unit-modulus.
    pub g_a: CMat,
    /// Destination digital equalizer, `N x n_rf`.
    pub g_d: CMat,
    /// Optional strictly lower triangular THP/DFE feedback matrix.
    pub b: Option<CMat>,
}

/// True when a matrix is an exact identity, which marks an analog stage that
/// is only a placeholder (the source combiner, full-digital stages).
pub fn is_identity_placeholder(m: &CMat) -> bool {
    m.nrows() == m.ncols() && m == &CMat::identity(m.nrows(), m.ncols())
}

/// Largest deviation of an analog matrix entry from unit modulus.
pub fn unit_modulus_defect(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max((z.norm() - 1.0).abs()))
}

impl HybridDesign {
    pub fn forward(&self, k: usize) -> CMat {
        self.stages[k].forward()
    }

    /// Check the design invariants: unit-modulus analog entries (identity
    /// placeholders excepted) and per-node transmit power within relative
    /// `1e-9` of the budget.
    pub fn validate(&self, cfg: &NetworkConfig, channels: &ChannelSet) -> Result<()> {
        for (k, st) in self.stages.iter().enumerate() {
            for (name, m) in [("f_al", &st.f_al), ("f_ar", &st.f_ar)] {
                if is_identity_placeholder(m) {
                    continue;
                }
                let defect = unit_modulus_defect(m);
                if defect > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "hop {k} {name}: unit-modulus defect {defect:.3e}"
                    )));
                }
            }
        }
        if !is_identity_placeholder(&self.g_a) && unit_modulus_defect(&self.g_a) > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "g_a unit-modulus defect {:.3e}",
                unit_modulus_defect(&self.g_a)
            )));
        }
        let state = propagate(cfg, self, channels)?;
        for (k, &p) in state.tx_power.iter().enumerate() {
            if p > cfg.power[k] * (1.0 + 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "hop {k} transmit power {p} exceeds budget {}",
                    cfg.power[k]
                )));
            }
        }
        Ok(())
    }
}

/// Covariances and equivalent noise along the chain.
#[derive(Debug, Clone)]
pub struct LinkState {
    /// `r_x[k]` is the covariance of the signal at the receive antennas of
    /// hop k (so `r_x[K-1]` is the covariance seen at the destination array).
    pub r_x: Vec<CMat>,
    /// Scalar equivalent noise power per hop.
    pub eta: Vec<f64>,
    /// Destination equivalent-noise covariance after the analog equalizer.
    pub k_n_dest: CMat,
    /// Realized transmit power `Tr(F_k R_{x,k-1} F_k^H)` per hop.
    pub tx_power: Vec<f64>,
}

/// Run the covariance recursion along the chain.
pub fn propagate(
    cfg: &NetworkConfig,
    design: &HybridDesign,
    channels: &ChannelSet,
) -> Result<LinkState> {
    let hops = cfg.n_hops();
    if channels.n_hops() != hops || design.stages.len() != hops {
        return Err(Error::ShapeMismatch(format!(
            "expected {hops} hops, channels have {} and design has {}",
            channels.n_hops(),
            design.stages.len()
        )));
    }
    let mut r_prev = CMat::identity(cfg.streams, cfg.streams) * C64::new(cfg.sigma0_sq, 0.0);
    let mut r_x = Vec::with_capacity(hops);
    let mut eta = Vec::with_capacity(hops);
    let mut tx_power = Vec::with_capacity(hops);
    for k in 0..hops {
        let hop = &channels.hops[k];
        let f = design.forward(k);
        if f.ncols() != r_prev.nrows() || hop.h_hat.ncols() != f.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "hop {k}: channel is {}x{}, forward is {}x{}, input dim {}",
                hop.h_hat.nrows(),
                hop.h_hat.ncols(),
                f.nrows(),
                f.ncols(),
                r_prev.nrows()
            )));
        }
        let t = &f * &r_prev * f.adjoint();
        let p_tx = t.trace().re;
        let err_noise = (&t * &hop.psi).trace().re;
        let eta_k = cfg.noise[k] + err_noise;
        let n_r = hop.h_hat.nrows();
        let r = &hop.h_hat * &t * hop.h_hat.adjoint()
            + CMat::identity(n_r, n_r) * C64::new(eta_k, 0.0);
        let r = (&r + r.adjoint()) * C64::new(0.5, 0.0);
        tx_power.push(p_tx);
        eta.push(eta_k);
        r_x.push(r.clone());
        r_prev = r;
    }
    let k_n_dest = &design.g_a * design.g_a.adjoint() * C64::new(eta[hops - 1], 0.0);
    Ok(LinkState { r_x, eta, k_n_dest, tx_power })
}

/// The estimated cascade `g_a * H_{K-1} F_{K-1} ... H_0 F_0` seen by the
/// digital equalizer.
pub fn cascade(design: &HybridDesign, channels: &ChannelSet) -> CMat {
    let mut m = design.forward(0);
    for k in 0..channels.n_hops() {
        m = &channels.hops[k].h_hat * m;
        if k + 1 < channels.n_hops() {
            m = design.forward(k + 1) * m;
        }
    }
    &design.g_a * m
}

/// Everything the harness records about one evaluated design.
#[derive(Debug, Clone)]
pub struct MseReport {
    /// Data-estimation MSE matrix (N x N, Hermitian PSD).
    pub phi: CMat,
    pub per_stream_mse: Vec<f64>,
    pub sum_mse: f64,
    pub spectral_efficiency: f64,
    /// `d^2[L]` of the Cholesky factor, present on the nonlinear path.
    pub nonlinear_per_stream_mse: Option<Vec<f64>>,
    /// Set when the inner matrix needed a ridge before inversion.
    pub regularized: bool,
}

impl MseReport {
    pub fn nonlinear_sum_mse(&self) -> Option<f64> {
        self.nonlinear_per_stream_mse.as_ref().map(|v| v.iter().sum())
    }
}

fn ridge_if_needed(inner: &mut CMat) -> bool {
    let n = inner.nrows();
    let scale = (inner.trace().re.abs() / n as f64).max(1e-300);
    if let Some(ch) = inner.clone().cholesky() {
        let l = ch.l();
        let ok = (0..n).all(|i| l[(i, i)].re > 1e-14 * scale && l[(i, i)].im.abs() < 1e-10);
        if ok {
            return false;
        }
    }
    let ridge = 1e-12 * scale;
    for i in 0..n {
        inner[(i, i)] += C64::new(ridge, 0.0);
    }
    true
}

fn destination_gram(
    cfg: &NetworkConfig,
    design: &HybridDesign,
    channels: &ChannelSet,
) -> Result<(CMat, CMat, bool)> {
    let state = propagate(cfg, design, channels)?;
    let m = cascade(design, channels);
    let mut inner = &design.g_a * &state.r_x[cfg.n_hops() - 1] * design.g_a.adjoint();
    inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
    let regularized = ridge_if_needed(&mut inner);
    Ok((m, inner, regularized))
}

/// MSE matrix of the linear hybrid receiver with the optimal digital
/// equalizer substituted in.
pub fn linear_mse(
    cfg: &NetworkConfig,
    design: &HybridDesign,
    channels: &ChannelSet,
) -> Result<MseReport> {
    let (m, inner, regularized) = destination_gram(cfg, design, channels)?;
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::NotPd("destination covariance".into()))?;
    let solved = chol.solve(&m);
    let s0 = cfg.sigma0_sq;
    let n = cfg.streams;
    let phi =
        CMat::identity(n, n) * C64::new(s0, 0.0) - m.adjoint() * solved * C64::new(s0 * s0, 0.0);
    let phi = (&phi + phi.adjoint()) * C64::new(0.5, 0.0);
    let per_stream: Vec<f64> = (0..n).map(|i| phi[(i, i)].re).collect();
    let se = spectral_efficiency(&phi, s0)?;
    Ok(MseReport {
        sum_mse: per_stream.iter().sum(),
        per_stream_mse: per_stream,
        spectral_efficiency: se,
        phi,
        nonlinear_per_stream_mse: None,
        regularized,
    })
}

/// Closed-form WMMSE digital equalizer
/// `g_d = sigma0^2 M^H (g_a R_x g_a^H)^{-1}`.
pub fn optimal_equalizer(
    cfg: &NetworkConfig,
    design: &HybridDesign,
    channels: &ChannelSet,
) -> Result<CMat> {
    let (m, inner, _) = destination_gram(cfg, design, channels)?;
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::NotPd("destination covariance".into()))?;
    // g_d^H = inner^{-1} m sigma0^2, so one solve and a transpose suffice.
    let solved = chol.solve(&m);
    Ok(solved.adjoint() * C64::new(cfg.sigma0_sq, 0.0))
}

/// Optimal THP/DFE feedback matrix for a given MSE matrix.
///
/// With `phi = L L^H`, returns `b = diag(d[L]) L^{-1} - I` (strictly lower
/// triangular) and the per-stream nonlinear MSEs `d^2[L]`.
pub fn nonlinear_feedback(phi: &CMat) -> Result<(CMat, Vec<f64>)> {
    let l = cholesky_lower(phi)?;
    let n = l.nrows();
    let diag: Vec<f64> = (0..n).map(|i| l[(i, i)].re).collect();
    let mut linv = CMat::identity(n, n);
    l.solve_lower_triangular_mut(&mut linv);
    let d = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(diag[i], 0.0)
        } else {
            C64::default()
        }
    });
    let b = d * linv - CMat::identity(n, n);
    Ok((b, diag.iter().map(|x| x * x).collect()))
}

/// Spectral efficiency `log2 det(sigma0^2 phi^{-1})` in bits/s/Hz.
pub fn spectral_efficiency(phi: &CMat, sigma0_sq: f64) -> Result<f64> {
    if hermitian_residual(phi) > 1e-10 {
        return Err(Error::InvalidInput("phi must be Hermitian".into()));
    }
    let l = cholesky_lower(phi)?;
    let n = phi.nrows() as f64;
    let log2_det_phi: f64 = (0..phi.nrows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum();
    Ok((n * sigma0_sq.log2() - log2_det_phi).max(0.0))
}
