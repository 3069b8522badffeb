//! Channel generation: estimated channels (mmWave and Rayleigh), the
//! exponential error-correlation model, and true-channel realization.
//!
//! The estimated channel `h_hat` is the design-time primitive; a realized
//! channel is `h_hat + h_w * psi^(1/2)` with `h_w` an i.i.d. unit complex
//! Gaussian matrix. Channel sets can be exported to and re-imported from a
//! plain text format (`re,im` CSV blocks) so experiments can be replayed.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matdecomp::{check_finite, hermitian_residual, hermitian_sqrt, CMat, C64};
use crate::{Error, Result};

/// Which fading model generates estimated channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Mmwave,
    Rayleigh,
}

/// Channel model plus the knobs it needs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelModelSpec {
    pub kind: ChannelKind,
    /// Number of propagation paths; only meaningful for mmWave.
    pub n_paths: usize,
    pub seed: u64,
}

impl ChannelModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ChannelKind::Mmwave && self.n_paths == 0 {
            return Err(Error::Config("mmWave model needs n_paths >= 1".into()));
        }
        Ok(())
    }
}

/// One hop: estimated channel, error-correlation matrix and (optionally) a
/// realized true channel.
#[derive(Debug, Clone)]
pub struct HopChannel {
    pub h_hat: CMat,
    pub psi: CMat,
    pub h_true: Option<CMat>,
    /// mmWave path directions of the realized geometry, kept so baseline
    /// designs can build steering-vector codebooks. Empty for Rayleigh.
    pub tx_angles: Vec<f64>,
    pub rx_angles: Vec<f64>,
}

impl HopChannel {
    pub fn new(h_hat: CMat, psi: CMat) -> Result<Self> {
        if psi.nrows() != psi.ncols() || psi.nrows() != h_hat.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "psi must be {n}x{n} for a channel with {n} transmit antennas",
                n = h_hat.ncols()
            )));
        }
        if hermitian_residual(&psi) > 1e-10 {
            return Err(Error::InvalidInput("psi must be Hermitian".into()));
        }
        Ok(HopChannel { h_hat, psi, h_true: None, tx_angles: vec![], rx_angles: vec![] })
    }

    pub fn n_rx(&self) -> usize {
        self.h_hat.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.h_hat.ncols()
    }
}

/// The K hops of one network realization, source side first.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub hops: Vec<HopChannel>,
}

impl ChannelSet {
    pub fn new(hops: Vec<HopChannel>) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::Config("a channel set needs at least one hop".into()));
        }
        Ok(ChannelSet { hops })
    }

    pub fn n_hops(&self) -> usize {
        self.hops.len()
    }

    /// View of the set with `psi` zeroed on every hop: what a non-robust
    /// design works from.
    pub fn with_zero_psi(&self) -> ChannelSet {
        let hops = self
            .hops
            .iter()
            .map(|h| {
                let n = h.n_tx();
                let mut hop = h.clone();
                hop.psi = CMat::zeros(n, n);
                hop
            })
            .collect();
        ChannelSet { hops }
    }

    /// Evaluation view: every hop's estimate replaced by its realization
    /// and `psi` zeroed. Errors if any hop lacks a realization.
    pub fn to_realized(&self) -> Result<ChannelSet> {
        let hops = self
            .hops
            .iter()
            .map(|h| {
                let h_true = h
                    .h_true
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("hop has no realized channel".into()))?;
                let n = h.n_tx();
                let mut hop = h.clone();
                hop.h_hat = h_true;
                hop.psi = CMat::zeros(n, n);
                Ok(hop)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelSet { hops })
    }
}

/// One draw of an i.i.d. circularly-symmetric unit-variance complex Gaussian
/// matrix.
pub fn rayleigh_channel(n_r: usize, n_t: usize, rng: &mut ChaCha8Rng) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(n_r, n_t, |_, _| {
        C64::new(gauss(rng) * scale, gauss(rng) * scale)
    })
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::StandardNormal;
    rng.sample(StandardNormal)
}

/// Half-wavelength uniform linear array steering vector, entries of modulus
/// `1/sqrt(n)`.
pub fn steering_vector(n: usize, angle: f64) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, 1, |i, _| {
        C64::from_polar(scale, std::f64::consts::PI * i as f64 * angle.sin())
    })
}

/// Clustered narrowband mmWave channel:
/// `H = sqrt(n_t n_r / n_paths) * sum_p alpha_p a_r(theta_p) a_t(phi_p)^H`
/// with unit complex Gaussian path gains and angles uniform on `[0, 2pi)`.
///
/// Returns the channel together with the drawn (tx, rx) path angles.
pub fn mmwave_channel(
    n_r: usize,
    n_t: usize,
    n_paths: usize,
    rng: &mut ChaCha8Rng,
) -> (CMat, Vec<f64>, Vec<f64>) {
    assert!(n_r >= 1 && n_t >= 1 && n_paths >= 1);
    let mut h = CMat::zeros(n_r, n_t);
    let mut tx_angles = Vec::with_capacity(n_paths);
    let mut rx_angles = Vec::with_capacity(n_paths);
    let scale = 1.0 / std::f64::consts::SQRT_2;
    for _ in 0..n_paths {
        let alpha = C64::new(gauss(rng) * scale, gauss(rng) * scale);
        let theta = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        let phi = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        let ar = steering_vector(n_r, theta);
        let at = steering_vector(n_t, phi);
        h += (&ar * at.adjoint()) * alpha;
        rx_angles.push(theta);
        tx_angles.push(phi);
    }
    let norm = ((n_t * n_r) as f64 / n_paths as f64).sqrt();
    (h * C64::new(norm, 0.0), tx_angles, rx_angles)
}

/// Exponential error-correlation matrix
/// `[psi]_{i,l} = sigma_e * alpha_e^|i-l|`.
pub fn error_correlation(n: usize, sigma_e: f64, alpha_e: f64) -> Result<CMat> {
    if !(0.0..1.0).contains(&alpha_e) {
        return Err(Error::InvalidInput(format!(
            "alpha_e must be in [0, 1), got {alpha_e}"
        )));
    }
    if sigma_e < 0.0 || !sigma_e.is_finite() {
        return Err(Error::InvalidInput("sigma_e must be non-negative".into()));
    }
    Ok(CMat::from_fn(n, n, |i, l| {
        let d = i.abs_diff(l) as u32;
        C64::new(sigma_e * alpha_e.powi(d as i32), 0.0)
    }))
}

/// Draw a true channel `h_hat + h_w * psi^(1/2)` for the given hop.
pub fn realize_channel(hop: &HopChannel, rng: &mut ChaCha8Rng) -> Result<CMat> {
    let psi_half = hermitian_sqrt(&hop.psi)?;
    let h_w = rayleigh_channel(hop.n_rx(), hop.n_tx(), rng);
    Ok(&hop.h_hat + h_w * psi_half)
}

// ── Text export / import ─────────────────────────────────────────────────
//
// Format (one matrix block per line group):
//
//   # chanset hops=<K> seed=<seed>
//   # hop <k> <field> rows=<r> cols=<c>
//   re,im re,im ...        (one row per line, entries space separated)
//
// `field` is `h_hat`, `psi` or `h_true`.

fn write_matrix(out: &mut String, label: &str, k: usize, m: &CMat) {
    let _ = writeln!(out, "# hop {} {} rows={} cols={}", k, label, m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{},{}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Serialize a channel set to the documented text format.
pub fn channel_set_to_text(set: &ChannelSet, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# chanset hops={} seed={}", set.hops.len(), seed);
    for (k, hop) in set.hops.iter().enumerate() {
        write_matrix(&mut out, "h_hat", k, &hop.h_hat);
        write_matrix(&mut out, "psi", k, &hop.psi);
        if let Some(ht) = &hop.h_true {
            write_matrix(&mut out, "h_true", k, ht);
        }
    }
    out
}

/// Parse a channel set from the text format produced by
/// [`channel_set_to_text`].
pub fn channel_set_from_text(text: &str) -> Result<ChannelSet> {
    let mut lines = text.lines().peekable();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty channel file".into()))?;
    let hops_count = header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("hops=").and_then(|v| v.parse::<usize>().ok()))
        .ok_or_else(|| Error::Parse("missing hops= in header".into()))?;

    let mut fields: Vec<(usize, String, CMat)> = Vec::new();
    while let Some(line) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 5 || toks[0] != "#" || toks[1] != "hop" {
            return Err(Error::Parse(format!("unexpected line: {line}")));
        }
        let k: usize = toks[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad hop index in: {line}")))?;
        let label = toks[3].to_string();
        let rows = parse_kv(toks[4], "rows")?;
        let cols = parse_kv(toks[5], "cols")?;
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            let row = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated matrix block".into()))?;
            let entries: Vec<&str> = row.split_whitespace().collect();
            if entries.len() != cols {
                return Err(Error::Parse(format!(
                    "row {i} of {label} has {} entries, expected {cols}",
                    entries.len()
                )));
            }
            for (j, e) in entries.iter().enumerate() {
                let (re, im) = e
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("bad complex entry: {e}")))?;
                m[(i, j)] = C64::new(
                    re.parse().map_err(|_| Error::Parse(format!("bad float: {re}")))?,
                    im.parse().map_err(|_| Error::Parse(format!("bad float: {im}")))?,
                );
            }
        }
        check_finite(&m, "imported matrix")?;
        fields.push((k, label, m));
    }

    let mut hops = Vec::new();
    for k in 0..hops_count {
        let h_hat = fields
            .iter()
            .find(|(i, l, _)| *i == k && l == "h_hat")
            .map(|(_, _, m)| m.clone())
            .ok_or_else(|| Error::Parse(format!("hop {k} missing h_hat")))?;
        let psi = fields
            .iter()
            .find(|(i, l, _)| *i == k && l == "psi")
            .map(|(_, _, m)| m.clone())
            .ok_or_else(|| Error::Parse(format!("hop {k} missing psi")))?;
        let h_true = fields
            .iter()
            .find(|(i, l, _)| *i == k && l == "h_true")
            .map(|(_, _, m)| m.clone());
        let mut hop = HopChannel::new(h_hat, psi)?;
        hop.h_true = h_true;
        hops.push(hop);
    }
    ChannelSet::new(hops)
}

fn parse_kv(tok: &str, key: &str) -> Result<usize> {
    tok.strip_prefix(&format!("{key}="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse(format!("expected {key}=<n>, got {tok}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matdecomp::{ordered_svd, testutil};
    use approx::assert_relative_eq;

    #[test]
    fn rayleigh_moments_match_monte_carlo_oracle() {
        let mut rng = crate::rng::stream(1, &[0]);
        let n = 100_000usize;
        let mut sum = C64::default();
        let mut sum_sq = 0.0f64;
        for _ in 0..n / 4 {
            let h = rayleigh_channel(2, 2, &mut rng);
            for z in h.iter() {
                sum += z;
                sum_sq += z.norm_sqr();
            }
        }
        let mean = sum / C64::new(n as f64, 0.0);
        assert!(mean.norm() < 0.02, "mean {mean}");
        assert_relative_eq!(sum_sq / n as f64, 1.0, epsilon = 0.02);
    }

    #[test]
    fn rayleigh_fixed_seed_is_bit_identical() {
        let a = rayleigh_channel(3, 4, &mut crate::rng::stream(9, &[7]));
        let b = rayleigh_channel(3, 4, &mut crate::rng::stream(9, &[7]));
        assert_eq!(a, b);
    }

    #[test]
    fn mmwave_single_path_is_rank_one() {
        let mut rng = crate::rng::stream(2, &[0]);
        let (h, _, _) = mmwave_channel(6, 8, 1, &mut rng);
        let svd = ordered_svd(&h).unwrap();
        assert!(svd.s[1] < 1e-10 * svd.s[0]);
    }

    #[test]
    fn mmwave_frobenius_energy_matches_oracle() {
        let mut rng = crate::rng::stream(3, &[0]);
        let (n_r, n_t) = (4, 6);
        let mut acc = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let (h, _, _) = mmwave_channel(n_r, n_t, 10, &mut rng);
            acc += h.norm_squared();
        }
        assert_relative_eq!(acc / draws as f64, (n_r * n_t) as f64, max_relative = 0.03);
    }

    #[test]
    fn steering_entries_have_uniform_modulus() {
        let a = steering_vector(8, 0.7);
        for z in a.iter() {
            assert_relative_eq!(z.norm(), 1.0 / 8.0f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn error_correlation_cases() {
        let z = error_correlation(4, 0.0, 0.5).unwrap();
        assert!(z.norm() == 0.0);
        let d = error_correlation(4, 0.3, 0.0).unwrap();
        assert!((d - testutil::identity(4) * C64::new(0.3, 0.0)).norm() < 1e-15);
        // alpha_e = 0.6 exercised at matrix scale: strictly positive definite.
        let p = error_correlation(16, 0.1, 0.6).unwrap();
        let eigs = p.clone().symmetric_eigen().eigenvalues;
        assert!(eigs.iter().all(|&e| e > 0.0));
        assert!(hermitian_residual(&p) < 1e-14);
        assert!(error_correlation(4, 0.1, 1.0).is_err());
    }

    #[test]
    fn realize_channel_is_exact_with_zero_psi() {
        let mut rng = crate::rng::stream(4, &[0]);
        let h_hat = rayleigh_channel(3, 3, &mut rng);
        let hop = HopChannel::new(h_hat.clone(), CMat::zeros(3, 3)).unwrap();
        let h = realize_channel(&hop, &mut rng).unwrap();
        assert_eq!(h, h_hat);
    }

    #[test]
    fn realize_channel_error_covariance_oracle() {
        let mut rng = crate::rng::stream(5, &[0]);
        let n = 4;
        let psi = error_correlation(n, 0.2, 0.6).unwrap();
        let hop = HopChannel::new(CMat::zeros(n, n), psi.clone()).unwrap();
        let draws = 10_000;
        let mut tx_cov = CMat::zeros(n, n);
        let mut rx_cov = CMat::zeros(n, n);
        for _ in 0..draws {
            let e = realize_channel(&hop, &mut rng).unwrap();
            tx_cov += e.adjoint() * &e;
            rx_cov += &e * e.adjoint();
        }
        tx_cov /= C64::new(draws as f64, 0.0);
        rx_cov /= C64::new(draws as f64, 0.0);
        let expected_tx = &psi * C64::new(n as f64, 0.0);
        let expected_rx = testutil::identity(n) * C64::new(psi.trace().re, 0.0);
        assert!(
            (&tx_cov - &expected_tx).norm() / expected_tx.norm() < 0.03,
            "tx covariance off by {}",
            (&tx_cov - &expected_tx).norm() / expected_tx.norm()
        );
        assert!((&rx_cov - &expected_rx).norm() / expected_rx.norm() < 0.03);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = crate::rng::stream(6, &[0]);
        let psi = error_correlation(3, 0.1, 0.6).unwrap();
        let mut hop = HopChannel::new(rayleigh_channel(2, 3, &mut rng), psi).unwrap();
        hop.h_true = Some(realize_channel(&hop, &mut rng).unwrap());
        let hop2 = HopChannel::new(rayleigh_channel(4, 2, &mut rng), CMat::zeros(2, 2)).unwrap();
        let set = ChannelSet::new(vec![hop, hop2]).unwrap();
        let text = channel_set_to_text(&set, 6);
        let back = channel_set_from_text(&text).unwrap();
        assert_eq!(back.hops.len(), 2);
        assert_eq!(back.hops[0].h_hat, set.hops[0].h_hat);
        assert_eq!(back.hops[0].psi, set.hops[0].psi);
        assert_eq!(back.hops[0].h_true, set.hops[0].h_true);
        assert_eq!(back.hops[1].h_hat, set.hops[1].h_hat);
        // And the re-serialization is byte identical.
        assert_eq!(channel_set_to_text(&back, 6), text);
    }
}
