//! Monte-Carlo experiment harness.
//!
//! One config file fully determines an experiment: topology, channel model,
//! SNR and error-strength grids, algorithms, objective, trial count and
//! seed. Trials are independent work units on pre-split random streams and
//! results are merged in trial order, so serial and parallel runs emit
//! byte-identical CSVs.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    error_correlation, mmwave_channel, rayleigh_channel, ChannelKind, ChannelSet, HopChannel,
};
use crate::designer::{design_with_report, Algorithm, DesignRequest};
use crate::matdecomp::hermitian_sqrt;
use crate::rng::{stream, Purpose};
use crate::structopt::{ConcreteObjective, ObjectiveFamily, ObjectiveSpec};
use crate::sysmodel::{linear_mse, nonlinear_feedback, NetworkConfig, NodeConfig};
use crate::{Error, Result};

/// A fully parsed experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Antennas per node, source first.
    pub antennas: Vec<usize>,
    /// RF chains per node.
    pub rf_chains: Vec<usize>,
    pub streams: usize,
    /// Transmit power per transmitting node.
    pub power: Vec<f64>,
    pub sigma0_sq: f64,
    pub channel: ChannelKind,
    pub paths: usize,
    pub snr_db_grid: Vec<f64>,
    pub sigma_e_grid: Vec<f64>,
    pub alpha_e: f64,
    pub algorithms: Vec<Algorithm>,
    pub objective: ObjectiveSpec,
    pub trials: usize,
    pub seed: u64,
    pub repeat_limit: usize,
    pub tolerance: f64,
    /// Where `run` results land; not part of the experiment identity.
    #[serde(skip_serializing, default)]
    pub output_path: Option<String>,
    /// Execution detail only — results are byte-identical either way.
    #[serde(skip_serializing, default)]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn n_hops(&self) -> usize {
        self.antennas.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas.len() < 2 {
            return Err(Error::Config("need at least two nodes".into()));
        }
        if self.rf_chains.len() != self.antennas.len() {
            return Err(Error::Config("one rf_chains entry per node".into()));
        }
        if self.power.len() != self.n_hops() {
            return Err(Error::Config("one power entry per transmitting node".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.snr_db_grid.is_empty() || self.sigma_e_grid.is_empty() {
            return Err(Error::Config("snr and sigma_e grids must be non-empty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm".into()));
        }
        if !(0.0..1.0).contains(&self.alpha_e) {
            return Err(Error::Config("alpha_e must be in [0, 1)".into()));
        }
        if self.channel == ChannelKind::Mmwave && self.paths == 0 {
            return Err(Error::Config("mmWave model needs paths >= 1".into()));
        }
        // Noise value is irrelevant for structural validation.
        self.network_for(1.0).validate()
    }

    /// Network config at a given per-node noise power.
    pub fn network_for(&self, sigma_n2: f64) -> NetworkConfig {
        let nodes = self
            .antennas
            .iter()
            .zip(self.rf_chains.iter())
            .map(|(&a, &rf)| NodeConfig { n_t: a, n_r: a, n_rf: rf })
            .collect();
        NetworkConfig {
            nodes,
            streams: self.streams,
            power: self.power.clone(),
            noise: vec![sigma_n2; self.n_hops()],
            sigma0_sq: self.sigma0_sq,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        file.into_config()
    }

    pub fn echo_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

// ── Config file schema ───────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> OneOrMany<T> {
    fn broadcast(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; n]),
            OneOrMany::Many(vs) if vs.len() == n => Ok(vs.clone()),
            OneOrMany::Many(vs) => Err(Error::Config(format!(
                "{what}: expected 1 or {n} entries, got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct NetworkSection {
    antennas: Vec<usize>,
    rf_chains: OneOrMany<usize>,
    streams: usize,
    power: OneOrMany<f64>,
    #[serde(default = "default_sigma0")]
    sigma0_sq: f64,
}

fn default_sigma0() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
struct ChannelSection {
    model: ChannelKind,
    #[serde(default = "default_paths")]
    paths: usize,
}

fn default_paths() -> usize {
    10
}

#[derive(Debug, Deserialize, Default)]
struct ErrorSection {
    #[serde(default)]
    sigma_e: Vec<f64>,
    #[serde(default = "default_alpha_e")]
    alpha_e: f64,
}

fn default_alpha_e() -> f64 {
    0.6
}

#[derive(Debug, Deserialize)]
struct SweepSection {
    snr_db: Vec<f64>,
    trials: usize,
    seed: u64,
    algorithms: Vec<Algorithm>,
    objective: ConcreteObjective,
    family: Option<ObjectiveFamily>,
    #[serde(default = "default_repeat")]
    repeat_limit: usize,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_parallel")]
    parallel: bool,
}

fn default_repeat() -> usize {
    3
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_parallel() -> bool {
    true
}

#[derive(Debug, Deserialize, Default)]
struct OutputSection {
    path: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ConfigFile {
    network: NetworkSection,
    channel: ChannelSection,
    #[serde(default)]
    errors: ErrorSection,
    sweep: SweepSection,
    #[serde(default)]
    output: OutputSection,
}

impl ConfigFile {
    fn into_config(self) -> Result<ExperimentConfig> {
        let nodes = self.network.antennas.len();
        let hops = nodes.saturating_sub(1);
        let family = self.sweep.family.unwrap_or(match self.sweep.objective {
            ConcreteObjective::SumCapacity => ObjectiveFamily::AddSchurConcave,
            ConcreteObjective::SumMse => ObjectiveFamily::AddSchurConvex,
        });
        let mut sigma_e = self.errors.sigma_e;
        if sigma_e.is_empty() {
            sigma_e.push(0.0);
        }
        let cfg = ExperimentConfig {
            antennas: self.network.antennas,
            rf_chains: self.network.rf_chains.broadcast(nodes, "rf_chains")?,
            streams: self.network.streams,
            power: self.network.power.broadcast(hops, "power")?,
            sigma0_sq: self.network.sigma0_sq,
            channel: self.channel.model,
            paths: self.channel.paths,
            snr_db_grid: self.sweep.snr_db,
            sigma_e_grid: sigma_e,
            alpha_e: self.errors.alpha_e,
            algorithms: self.sweep.algorithms,
            objective: ObjectiveSpec { family, concrete: self.sweep.objective },
            trials: self.sweep.trials,
            seed: self.sweep.seed,
            repeat_limit: self.sweep.repeat_limit,
            tolerance: self.sweep.tolerance,
            output_path: self.output.path,
            parallel: self.sweep.parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

// ── Results ──────────────────────────────────────────────────────────────

/// One evaluated (grid point, trial, algorithm) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub sigma_e: f64,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub objective: ObjectiveSpec,
    pub spectral_efficiency: f64,
    pub sum_mse: f64,
    pub nonlinear_sum_mse: Option<f64>,
    /// Refinement passes the design actually ran.
    pub iters: usize,
    pub wall_time_ms: f64,
    /// Empty on success; otherwise a short diagnosis. Flagged rows keep
    /// NaN metrics and are never dropped.
    pub flags: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub config_echo: String,
    pub version: String,
}

fn objective_token(o: &ObjectiveSpec) -> String {
    let fam = match o.family {
        ObjectiveFamily::AddSchurConvex => "add_schur_convex",
        ObjectiveFamily::AddSchurConcave => "add_schur_concave",
        ObjectiveFamily::MultSchurConvex => "mult_schur_convex",
        ObjectiveFamily::MultSchurConcave => "mult_schur_concave",
    };
    let con = match o.concrete {
        ConcreteObjective::SumCapacity => "sum_capacity",
        ConcreteObjective::SumMse => "sum_mse",
    };
    format!("{fam}:{con}")
}

fn objective_from_token(tok: &str) -> Result<ObjectiveSpec> {
    let (fam, con) = tok
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("bad objective token: {tok}")))?;
    let family = match fam {
        "add_schur_convex" => ObjectiveFamily::AddSchurConvex,
        "add_schur_concave" => ObjectiveFamily::AddSchurConcave,
        "mult_schur_convex" => ObjectiveFamily::MultSchurConvex,
        "mult_schur_concave" => ObjectiveFamily::MultSchurConcave,
        other => return Err(Error::Parse(format!("bad objective family: {other}"))),
    };
    let concrete = match con {
        "sum_capacity" => ConcreteObjective::SumCapacity,
        "sum_mse" => ConcreteObjective::SumMse,
        other => return Err(Error::Parse(format!("bad objective: {other}"))),
    };
    Ok(ObjectiveSpec { family, concrete })
}

/// Run the full sweep described by the config.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let trial_ids: Vec<usize> = (0..config.trials).collect();
    let run_trial = |&trial: &usize| -> Result<Vec<ResultRow>> { run_one_trial(config, trial) };
    let per_trial: Vec<Vec<ResultRow>> = if config.parallel {
        trial_ids
            .par_iter()
            .map(run_trial)
            .collect::<Result<Vec<_>>>()?
    } else {
        trial_ids
            .iter()
            .map(run_trial)
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ExperimentResult {
        rows: per_trial.into_iter().flatten().collect(),
        config_echo: config.echo_toml(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

fn run_one_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<ResultRow>> {
    let hops = config.n_hops();
    // Estimated channels and the error realization are drawn once per trial
    // and shared across the grid so comparisons are paired.
    let mut h_hats = Vec::with_capacity(hops);
    let mut h_ws = Vec::with_capacity(hops);
    let mut angles = Vec::with_capacity(hops);
    for k in 0..hops {
        let (n_r, n_t) = (config.antennas[k + 1], config.antennas[k]);
        let mut rng_est = stream(
            config.seed,
            &[Purpose::EstimatedChannel.label(), trial as u64, k as u64],
        );
        let (h, a) = match config.channel {
            ChannelKind::Mmwave => {
                let (h, tx_a, rx_a) = mmwave_channel(n_r, n_t, config.paths, &mut rng_est);
                (h, Some((tx_a, rx_a)))
            }
            ChannelKind::Rayleigh => (rayleigh_channel(n_r, n_t, &mut rng_est), None),
        };
        let mut rng_real = stream(
            config.seed,
            &[Purpose::ErrorRealization.label(), trial as u64, k as u64],
        );
        h_ws.push(rayleigh_channel(n_r, n_t, &mut rng_real));
        h_hats.push(h);
        angles.push(a);
    }

    let mut rows = Vec::new();
    for &sigma_e in &config.sigma_e_grid {
        // Channel set for this error strength, realization included.
        let mut hop_vec = Vec::with_capacity(hops);
        for k in 0..hops {
            let n_t = config.antennas[k];
            let psi = error_correlation(n_t, sigma_e, config.alpha_e)?;
            let psi_half = hermitian_sqrt(&psi)?;
            let mut hop = HopChannel::new(h_hats[k].clone(), psi)?;
            hop.h_true = Some(&h_hats[k] + &h_ws[k] * psi_half);
            if let Some((tx_a, rx_a)) = &angles[k] {
                hop.tx_angles = tx_a.clone();
                hop.rx_angles = rx_a.clone();
            }
            hop_vec.push(hop);
        }
        let set = ChannelSet::new(hop_vec)?;
        let realized = set.to_realized()?;

        for &snr_db in &config.snr_db_grid {
            let sigma_n2 = config.power[0] / 10f64.powf(snr_db / 10.0);
            let cfg = config.network_for(sigma_n2);
            for &alg in &config.algorithms {
                let started = Instant::now();
                let mut req =
                    DesignRequest::new(&cfg, &set, config.objective, alg, config.channel);
                req.repeat_limit = config.repeat_limit;
                req.tolerance = config.tolerance;
                let row = match design_with_report(&req) {
                    Ok((design, report)) => {
                        match linear_mse(&cfg, &design, &realized) {
                            Ok(rep) => {
                                let nl = if config.objective.nonlinear() {
                                    nonlinear_feedback(&rep.phi)
                                        .ok()
                                        .map(|(_, d2)| d2.iter().sum())
                                } else {
                                    None
                                };
                                ResultRow {
                                    snr_db,
                                    sigma_e,
                                    trial,
                                    algorithm: alg,
                                    objective: config.objective,
                                    spectral_efficiency: rep.spectral_efficiency,
                                    sum_mse: rep.sum_mse,
                                    nonlinear_sum_mse: nl,
                                    iters: report.refine_trace.len().saturating_sub(1),
                                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                                    flags: if rep.regularized {
                                        "regularized".into()
                                    } else {
                                        String::new()
                                    },
                                }
                            }
                            Err(e) => flagged_row(config, snr_db, sigma_e, trial, alg, started, e),
                        }
                    }
                    Err(e) => flagged_row(config, snr_db, sigma_e, trial, alg, started, e),
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn flagged_row(
    config: &ExperimentConfig,
    snr_db: f64,
    sigma_e: f64,
    trial: usize,
    algorithm: Algorithm,
    started: Instant,
    err: Error,
) -> ResultRow {
    ResultRow {
        snr_db,
        sigma_e,
        trial,
        algorithm,
        objective: config.objective,
        spectral_efficiency: f64::NAN,
        sum_mse: f64::NAN,
        nonlinear_sum_mse: None,
        iters: 0,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        flags: format!("design_failed: {err}").replace(',', ";"),
    }
}

// ── CSV ──────────────────────────────────────────────────────────────────

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub const RESULT_COLUMNS: &str =
    "snr_db,sigma_e,trial,algorithm,objective,spectral_efficiency,sum_mse,nonlinear_sum_mse,iters,flags";

impl ExperimentResult {
    /// Serialize to the documented CSV layout. `timing` appends the
    /// wall-time column, which is excluded from the determinism contract.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# relaybeam v{} results", self.version);
        let _ = writeln!(out, "# config-echo-begin");
        for line in self.config_echo.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# config-echo-end");
        let _ = writeln!(
            out,
            "{}{}",
            RESULT_COLUMNS,
            if timing { ",wall_time_ms" } else { "" }
        );
        for r in &self.rows {
            let nl = r.nonlinear_sum_mse.map(fmt_f64).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.snr_db),
                fmt_f64(r.sigma_e),
                r.trial,
                r.algorithm.name(),
                objective_token(&r.objective),
                fmt_f64(r.spectral_efficiency),
                fmt_f64(r.sum_mse),
                nl,
                r.iters,
                r.flags,
            );
            if timing {
                let _ = write!(out, ",{:.3}", r.wall_time_ms);
            }
            out.push('\n');
        }
        out
    }
}

/// Parse rows back from a results CSV (comment lines ignored).
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if !line.starts_with("snr_db,") {
                return Err(Error::Parse(format!("unexpected header: {line}")));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 10 {
            return Err(Error::Parse(format!("short row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad float: {s}")))
        };
        rows.push(ResultRow {
            snr_db: parse(f[0])?,
            sigma_e: parse(f[1])?,
            trial: f[2]
                .parse()
                .map_err(|_| Error::Parse(format!("bad trial: {}", f[2])))?,
            algorithm: f[3].parse()?,
            objective: objective_from_token(f[4])?,
            spectral_efficiency: parse(f[5])?,
            sum_mse: parse(f[6])?,
            nonlinear_sum_mse: if f[7].is_empty() { None } else { Some(parse(f[7])?) },
            iters: f[8]
                .parse()
                .map_err(|_| Error::Parse(format!("bad iters: {}", f[8])))?,
            wall_time_ms: 0.0,
            flags: f[9].to_string(),
        });
    }
    if !saw_header {
        return Err(Error::Parse("no header row found".into()));
    }
    Ok(rows)
}

// ── Summaries ────────────────────────────────────────────────────────────

/// Per-(algorithm, grid point) mean and 95% confidence half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub sigma_e: f64,
    pub algorithm: Algorithm,
    pub n: usize,
    pub mean_se: f64,
    pub ci_se: f64,
    pub mean_sum_mse: f64,
    pub ci_sum_mse: f64,
    pub mean_nl_sum_mse: Option<f64>,
    pub ci_nl_sum_mse: Option<f64>,
    pub flagged: usize,
    /// CI half-widths are zero by convention when only one trial exists.
    pub single_trial: bool,
}

fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Group rows by (sigma_e, snr, algorithm) and compute normal-approximation
/// confidence intervals. Flagged rows are counted, never averaged.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(u64, u64, Algorithm)> = Vec::new();
    let key_of = |r: &ResultRow| (r.sigma_e.to_bits(), r.snr_db.to_bits(), r.algorithm);
    for r in rows {
        let k = key_of(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort();
    keys.iter()
        .map(|&(se_bits, snr_bits, alg)| {
            let group: Vec<&ResultRow> =
                rows.iter().filter(|r| key_of(r) == (se_bits, snr_bits, alg)).collect();
            let ok: Vec<&&ResultRow> = group
                .iter()
                .filter(|r| !r.spectral_efficiency.is_nan())
                .collect();
            let flagged = group.len() - ok.len();
            let se: Vec<f64> = ok.iter().map(|r| r.spectral_efficiency).collect();
            let mse: Vec<f64> = ok.iter().map(|r| r.sum_mse).collect();
            let nl: Vec<f64> = ok.iter().filter_map(|r| r.nonlinear_sum_mse).collect();
            let (mean_se, ci_se) = mean_ci(&se);
            let (mean_mse, ci_mse) = mean_ci(&mse);
            let (mean_nl, ci_nl) = if nl.is_empty() {
                (None, None)
            } else {
                let (m, c) = mean_ci(&nl);
                (Some(m), Some(c))
            };
            SummaryRow {
                snr_db: f64::from_bits(snr_bits),
                sigma_e: f64::from_bits(se_bits),
                algorithm: alg,
                n: ok.len(),
                mean_se,
                ci_se,
                mean_sum_mse: mean_mse,
                ci_sum_mse: ci_mse,
                mean_nl_sum_mse: mean_nl,
                ci_nl_sum_mse: ci_nl,
                flagged,
                single_trial: ok.len() == 1,
            }
        })
        .collect()
}

pub const SUMMARY_COLUMNS: &str = "snr_db,sigma_e,algorithm,n,mean_spectral_efficiency,ci_spectral_efficiency,mean_sum_mse,ci_sum_mse,mean_nonlinear_sum_mse,ci_nonlinear_sum_mse,flagged,single_trial";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SUMMARY_COLUMNS}");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.snr_db),
            fmt_f64(r.sigma_e),
            r.algorithm.name(),
            r.n,
            fmt_f64(r.mean_se),
            fmt_f64(r.ci_se),
            fmt_f64(r.mean_sum_mse),
            fmt_f64(r.ci_sum_mse),
            r.mean_nl_sum_mse.map(fmt_f64).unwrap_or_default(),
            r.ci_nl_sum_mse.map(fmt_f64).unwrap_or_default(),
            r.flagged,
            r.single_trial,
        );
    }
    out
}

/// Plot-data axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Snr,
    SigmaE,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(Axis::Snr),
            "sigma_e" => Ok(Axis::SigmaE),
            other => Err(Error::Config(format!("unknown axis: {other}"))),
        }
    }
}

/// Long-format plot data: `x, algorithm, mean_metric, ci`, sorted by x then
/// algorithm. The SNR axis plots spectral efficiency, the sigma_e axis
/// plots sum-MSE.
pub fn emit_plot_data(rows: &[ResultRow], axis: Axis) -> Result<String> {
    let summaries = summarize(rows);
    if summaries.is_empty() {
        return Err(Error::InvalidInput("no rows to plot".into()));
    }
    let mut agg: Vec<(u64, Algorithm, Vec<f64>, Vec<f64>)> = Vec::new();
    for s in &summaries {
        let (x, metric, ci) = match axis {
            Axis::Snr => (s.snr_db, s.mean_se, s.ci_se),
            Axis::SigmaE => (s.sigma_e, s.mean_sum_mse, s.ci_sum_mse),
        };
        if let Some(slot) = agg
            .iter_mut()
            .find(|(xb, alg, _, _)| *xb == x.to_bits() && *alg == s.algorithm)
        {
            slot.2.push(metric);
            slot.3.push(ci);
        } else {
            agg.push((x.to_bits(), s.algorithm, vec![metric], vec![ci]));
        }
    }
    agg.sort_by(|a, b| {
        f64::from_bits(a.0)
            .partial_cmp(&f64::from_bits(b.0))
            .unwrap()
            .then(a.1.cmp(&b.1))
    });
    let mut out = String::new();
    let _ = writeln!(out, "x,algorithm,mean_metric,ci");
    for (xb, alg, metrics, cis) in agg {
        let mean = metrics.iter().sum::<f64>() / metrics.len() as f64;
        let ci = cis.iter().sum::<f64>() / cis.len() as f64;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(f64::from_bits(xb)),
            alg.name(),
            fmt_f64(mean),
            fmt_f64(ci)
        );
    }
    Ok(out)
}

/// Re-parse plot data (used to check the round-trip contract).
pub fn parse_plot_csv(text: &str) -> Result<Vec<(f64, Algorithm, f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "x,algorithm,mean_metric,ci" {
                return Err(Error::Parse(format!("unexpected plot header: {line}")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("bad plot row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad float: {s}")))
        };
        out.push((parse(f[0])?, f[1].parse()?, parse(f[2])?, parse(f[3])?));
    }
    Ok(out)
}

/// Format parsed plot rows back to CSV text.
pub fn plot_rows_to_csv(rows: &[(f64, Algorithm, f64, f64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "x,algorithm,mean_metric,ci");
    for (x, alg, m, ci) in rows {
        let _ = writeln!(out, "{},{},{},{}", fmt_f64(*x), alg.name(), fmt_f64(*m), fmt_f64(*ci));
    }
    out
}
