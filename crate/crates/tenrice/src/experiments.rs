//! Monte-Carlo harness behind the batch CLI: seeded SNR sweeps of
//! channel-estimation accuracy (frequency MSEs and cascaded-channel NMSE)
//! and spectral efficiency (per reflection-design variant), with CSV curve
//! output and a plain-text run manifest.
//!
//! Reproducibility contract: every random draw in a sweep is derived from
//! the master seed through fixed named streams (channel, training, noise,
//! solver, reflection), each keyed by trial index only. A trial therefore
//! uses common random numbers across the whole SNR grid: the same channel,
//! the same training frames, and the same unit-variance noise directions
//! (scaled to each point's noise power). Each SNR point still sees exactly
//! the nominal noise distribution, but a trial's error shrinks along the
//! same noise realization as SNR grows, so per-trial errors — and the means
//! over trials — vary smoothly and monotonically with SNR, and re-running a
//! subset of the grid reproduces identical numbers. Trials run in parallel
//! as pure functions of their derived seeds and are aggregated in fixed
//! trial order, so output is byte-identical across thread counts.
//!
//! Per-trial solver failures are counted and excluded from the means instead
//! of aborting the sweep; the count is a CSV column. Frequency errors are
//! measured after assignment alignment with wrap-around distance, so path
//! permutation never inflates the MSE.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use itertools::Itertools;
use rayon::prelude::*;

use crate::beamforming::{effective_channel, run_algorithm2, se_log_det, ReflectVariant};
use crate::channel::{cascaded_channel, draw_channels, ArrayConfig};
use crate::derive_seed;
use crate::estimation::{check_identifiability, tenrice_estimate, TenriceOptions};
use crate::linalg::svd;
use crate::metrics::{aligned_sq_error, nmse};
use crate::training::{add_noise, gen_training, measure_tensor_route, TrainingBudgets};
use crate::{Error, Result};

// Named seed streams: one per independent source of randomness.
const STREAM_CHANNEL: u64 = 1;
const STREAM_TRAINING: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_ALS: u64 = 4;
const STREAM_REFLECT: u64 = 5;

/// Which stages of the link a sweep exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineMode {
    /// Channel estimation only: frequency MSEs and cascaded-channel NMSE.
    CeOnly,
    /// Data-phase design on the true channels (genie CSI).
    PerfectCsi,
    /// Channel estimation chained into the data-phase design; spectral
    /// efficiency is still evaluated on the true channel.
    EndToEnd,
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineMode::CeOnly => "ce-only",
            PipelineMode::PerfectCsi => "perfect-csi",
            PipelineMode::EndToEnd => "end-to-end",
        })
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce-only" => Ok(PipelineMode::CeOnly),
            "perfect-csi" | "perfect" => Ok(PipelineMode::PerfectCsi),
            "end-to-end" => Ok(PipelineMode::EndToEnd),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected ce-only, perfect-csi, or end-to-end)"
            ))),
        }
    }
}

/// Reflection-design variants a spectral-efficiency sweep can compare.
///
/// Unlike [`ReflectVariant`], the random baseline carries no seed here: the
/// sweep derives one per (SNR point, trial) from its reflection stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantKind {
    /// Effective-channel Frobenius-norm maximization.
    FroMax1,
    /// Stream-coupled Frobenius-norm maximization.
    FroMax2,
    /// Uniform random phases.
    Random,
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantKind::FroMax1 => "fromax1",
            VariantKind::FroMax2 => "fromax2",
            VariantKind::Random => "random",
        })
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fromax1" => Ok(VariantKind::FroMax1),
            "fromax2" => Ok(VariantKind::FroMax2),
            "random" => Ok(VariantKind::Random),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected fromax1, fromax2, or random)"
            ))),
        }
    }
}

/// Complete description of one sweep: geometry, training budgets, SNR grid,
/// trial count, seeding, pipeline mode, and solver knobs.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Antenna and RIS geometry.
    pub arrays: ArrayConfig,
    /// TX→RIS path count.
    pub l_t: usize,
    /// RIS→RX path count.
    pub l_r: usize,
    /// Training budgets (combiners, precoders, RIS patterns).
    pub budgets: TrainingBudgets,
    /// SNR grid in dB; `inf` is the noiseless sentinel (estimation only).
    pub snr_db: Vec<f64>,
    /// Monte-Carlo trials per SNR point.
    pub trials: usize,
    /// Master seed; all per-trial seeds derive from it.
    pub seed: u64,
    /// Which pipeline stages run.
    pub mode: PipelineMode,
    /// Reflection designs compared by a spectral-efficiency sweep.
    pub variants: Vec<VariantKind>,
    /// Data streams for the spectral-efficiency sweep.
    pub n_s: usize,
    /// Transmit power budget.
    pub p_max: f64,
    /// Estimation pipeline knobs.
    pub als: TenriceOptions,
    /// Worker threads; 0 uses the global default pool.
    pub threads: usize,
    /// CSV output path (the manifest lands next to it).
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            arrays: ArrayConfig { m_t: 64, m_r: 16, m_s_v: 16, m_s_h: 16 },
            l_t: 2,
            l_r: 2,
            budgets: TrainingBudgets { k_r: 8, k_t: 8, k_s_h: 8, k_s_v: 8 },
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            trials: 100,
            seed: 1,
            mode: PipelineMode::CeOnly,
            variants: vec![VariantKind::FroMax1, VariantKind::FroMax2, VariantKind::Random],
            n_s: 2,
            p_max: 1.0,
            als: TenriceOptions::default(),
            threads: 0,
            out: PathBuf::from("sweep.csv"),
        }
    }
}

impl ExperimentConfig {
    /// Check the config before running: positive trial count, usable SNR
    /// grid, identifiable training budgets, and coherent data-phase
    /// settings.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("the SNR grid is empty".into()));
        }
        for &snr in &self.snr_db {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(Error::InvalidSnr(snr));
            }
            if self.mode != PipelineMode::CeOnly && !snr.is_finite() {
                return Err(Error::Config(
                    "data-phase sweeps need finite SNR (noise power would be zero)".into(),
                ));
            }
        }
        if self.l_t == 0 || self.l_r == 0 {
            return Err(Error::Config("path counts must be at least 1".into()));
        }
        let b = self.budgets;
        check_identifiability([b.k_r, b.k_t, b.k_s_h, b.k_s_v], self.l_t, self.l_r)?;
        if self.mode != PipelineMode::CeOnly {
            if self.variants.is_empty() {
                return Err(Error::Config("no reflection variants selected".into()));
            }
            if self.n_s == 0 {
                return Err(Error::Config("n_s must be at least 1".into()));
            }
            if self.n_s > self.arrays.m_r.min(self.arrays.m_t) {
                return Err(Error::Config(format!(
                    "n_s = {} exceeds min(M_R, M_T) = {}",
                    self.n_s,
                    self.arrays.m_r.min(self.arrays.m_t)
                )));
            }
            if !(self.p_max > 0.0) {
                return Err(Error::Config(format!("p_max must be positive, got {}", self.p_max)));
            }
        }
        Ok(())
    }

    /// Apply one `key=value` setting (the CLI flag/config-file vocabulary).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("config key `{key}`: bad value `{value}`: {e}")))
        }

        match key {
            "m_t" => self.arrays.m_t = num(key, value)?,
            "m_r" => self.arrays.m_r = num(key, value)?,
            "m_s_v" => self.arrays.m_s_v = num(key, value)?,
            "m_s_h" => self.arrays.m_s_h = num(key, value)?,
            "l_t" => self.l_t = num(key, value)?,
            "l_r" => self.l_r = num(key, value)?,
            "k_r" => self.budgets.k_r = num(key, value)?,
            "k_t" => self.budgets.k_t = num(key, value)?,
            "k_s_h" => self.budgets.k_s_h = num(key, value)?,
            "k_s_v" => self.budgets.k_s_v = num(key, value)?,
            "snr_db" => {
                self.snr_db =
                    value.split(',').map(|s| num(key, s.trim())).collect::<Result<Vec<f64>>>()?;
            }
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "variants" => {
                self.variants =
                    value.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<_>>>()?;
            }
            "n_s" => self.n_s = num(key, value)?,
            "p_max" => self.p_max = num(key, value)?,
            "als_i_max" => self.als.i_max = num(key, value)?,
            "als_tol" => self.als.tol = num(key, value)?,
            "als_restarts" => self.als.restarts = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a plain-text config: one `key=value` per line, `#` comments and
    /// blank lines ignored.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected key=value, got `{line}`",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

/// Estimation metrics for one successful trial.
#[derive(Clone, Debug)]
pub struct CeTrial {
    /// Trial index within the sweep.
    pub trial: usize,
    /// Derived channel seed (reproduces the trial's realization).
    pub seed: u64,
    /// Aligned squared error of the RX angular frequencies.
    pub mse_psi_r: f64,
    /// Aligned squared error of the TX angular frequencies.
    pub mse_psi_t: f64,
    /// Aligned squared error of the combined horizontal RIS frequencies.
    pub mse_mu_h: f64,
    /// Aligned squared error of the combined vertical RIS frequencies.
    pub mse_mu_v: f64,
    /// Normalized squared error of the cascaded-channel estimate.
    pub nmse_hc: f64,
}

/// Estimation metrics for one SNR point: means over successful trials plus
/// the per-trial values behind them.
#[derive(Clone, Debug)]
pub struct CeRecord {
    /// SNR in dB (`inf` = noiseless).
    pub snr_db: f64,
    /// Trials included in the means.
    pub trials: usize,
    /// Trials excluded because the estimator failed.
    pub failures: usize,
    /// Mean aligned squared error of the RX angular frequencies.
    pub mse_psi_r: f64,
    /// Mean aligned squared error of the TX angular frequencies.
    pub mse_psi_t: f64,
    /// Mean aligned squared error of the combined horizontal frequencies.
    pub mse_mu_h: f64,
    /// Mean aligned squared error of the combined vertical frequencies.
    pub mse_mu_v: f64,
    /// Mean normalized squared error of the cascaded-channel estimate.
    pub nmse_hc: f64,
    /// Per-trial metrics, in trial order.
    pub per_trial: Vec<CeTrial>,
}

/// Data-phase metrics for one successful (trial, variant) pair.
#[derive(Clone, Debug)]
pub struct SeTrial {
    /// Trial index within the sweep.
    pub trial: usize,
    /// Derived channel seed (reproduces the trial's realization).
    pub seed: u64,
    /// Spectral efficiency on the true channel, bits/s/Hz.
    pub se_bits_per_hz: f64,
    /// Dominant singular value of the achieved effective channel.
    pub alpha1: f64,
    /// Second singular value of the achieved effective channel (0 if rank 1).
    pub alpha2: f64,
}

/// Data-phase metrics for one (SNR point, variant) pair.
#[derive(Clone, Debug)]
pub struct SeRecord {
    /// SNR in dB.
    pub snr_db: f64,
    /// Reflection design evaluated.
    pub variant: VariantKind,
    /// Trials included in the means.
    pub trials: usize,
    /// Trials excluded because estimation or design failed.
    pub failures: usize,
    /// Mean spectral efficiency, bits/s/Hz.
    pub mean_se: f64,
    /// Sample standard deviation of the per-trial spectral efficiency
    /// (`NaN` with fewer than two successes).
    pub std_se: f64,
    /// Mean dominant singular value of the achieved effective channel.
    pub mean_alpha1: f64,
    /// Mean second singular value of the achieved effective channel.
    pub mean_alpha2: f64,
    /// Per-trial metrics, in trial order.
    pub per_trial: Vec<SeTrial>,
}

/// Run `f` on the pool the config asks for (0 threads = the global pool).
fn install_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("failed to build a {threads}-thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// One estimation trial: draw, measure, add noise, estimate, score.
fn ce_trial(cfg: &ExperimentConfig, snr: f64, trial: usize) -> Result<CeTrial> {
    let t = trial as u64;
    let ch_seed = derive_seed(cfg.seed, &[STREAM_CHANNEL, t]);
    let ch = draw_channels(&cfg.arrays, cfg.l_t, cfg.l_r, ch_seed)?;
    let tr = gen_training(&cfg.arrays, cfg.budgets, derive_seed(cfg.seed, &[STREAM_TRAINING, t]));
    let noiseless = measure_tensor_route(&ch, &tr);
    let meas = add_noise(&noiseless, &tr, snr, derive_seed(cfg.seed, &[STREAM_NOISE, t]))?;
    let est = tenrice_estimate(
        &meas.y,
        &tr,
        &cfg.arrays,
        cfg.l_t,
        cfg.l_r,
        &cfg.als,
        derive_seed(cfg.seed, &[STREAM_ALS, t]),
    )?;
    Ok(CeTrial {
        trial,
        seed: ch_seed,
        mse_psi_r: aligned_sq_error(&est.params.psi_r, &ch.params.psi_r),
        mse_psi_t: aligned_sq_error(&est.params.psi_t, &ch.params.psi_t),
        mse_mu_h: aligned_sq_error(&est.params.mu_h, &ch.mu_h),
        mse_mu_v: aligned_sq_error(&est.params.mu_v, &ch.mu_v),
        nmse_hc: nmse(&est.h_c_hat, &cascaded_channel(&ch)),
    })
}

/// Estimation-accuracy sweep: per SNR point, run `trials` independent
/// channel/training/noise draws through the estimator and average the
/// aligned frequency MSEs and the cascaded-channel NMSE.
///
/// Failed trials are counted in [`CeRecord::failures`] and excluded from the
/// means. Deterministic in `(config, seed)` across runs and thread counts.
pub fn run_ce_sweep(cfg: &ExperimentConfig) -> Result<Vec<CeRecord>> {
    cfg.validate()?;
    install_pool(cfg.threads, || {
        cfg.snr_db
            .iter()
            .map(|&snr| {
                let outcomes: Vec<Option<CeTrial>> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| ce_trial(cfg, snr, t).ok())
                    .collect();
                let mut rec = CeRecord {
                    snr_db: snr,
                    trials: 0,
                    failures: 0,
                    mse_psi_r: 0.0,
                    mse_psi_t: 0.0,
                    mse_mu_h: 0.0,
                    mse_mu_v: 0.0,
                    nmse_hc: 0.0,
                    per_trial: Vec::new(),
                };
                for outcome in outcomes {
                    match outcome {
                        Some(tr) => {
                            rec.trials += 1;
                            rec.mse_psi_r += tr.mse_psi_r;
                            rec.mse_psi_t += tr.mse_psi_t;
                            rec.mse_mu_h += tr.mse_mu_h;
                            rec.mse_mu_v += tr.mse_mu_v;
                            rec.nmse_hc += tr.nmse_hc;
                            rec.per_trial.push(tr);
                        }
                        None => rec.failures += 1,
                    }
                }
                if rec.trials > 0 {
                    let n = rec.trials as f64;
                    rec.mse_psi_r /= n;
                    rec.mse_psi_t /= n;
                    rec.mse_mu_h /= n;
                    rec.mse_mu_v /= n;
                    rec.nmse_hc /= n;
                } else {
                    rec.mse_psi_r = f64::NAN;
                    rec.mse_psi_t = f64::NAN;
                    rec.mse_mu_h = f64::NAN;
                    rec.mse_mu_v = f64::NAN;
                    rec.nmse_hc = f64::NAN;
                }
                rec
            })
            .collect()
    })
}

/// One data-phase trial: returns one outcome per configured variant, sharing
/// the channel draw (and, end-to-end, the channel estimate) across variants.
fn se_trial(cfg: &ExperimentConfig, snr: f64, trial: usize) -> Vec<Option<SeTrial>> {
    let t = trial as u64;
    let ch_seed = derive_seed(cfg.seed, &[STREAM_CHANNEL, t]);
    let Ok(ch) = draw_channels(&cfg.arrays, cfg.l_t, cfg.l_r, ch_seed) else {
        return vec![None; cfg.variants.len()];
    };
    let sigma2 = cfg.p_max / 10f64.powf(snr / 10.0);

    // Design-side channels: the truth, or the estimate chained in.
    let (h_t_design, h_r_design) = if cfg.mode == PipelineMode::EndToEnd {
        let tr =
            gen_training(&cfg.arrays, cfg.budgets, derive_seed(cfg.seed, &[STREAM_TRAINING, t]));
        let noiseless = measure_tensor_route(&ch, &tr);
        let noise_seed = derive_seed(cfg.seed, &[STREAM_NOISE, t]);
        let Ok(meas) = add_noise(&noiseless, &tr, snr, noise_seed) else {
            return vec![None; cfg.variants.len()];
        };
        let als_seed = derive_seed(cfg.seed, &[STREAM_ALS, t]);
        let Ok(est) =
            tenrice_estimate(&meas.y, &tr, &cfg.arrays, cfg.l_t, cfg.l_r, &cfg.als, als_seed)
        else {
            return vec![None; cfg.variants.len()];
        };
        (est.separated.h_t_hat, est.separated.h_r_hat)
    } else {
        (ch.h_t.clone(), ch.h_r.clone())
    };

    cfg.variants
        .iter()
        .map(|&kind| -> Option<SeTrial> {
            let variant = match kind {
                VariantKind::FroMax1 => ReflectVariant::FroMax1,
                VariantKind::FroMax2 => ReflectVariant::FroMax2,
                VariantKind::Random => ReflectVariant::Random {
                    seed: derive_seed(cfg.seed, &[STREAM_REFLECT, t]),
                },
            };
            let sol =
                run_algorithm2(&h_t_design, &h_r_design, cfg.p_max, sigma2, cfg.n_s, variant)
                    .ok()?;
            // Score on the true channel regardless of what was designed on.
            let h_e = effective_channel(&ch.h_r, &ch.h_t, &sol.omega);
            let se = se_log_det(&h_e, &sol.q, &sol.p, sigma2).ok()?;
            let dec = svd(&h_e).ok()?;
            Some(SeTrial {
                trial,
                seed: ch_seed,
                se_bits_per_hz: se,
                alpha1: dec.s.first().copied().unwrap_or(0.0),
                alpha2: dec.s.get(1).copied().unwrap_or(0.0),
            })
        })
        .collect()
}

/// Spectral-efficiency sweep: per SNR point and variant, design the
/// reflection vector and SVD transceiver (on true or estimated channels per
/// the pipeline mode) and evaluate the achieved rate and the leading
/// singular values of the effective channel — always on the true channel.
///
/// Channel draws and estimates are shared across variants within a trial, so
/// variant comparisons are paired. Failures are per (trial, variant).
pub fn run_se_sweep(cfg: &ExperimentConfig) -> Result<Vec<SeRecord>> {
    cfg.validate()?;
    if cfg.mode == PipelineMode::CeOnly {
        return Err(Error::Config(
            "spectral-efficiency sweep needs mode=perfect-csi or mode=end-to-end".into(),
        ));
    }
    install_pool(cfg.threads, || {
        let mut records = Vec::with_capacity(cfg.snr_db.len() * cfg.variants.len());
        for &snr in &cfg.snr_db {
            let outcomes: Vec<Vec<Option<SeTrial>>> =
                (0..cfg.trials).into_par_iter().map(|t| se_trial(cfg, snr, t)).collect();
            for (vi, &variant) in cfg.variants.iter().enumerate() {
                let mut rec = SeRecord {
                    snr_db: snr,
                    variant,
                    trials: 0,
                    failures: 0,
                    mean_se: 0.0,
                    std_se: f64::NAN,
                    mean_alpha1: 0.0,
                    mean_alpha2: 0.0,
                    per_trial: Vec::new(),
                };
                for row in &outcomes {
                    match &row[vi] {
                        Some(tr) => {
                            rec.trials += 1;
                            rec.mean_se += tr.se_bits_per_hz;
                            rec.mean_alpha1 += tr.alpha1;
                            rec.mean_alpha2 += tr.alpha2;
                            rec.per_trial.push(tr.clone());
                        }
                        None => rec.failures += 1,
                    }
                }
                if rec.trials > 0 {
                    let n = rec.trials as f64;
                    rec.mean_se /= n;
                    rec.mean_alpha1 /= n;
                    rec.mean_alpha2 /= n;
                    if rec.trials > 1 {
                        let var = rec
                            .per_trial
                            .iter()
                            .map(|tr| (tr.se_bits_per_hz - rec.mean_se).powi(2))
                            .sum::<f64>()
                            / (n - 1.0);
                        rec.std_se = var.sqrt();
                    }
                } else {
                    rec.mean_se = f64::NAN;
                    rec.mean_alpha1 = f64::NAN;
                    rec.mean_alpha2 = f64::NAN;
                }
                records.push(rec);
            }
        }
        records
    })
}

/// Format a float for CSV: 17 significant digits (round-trip exact), with
/// `inf`/`-inf`/`NaN` spelled so `f64::from_str` parses them back.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// A sweep result that knows its CSV header and row encoding.
pub trait CsvRecord {
    /// Comma-separated column names.
    fn header() -> &'static str;
    /// One comma-separated row, columns in header order.
    fn row(&self) -> String;
}

impl CsvRecord for CeRecord {
    fn header() -> &'static str {
        "snr_db,trials,failures,mse_psi_r,mse_psi_t,mse_mu_h,mse_mu_v,nmse_hc"
    }

    fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_float(self.snr_db),
            self.trials,
            self.failures,
            fmt_float(self.mse_psi_r),
            fmt_float(self.mse_psi_t),
            fmt_float(self.mse_mu_h),
            fmt_float(self.mse_mu_v),
            fmt_float(self.nmse_hc),
        )
    }
}

impl CsvRecord for SeRecord {
    fn header() -> &'static str {
        "snr_db,variant,trials,failures,mean_se_bits_per_hz,std_se_bits_per_hz,mean_alpha1,mean_alpha2"
    }

    fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_float(self.snr_db),
            self.variant,
            self.trials,
            self.failures,
            fmt_float(self.mean_se),
            fmt_float(self.std_se),
            fmt_float(self.mean_alpha1),
            fmt_float(self.mean_alpha2),
        )
    }
}

/// Write records as UTF-8 CSV: header row, then one row per record.
pub fn write_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<()> {
    let mut text = String::from(R::header());
    text.push('\n');
    for rec in records {
        text.push_str(&rec.row());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Write the sidecar run manifest next to the CSV (same stem, `.manifest`
/// extension): plain `key=value` lines recording the full config, the master
/// seed, and the software version.
pub fn write_manifest(cfg: &ExperimentConfig, sweep: &str, csv_path: &Path) -> Result<()> {
    let mut text = String::new();
    let mut kv = |k: &str, v: String| {
        text.push_str(k);
        text.push('=');
        text.push_str(&v);
        text.push('\n');
    };
    kv("sweep", sweep.into());
    kv("version", env!("CARGO_PKG_VERSION").into());
    kv("seed", cfg.seed.to_string());
    kv("trials", cfg.trials.to_string());
    kv("snr_db", cfg.snr_db.iter().map(|s| s.to_string()).join(","));
    kv("m_t", cfg.arrays.m_t.to_string());
    kv("m_r", cfg.arrays.m_r.to_string());
    kv("m_s_v", cfg.arrays.m_s_v.to_string());
    kv("m_s_h", cfg.arrays.m_s_h.to_string());
    kv("l_t", cfg.l_t.to_string());
    kv("l_r", cfg.l_r.to_string());
    kv("k_r", cfg.budgets.k_r.to_string());
    kv("k_t", cfg.budgets.k_t.to_string());
    kv("k_s_h", cfg.budgets.k_s_h.to_string());
    kv("k_s_v", cfg.budgets.k_s_v.to_string());
    kv("mode", cfg.mode.to_string());
    kv("variants", cfg.variants.iter().map(|v| v.to_string()).join(","));
    kv("n_s", cfg.n_s.to_string());
    kv("p_max", cfg.p_max.to_string());
    kv("als_i_max", cfg.als.i_max.to_string());
    kv("als_tol", cfg.als.tol.to_string());
    kv("als_restarts", cfg.als.restarts.to_string());
    kv("threads", cfg.threads.to_string());
    kv("out", csv_path.display().to_string());
    fs::write(csv_path.with_extension("manifest"), text)?;
    Ok(())
}
