//! Batch CLI: seeded, CSV-emitting Monte-Carlo sweeps of channel-estimation
//! accuracy (`ce-sweep`) and spectral efficiency (`se-sweep`), plus a quick
//! built-in oracle suite (`selftest`).
//!
//! Configuration precedence: compiled defaults, then the `--config`
//! key=value file, then individual flags. Every sweep writes a CSV and a
//! `.manifest` sidecar recording the full configuration, master seed, and
//! version, so any output can be reproduced exactly.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tenrice::beamforming::{
    effective_channel, fromax1, project_constant_modulus, random_reflection, run_algorithm2,
    se_log_det, waterfill, ReflectVariant,
};
use tenrice::channel::{cascaded_channel, draw_channels, ArrayConfig};
use tenrice::derive_seed;
use tenrice::estimation::{lskrf_split, tenrice_estimate, TenriceOptions};
use tenrice::experiments::{
    fmt_float, run_ce_sweep, run_se_sweep, write_csv, write_manifest, ExperimentConfig,
    PipelineMode,
};
use tenrice::linalg::{complex_gaussian_matrix, khatri_rao, svd, unvec, vec_mat, CMat};
use tenrice::metrics::nmse;
use tenrice::training::{gen_training, measure_matrix_route, measure_tensor_route, TrainingBudgets};
use tenrice::Result;

#[derive(Parser)]
#[command(
    name = "tenrice",
    version,
    about = "RIS-aided mmWave MIMO link simulator: tensor channel estimation \
             (TenRICE) and closed-form reflection design (FroMax)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel-estimation sweep: frequency MSEs and cascaded-channel NMSE vs SNR.
    CeSweep(SweepArgs),
    /// Spectral-efficiency sweep: mean rate and leading singular values per
    /// reflection variant vs SNR.
    SeSweep(SeArgs),
    /// Run the built-in oracle checks; exits nonzero if any fail.
    Selftest {
        /// Master seed for the randomized checks.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Flags shared by both sweeps. Every flag overrides the config file, which
/// overrides the compiled defaults.
#[derive(Args)]
struct SweepArgs {
    /// Plain-text config file: one key=value per line, `#` comments.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all per-trial randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials per SNR point.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated SNR grid in dB; `inf` = noiseless (estimation only).
    #[arg(long)]
    snr: Option<String>,
    /// Output CSV path; the manifest lands next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = default pool).
    #[arg(long)]
    threads: Option<usize>,
    /// TX antennas.
    #[arg(long)]
    m_t: Option<usize>,
    /// RX antennas.
    #[arg(long)]
    m_r: Option<usize>,
    /// RIS rows.
    #[arg(long)]
    m_s_v: Option<usize>,
    /// RIS columns.
    #[arg(long)]
    m_s_h: Option<usize>,
    /// TX→RIS paths.
    #[arg(long)]
    l_t: Option<usize>,
    /// RIS→RX paths.
    #[arg(long)]
    l_r: Option<usize>,
    /// Training combiners.
    #[arg(long)]
    k_r: Option<usize>,
    /// Training precoders.
    #[arg(long)]
    k_t: Option<usize>,
    /// Horizontal RIS training patterns.
    #[arg(long)]
    k_s_h: Option<usize>,
    /// Vertical RIS training patterns.
    #[arg(long)]
    k_s_v: Option<usize>,
    /// ALS sweep cap.
    #[arg(long)]
    als_i_max: Option<usize>,
    /// ALS relative-residual change tolerance.
    #[arg(long)]
    als_tol: Option<f64>,
    /// Random ALS restarts.
    #[arg(long)]
    als_restarts: Option<usize>,
}

/// Spectral-efficiency sweep flags.
#[derive(Args)]
struct SeArgs {
    #[command(flatten)]
    common: SweepArgs,
    /// Data streams.
    #[arg(long)]
    n_s: Option<usize>,
    /// Transmit power budget.
    #[arg(long)]
    p_max: Option<f64>,
    /// CSI mode: `perfect` (design on true channels) or `end-to-end`
    /// (design on estimates).
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated reflection variants: fromax1,fromax2,random.
    #[arg(long)]
    variants: Option<String>,
}

fn build_config(args: &SweepArgs, default_out: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig { out: PathBuf::from(default_out), ..Default::default() };
    if let Some(path) = &args.config {
        cfg.apply_config_text(&fs::read_to_string(path)?)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = &args.snr {
        cfg.set("snr_db", v)?;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.m_t {
        cfg.arrays.m_t = v;
    }
    if let Some(v) = args.m_r {
        cfg.arrays.m_r = v;
    }
    if let Some(v) = args.m_s_v {
        cfg.arrays.m_s_v = v;
    }
    if let Some(v) = args.m_s_h {
        cfg.arrays.m_s_h = v;
    }
    if let Some(v) = args.l_t {
        cfg.l_t = v;
    }
    if let Some(v) = args.l_r {
        cfg.l_r = v;
    }
    if let Some(v) = args.k_r {
        cfg.budgets.k_r = v;
    }
    if let Some(v) = args.k_t {
        cfg.budgets.k_t = v;
    }
    if let Some(v) = args.k_s_h {
        cfg.budgets.k_s_h = v;
    }
    if let Some(v) = args.k_s_v {
        cfg.budgets.k_s_v = v;
    }
    if let Some(v) = args.als_i_max {
        cfg.als.i_max = v;
    }
    if let Some(v) = args.als_tol {
        cfg.als.tol = v;
    }
    if let Some(v) = args.als_restarts {
        cfg.als.restarts = v;
    }
    Ok(cfg)
}

fn run_ce(args: &SweepArgs) -> Result<()> {
    let mut cfg = build_config(args, "ce_sweep.csv")?;
    cfg.mode = PipelineMode::CeOnly;
    let records = run_ce_sweep(&cfg)?;
    for rec in &records {
        println!(
            "snr_db={} trials={} failures={} nmse_hc={:.3e} mse_psi_r={:.3e} \
             mse_psi_t={:.3e} mse_mu_h={:.3e} mse_mu_v={:.3e}",
            rec.snr_db, rec.trials, rec.failures, rec.nmse_hc, rec.mse_psi_r, rec.mse_psi_t,
            rec.mse_mu_h, rec.mse_mu_v
        );
    }
    write_csv(&records, &cfg.out)?;
    write_manifest(&cfg, "ce", &cfg.out)?;
    println!("wrote {} and {}", cfg.out.display(), cfg.out.with_extension("manifest").display());
    Ok(())
}

fn run_se(args: &SeArgs) -> Result<()> {
    let mut cfg = build_config(&args.common, "se_sweep.csv")?;
    if cfg.mode == PipelineMode::CeOnly {
        cfg.mode = PipelineMode::PerfectCsi;
    }
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(v) = args.n_s {
        cfg.n_s = v;
    }
    if let Some(v) = args.p_max {
        cfg.p_max = v;
    }
    if let Some(v) = &args.variants {
        cfg.set("variants", v)?;
    }
    let records = run_se_sweep(&cfg)?;
    for rec in &records {
        println!(
            "snr_db={} variant={} trials={} failures={} mean_se={:.4} std_se={:.4} \
             alpha1={:.4} alpha2={:.4}",
            rec.snr_db, rec.variant, rec.trials, rec.failures, rec.mean_se, rec.std_se,
            rec.mean_alpha1, rec.mean_alpha2
        );
    }
    write_csv(&records, &cfg.out)?;
    write_manifest(&cfg, "se", &cfg.out)?;
    println!("wrote {} and {}", cfg.out.display(), cfg.out.with_extension("manifest").display());
    Ok(())
}

type Check = (&'static str, fn(u64) -> std::result::Result<(), String>);

/// Quick oracle suite: each check reproduces one of the library's
/// independently-verifiable identities at small scale.
fn selftest(seed: u64) -> ExitCode {
    let checks: [Check; 8] = [
        ("measurement-routes", check_measurement_routes),
        ("noiseless-estimation", check_noiseless_estimation),
        ("waterfilling", check_waterfilling),
        ("se-forms", check_se_forms),
        ("fromax1-certificate", check_fromax1_certificate),
        ("reflection-constraints", check_reflection_constraints),
        ("cascaded-split", check_cascaded_split),
        ("csv-io", check_csv_io),
    ];
    let mut failures = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check(derive_seed(seed, &[i as u64])) {
            Ok(()) => println!("ok {name}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failures == 0 {
        println!("selftest: {}/{} checks passed", checks.len(), checks.len());
        ExitCode::SUCCESS
    } else {
        println!("selftest: {failures} of {} checks failed", checks.len());
        ExitCode::FAILURE
    }
}

fn paper_setup(seed: u64) -> std::result::Result<(tenrice::channel::ChannelRealization, tenrice::training::TrainingSetup), String> {
    let cfg = ArrayConfig { m_t: 64, m_r: 16, m_s_v: 16, m_s_h: 16 };
    let budgets = TrainingBudgets { k_r: 8, k_t: 8, k_s_h: 8, k_s_v: 8 };
    let ch = draw_channels(&cfg, 2, 2, seed).map_err(|e| e.to_string())?;
    let tr = gen_training(&cfg, budgets, derive_seed(seed, &[1]));
    Ok((ch, tr))
}

/// The matrix-product and CP-tensor constructions of the noiseless
/// measurement agree.
fn check_measurement_routes(seed: u64) -> std::result::Result<(), String> {
    let (ch, tr) = paper_setup(seed)?;
    let matrix = vec_mat(&measure_matrix_route(&ch, &tr));
    let tensor = measure_tensor_route(&ch, &tr).as_vector();
    let rel = (&tensor - &matrix).norm() / matrix.norm();
    if rel < 1e-10 {
        Ok(())
    } else {
        Err(format!("route disagreement: relative error {rel:.3e}"))
    }
}

/// The full estimation pipeline is exact on a noiseless measurement.
fn check_noiseless_estimation(seed: u64) -> std::result::Result<(), String> {
    let cfg = ArrayConfig { m_t: 16, m_r: 8, m_s_v: 8, m_s_h: 8 };
    let budgets = TrainingBudgets { k_r: 8, k_t: 8, k_s_h: 8, k_s_v: 8 };
    let ch = draw_channels(&cfg, 2, 2, seed).map_err(|e| e.to_string())?;
    let tr = gen_training(&cfg, budgets, derive_seed(seed, &[1]));
    let y = measure_tensor_route(&ch, &tr);
    let opts = TenriceOptions { i_max: 2000, tol: 1e-10, ..Default::default() };
    let est = tenrice_estimate(&y, &tr, &cfg, 2, 2, &opts, derive_seed(seed, &[2]))
        .map_err(|e| e.to_string())?;
    let err = nmse(&est.h_c_hat, &cascaded_channel(&ch));
    if err < 1e-6 {
        Ok(())
    } else {
        Err(format!("noiseless NMSE {err:.3e} above 1e-6"))
    }
}

/// Waterfilling reproduces the frozen two-mode example exactly.
fn check_waterfilling(_seed: u64) -> std::result::Result<(), String> {
    let powers = waterfill(&[2.0, 1.0], 2.0, 1.0).map_err(|e| e.to_string())?;
    if (powers[0] - 1.375).abs() < 1e-12 && (powers[1] - 0.625).abs() < 1e-12 {
        Ok(())
    } else {
        Err(format!("expected (1.375, 0.625), got ({}, {})", powers[0], powers[1]))
    }
}

/// The log-det and per-stream sum forms of the spectral efficiency agree.
fn check_se_forms(seed: u64) -> std::result::Result<(), String> {
    let cfg = ArrayConfig { m_t: 16, m_r: 8, m_s_v: 8, m_s_h: 8 };
    let ch = draw_channels(&cfg, 2, 2, seed).map_err(|e| e.to_string())?;
    let sol = run_algorithm2(&ch.h_t, &ch.h_r, 1.0, 0.1, 2, ReflectVariant::FroMax2)
        .map_err(|e| e.to_string())?;
    let h_e = effective_channel(&ch.h_r, &ch.h_t, &sol.omega);
    let det_form = se_log_det(&h_e, &sol.q, &sol.p, 0.1).map_err(|e| e.to_string())?;
    let gap = (det_form - sol.se_bits_per_hz).abs();
    if gap < 1e-10 {
        Ok(())
    } else {
        Err(format!("det form {det_form} vs sum form {} (gap {gap:.3e})", sol.se_bits_per_hz))
    }
}

/// The relaxed FroMax-1 solution beats random unit vectors on ‖K·x‖.
fn check_fromax1_certificate(seed: u64) -> std::result::Result<(), String> {
    let cfg = ArrayConfig { m_t: 16, m_r: 8, m_s_v: 8, m_s_h: 8 };
    let ch = draw_channels(&cfg, 2, 2, seed).map_err(|e| e.to_string())?;
    let k = khatri_rao(&ch.h_t.transpose(), &ch.h_r);
    let dec = svd(&k).map_err(|e| e.to_string())?;
    let objective = dec.s[0];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    for _ in 0..1000 {
        let x = complex_gaussian_matrix(k.ncols(), 1, &mut rng);
        let value = (&k * &x).norm() / x.norm();
        if value > objective + 1e-12 {
            return Err(format!("random vector achieved {value} > optimum {objective}"));
        }
    }
    fromax1(&ch.h_r, &ch.h_t).map_err(|e| e.to_string())?;
    Ok(())
}

/// Every reflection variant returns constant-modulus phases, an orthonormal
/// combiner, and a precoder inside the power budget.
fn check_reflection_constraints(seed: u64) -> std::result::Result<(), String> {
    let cfg = ArrayConfig { m_t: 16, m_r: 8, m_s_v: 8, m_s_h: 8 };
    let ch = draw_channels(&cfg, 2, 2, seed).map_err(|e| e.to_string())?;
    let (p_max, sigma2) = (2.0, 0.05);
    let scale = 1.0 / (cfg.m_s() as f64).sqrt();
    for variant in [
        ReflectVariant::FroMax1,
        ReflectVariant::FroMax2,
        ReflectVariant::Random { seed: derive_seed(seed, &[1]) },
    ] {
        let sol = run_algorithm2(&ch.h_t, &ch.h_r, p_max, sigma2, 2, variant)
            .map_err(|e| e.to_string())?;
        for m in 0..cfg.m_s() {
            if (sol.omega[m].norm() - scale).abs() > 1e-12 {
                return Err(format!("{variant:?}: |omega_{m}| off the RIS modulus"));
            }
        }
        let gram = sol.q.adjoint() * &sol.q;
        if (gram - CMat::identity(2, 2)).norm() > 1e-10 {
            return Err(format!("{variant:?}: combiner not orthonormal"));
        }
        if sol.p.norm_squared() > p_max + 1e-9 {
            return Err(format!("{variant:?}: precoder exceeds the power budget"));
        }
    }
    Ok(())
}

/// Splitting the cascaded channel and rebuilding the effective channel
/// matches the direct cascaded computation for random reflections.
fn check_cascaded_split(seed: u64) -> std::result::Result<(), String> {
    let cfg = ArrayConfig { m_t: 16, m_r: 8, m_s_v: 8, m_s_h: 8 };
    let ch = draw_channels(&cfg, 2, 2, seed).map_err(|e| e.to_string())?;
    let h_c = cascaded_channel(&ch);
    let sep = lskrf_split(&h_c, &cfg).map_err(|e| e.to_string())?;
    for k in 0..5u64 {
        let omega = random_reflection(cfg.m_s(), derive_seed(seed, &[1, k]));
        let from_split = effective_channel(&sep.h_r_hat, &sep.h_t_hat, &omega);
        let direct = unvec(&(&h_c * &omega), cfg.m_r, cfg.m_t);
        let rel = (&from_split - &direct).norm() / direct.norm();
        if rel > 1e-10 {
            return Err(format!("split mismatch {rel:.3e} at reflection {k}"));
        }
    }
    Ok(())
}

/// CSV floats round-trip bit-exactly (including inf/NaN) and the manifest
/// records the seed.
fn check_csv_io(seed: u64) -> std::result::Result<(), String> {
    for x in [std::f64::consts::PI, 1e-300, f64::INFINITY, f64::NEG_INFINITY] {
        let back: f64 = fmt_float(x).parse().map_err(|e| format!("parse: {e}"))?;
        if back.to_bits() != x.to_bits() {
            return Err(format!("{x} round-tripped to {back}"));
        }
    }
    let back: f64 = fmt_float(f64::NAN).parse().map_err(|e| format!("parse: {e}"))?;
    if !back.is_nan() {
        return Err(format!("NaN round-tripped to {back}"));
    }
    let _ = project_constant_modulus(&random_reflection(4, seed));

    let dir = std::env::temp_dir();
    let csv_path = dir.join(format!("tenrice_selftest_{}.csv", std::process::id()));
    let cfg = ExperimentConfig { seed, ..Default::default() };
    write_manifest(&cfg, "selftest", &csv_path).map_err(|e| e.to_string())?;
    let manifest_path = csv_path.with_extension("manifest");
    let text = fs::read_to_string(&manifest_path).map_err(|e| e.to_string())?;
    fs::remove_file(&manifest_path).ok();
    if text.contains(&format!("seed={seed}\n")) {
        Ok(())
    } else {
        Err("manifest does not record the seed".into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::CeSweep(args) => run_ce(&args),
        Command::SeSweep(args) => run_se(&args),
        Command::Selftest { seed } => return selftest(seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
