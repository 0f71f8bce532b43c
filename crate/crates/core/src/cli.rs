//! `snspd` command-line interface.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::analysis::{
    array_efficiency_vs_rate, compose_array_jitter, efficiency_vs_rate, fit_ide_curve, fit_reset_time, fwhm_fw1m,
    interarrival_histogram, jitter_histogram, log_rates, mcr_3db, mean_interdetection_time, Histogram, Reference,
};
use crate::detector::{dark_count_rate, dead_time, ide, plateau_width, WireParams};
use crate::error::{Error, Result};
use crate::io::manifest::{FileDigest, Manifest};
use crate::io::table::{self, num};
use crate::io::tagfile::{read_tags, write_tags, TagReader, TagWriter};
use crate::io::RunConfig;
use crate::optics::sde;
use crate::sim::{inject_crosstalk, simulate_array, SourceKind, TagRecord, TruthRecord};
use crate::walk::{self, WalkCalibration, WalkConfig, WalkCorrector};

pub const TAGS_FILE: &str = "tags.pqtg";
pub const TRUTH_FILE: &str = "truth.csv";
pub const WIRES_FILE: &str = "wires.csv";
pub const CALIBRATION_FILE: &str = "walk_calibration.json";
pub const CORRECTED_FILE: &str = "tags_corrected.pqtg";
pub const CORRECTED_TRUTH_FILE: &str = "truth_corrected.csv";

/// Rates spanned by MCR curves (photons/s).
const MCR_RATES: (f64, f64, usize) = (1e5, 1e11, 241);
const JITTER_BIN_PS: f64 = 1.0;
const INTERARRIVAL_BIN_PS: f64 = 20.0;

#[derive(Debug, Parser)]
#[command(name = "snspd", version, about = "Simulate and analyze time tags from multi-wire SNSPD arrays")]
pub struct Cli {
    /// Worker threads for parallel stages (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo simulator and write a tag file with ground truth.
    Simulate(SimulateArgs),
    /// Photon count rate versus bias, with an efficiency-curve fit.
    AnalyzePcr(PcrArgs),
    /// Inter-arrival histogram and reset-time fit for one channel.
    AnalyzeDeadtime(TagAnalysisArgs),
    /// Jitter histogram with FWHM and FW1%M against truth or the laser sync.
    AnalyzeJitter(JitterArgs),
    /// Efficiency versus rate and the 3 dB maximum count rate.
    AnalyzeMcr(McrArgs),
    /// Build a time-walk calibration from tags and a timing reference.
    CalibrateWalk(CalibrateArgs),
    /// Apply a time-walk calibration to a tag file.
    ApplyWalk(ApplyArgs),
    /// Combine single-wire IRFs into an array IRF.
    ComposeArrayJitter(ComposeArgs),
    /// Sweep one config parameter and report reset time, dead time and MCR.
    Sweep(SweepArgs),
    /// Per-channel summary of a tag file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed; one of the two is required.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the shared discriminator threshold.
    #[arg(long)]
    pub threshold_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PcrArgs {
    /// Optional measured curve with columns `i_bias_ua,count_rate_cps`.
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
}

#[derive(Debug, Args)]
pub struct TagAnalysisArgs {
    pub tags: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub channel: u16,
}

#[derive(Debug, Args)]
pub struct JitterArgs {
    pub tags: PathBuf,
    /// Truth file from `simulate`; without it the pulsed source's sync is used.
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to one channel.
    #[arg(long)]
    pub channel: Option<u16>,
}

#[derive(Debug, Args)]
pub struct McrArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Wire for the single-wire curve; defaults to the brightest wire.
    #[arg(long)]
    pub channel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    pub tags: PathBuf,
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    /// Restrict calibration to one channel.
    #[arg(long)]
    pub channel: Option<u16>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    pub tags: PathBuf,
    pub calibration: PathBuf,
    /// Truth file of the input; written re-ordered alongside the output.
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Checked against the hash stored in the calibration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Apply at a lower order than calibrated.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: Option<u8>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// IRF library entries `RATE=histogram.csv`, rate in counts/s.
    #[arg(required = true)]
    pub irfs: Vec<String>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub tags: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses arguments, runs, and exits with the error category's code.
pub fn main() {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let mut body = json!({ "category": e.category(), "message": e.to_string() });
        if let Error::Config(v) = &e {
            body["violations"] = json!(v);
        }
        eprintln!("{}", json!({ "error": body }));
        std::process::exit(e.exit_code());
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be >= 1".into()));
        }
        // a pool already built by an earlier call in the same process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::AnalyzePcr(a) => analyze_pcr(a),
        Command::AnalyzeDeadtime(a) => analyze_deadtime(a),
        Command::AnalyzeJitter(a) => analyze_jitter(a),
        Command::AnalyzeMcr(a) => analyze_mcr(a),
        Command::CalibrateWalk(a) => calibrate_walk(a),
        Command::ApplyWalk(a) => apply_walk(a),
        Command::ComposeArrayJitter(a) => compose(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    }
}

fn out_dir(p: &Path) -> Result<&Path> {
    std::fs::create_dir_all(p)?;
    Ok(p)
}

fn started(command: &str, cfg: Option<&RunConfig>) -> Manifest {
    let mut m = Manifest::new(command);
    m.config_sha256 = cfg.map(RunConfig::hash);
    m
}

fn finish(mut m: Manifest, dir: &Path, inputs: &[&Path], outputs: &[&str]) -> Result<()> {
    m.inputs = inputs.iter().map(FileDigest::of).collect::<Result<_>>()?;
    m.outputs = outputs.iter().map(|f| FileDigest::of(dir.join(f))).collect::<Result<_>>()?;
    m.write(dir)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(t) = a.threshold_fraction {
        cfg.discriminator.threshold_fraction = t;
        cfg = RunConfig::from_value(serde_json::to_value(&cfg)?)?;
    }
    let seed = a.seed.or(cfg.seed).ok_or_else(|| Error::Config(vec!["seed: required (config `seed` or --seed)".into()]))?;
    let source = cfg.require_source()?.clone();
    let duration = cfg.require_duration()?;
    let r = cfg.resolve()?;
    let dir = out_dir(&a.out)?;

    let t0 = Instant::now();
    let out = simulate_array(&source, &r.profile, &r.params, &r.discriminators, duration, seed)?;
    let (tags, truth) = if cfg.crosstalk.probability > 0.0 {
        inject_crosstalk(&out.tags, &out.truth, r.profile.n_wires(), cfg.crosstalk.probability, cfg.crosstalk.delay_sigma_ps, seed)?
    } else {
        (out.tags, out.truth)
    };
    log::info!("simulated {} tags in {:.2?}", tags.len(), t0.elapsed());

    write_tags(dir.join(TAGS_FILE), &tags)?;
    table::write_truth(dir.join(TRUTH_FILE), &truth)?;
    table::write_rows(
        dir.join(WIRES_FILE),
        &["channel", "share", "arrivals", "dark_events", "detections", "tags", "lost_above_threshold", "lost_below_threshold", "latched"],
        out.per_wire.iter().enumerate().map(|(k, s)| {
            [
                k.to_string(),
                num(r.profile.per_wire[k]),
                s.arrivals.to_string(),
                s.dark_events.to_string(),
                s.detections.to_string(),
                s.tags.to_string(),
                s.lost_above_threshold.to_string(),
                s.lost_below_threshold.to_string(),
                (s.latched as u8).to_string(),
            ]
        }),
    )?;

    let photon_tags = tags.iter().filter(|t| t.flags == 0).count();
    let incident = source.mean_rate() * duration * 1e-9;
    let mut m = started("simulate", Some(&cfg));
    m.seed = Some(seed);
    m.options = json!({ "threshold_fraction": a.threshold_fraction });
    m.summary = json!({
        "duration_ns": duration,
        "tags": tags.len(),
        "photon_tags": photon_tags,
        "dark_tags": tags.iter().filter(|t| t.is_dark()).count(),
        "crosstalk_tags": tags.iter().filter(|t| t.is_crosstalk()).count(),
        "count_rate_cps": tags.len() as f64 / (duration * 1e-9),
        "optical_efficiency": r.optical_efficiency,
        "coupled_sde": sde(&r.profile),
        "sde_estimate": if incident > 0.0 { photon_tags as f64 / incident } else { 0.0 },
        "latched_channels": out.per_wire.iter().enumerate().filter(|(_, s)| s.latched).map(|(k, _)| k).collect::<Vec<_>>(),
    });
    finish(m, dir, &[a.config.as_path()], &[TAGS_FILE, TRUTH_FILE, WIRES_FILE])
}

fn wire_rate(cfg: &RunConfig, channel: usize) -> Result<f64> {
    let r = cfg.resolve()?;
    let share = r.profile.per_wire.get(channel).copied().ok_or_else(|| {
        Error::InvalidParameter(format!("channel {channel} is not below n_wires = {}", r.profile.n_wires()))
    })?;
    Ok(cfg.source.as_ref().map_or(1e5, |s| s.mean_rate()) * share)
}

fn analyze_pcr(a: PcrArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let p = cfg.wire_params(a.channel)?;
    let photons = wire_rate(&cfg, a.channel)?;
    let data: Vec<(f64, f64)> = match &a.input {
        Some(path) => table::read_pairs(path, &["i_bias_ua", "count_rate_cps"])?,
        None => (0..=100)
            .map(|k| {
                let i = p.i_switch * (0.2 + 0.8 * k as f64 / 100.0);
                Ok((i, photons * ide(i, &p) + dark_count_rate(i, &p)?))
            })
            .collect::<Result<_>>()?,
    };
    let fit = fit_ide_curve(&data, &p)?;
    let fitted = WireParams { i_detect: fit.i_detect, sigma: fit.sigma, ..p.clone() };
    let dir = out_dir(&a.out)?;
    let rows = data
        .iter()
        .map(|&(i, y)| Ok([num(i), num(y), num(dark_count_rate(i, &p)?), num(fit.scale * ide(i, &fitted))]))
        .collect::<Result<Vec<_>>>()?;
    table::write_rows(dir.join("pcr.csv"), &["i_bias_ua", "count_rate_cps", "dark_count_rate_cps", "fit_cps"], rows)?;
    let plateau = plateau_width(&fitted);
    let mut m = started("analyze-pcr", Some(&cfg));
    m.options = json!({ "channel": a.channel, "source": if a.input.is_some() { "measured" } else { "model" } });
    m.summary = json!({
        "i_detect_ua": fit.i_detect,
        "sigma_ua": fit.sigma,
        "scale_cps": fit.scale,
        "residual": fit.residual,
        "plateau_width_ua": plateau.width,
        "constricted": plateau.constricted,
    });
    let inputs: Vec<&Path> = std::iter::once(a.config.as_path()).chain(a.input.as_deref()).collect();
    finish(m, dir, &inputs, &["pcr.csv"])
}

fn analyze_deadtime(a: TagAnalysisArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let p = cfg.wire_params(a.channel as usize)?;
    let tags = read_tags(&a.tags, false)?;
    let h = interarrival_histogram(&tags, a.channel, INTERARRIVAL_BIN_PS)?;
    let dir = out_dir(&a.out)?;
    table::write_histogram(dir.join("interarrival.csv"), &h)?;
    let first = h.counts.iter().position(|&c| c > 0.0).map(|i| h.bin_edges[i]);
    let fit = fit_reset_time(&h, &p);
    let mut m = started("analyze-deadtime", Some(&cfg));
    m.options = json!({ "channel": a.channel, "bin_width_ps": INTERARRIVAL_BIN_PS });
    m.summary = json!({
        "intervals": h.total(),
        "shortest_interval_bin_ps": first,
        "model_tau_reset_ns": p.tau_reset(),
        "model_dead_time_ns": dead_time(&p, 0.01).ok(),
        "fit": match &fit {
            Ok(f) => json!({ "tau_reset_ns": f.tau_reset, "scale": f.scale, "residual": f.residual, "counts_used": f.counts_used }),
            Err(e) => json!({ "error": e.category(), "message": e.to_string() }),
        },
    });
    finish(m, dir, &[a.config.as_path(), a.tags.as_path()], &["interarrival.csv"])?;
    fit.map(|_| ())
}

fn reference_for<'a>(cfg: &RunConfig, truth: Option<&'a [TruthRecord]>) -> Result<Reference<'a>> {
    if let Some(t) = truth {
        return Ok(Reference::Truth(t));
    }
    match &cfg.source {
        Some(s) if s.kind == SourceKind::Pulsed => Ok(Reference::sync(1e12 / s.rep_rate)),
        _ => Err(Error::InvalidParameter("a truth file is required unless the config source is pulsed".into())),
    }
}

fn load_tags_truth(tags: &Path, truth: Option<&Path>, channel: Option<u16>) -> Result<(Vec<TagRecord>, Option<Vec<TruthRecord>>)> {
    let mut t = read_tags(tags, false)?;
    let mut tr = truth.map(table::read_truth).transpose()?;
    if let Some(tr) = &tr {
        if tr.len() != t.len() {
            return Err(Error::Format(format!("{} truth rows for {} tags", tr.len(), t.len())));
        }
        if let Some(i) = t.iter().zip(tr).position(|(a, b)| a.channel != b.channel) {
            return Err(Error::Format(format!("truth row {} does not belong to tag {i}", i + 1)));
        }
    }
    if let Some(ch) = channel {
        if let Some(tr) = &mut tr {
            *tr = t.iter().zip(tr.iter()).filter(|(a, _)| a.channel == ch).map(|(_, b)| *b).collect();
        }
        t.retain(|x| x.channel == ch);
    }
    Ok((t, tr))
}

fn analyze_jitter(a: JitterArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let (tags, truth) = load_tags_truth(&a.tags, a.truth.as_deref(), a.channel)?;
    let reference = reference_for(&cfg, truth.as_deref())?;
    let h = jitter_histogram(&tags, reference, JITTER_BIN_PS)?;
    let (fwhm, fw1m) = fwhm_fw1m(&h, false)?;
    let (mean, std) = h.mean_std().unwrap_or((0.0, 0.0));
    let dir = out_dir(&a.out)?;
    table::write_histogram(dir.join("jitter.csv"), &h)?;
    let mut m = started("analyze-jitter", Some(&cfg));
    m.options = json!({
        "channel": a.channel,
        "reference": if truth.is_some() { "truth" } else { "sync" },
        "bin_width_ps": JITTER_BIN_PS,
    });
    m.summary = json!({ "tags": tags.len(), "fwhm_ps": fwhm, "fw1m_ps": fw1m, "mean_ps": mean, "std_ps": std });
    let inputs: Vec<&Path> = [a.config.as_path(), a.tags.as_path()].into_iter().chain(a.truth.as_deref()).collect();
    finish(m, dir, &inputs, &["jitter.csv"])
}

fn brightest(cfg: &RunConfig) -> Result<usize> {
    let r = cfg.resolve()?;
    Ok(r.profile.per_wire.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |x| x.0))
}

fn analyze_mcr(a: McrArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let r = cfg.resolve()?;
    let channel = match a.channel {
        Some(c) if c >= r.params.len() => {
            return Err(Error::InvalidParameter(format!("channel {c} is not below n_wires = {}", r.params.len())))
        }
        Some(c) => c,
        None => brightest(&cfg)?,
    };
    let rates = log_rates(MCR_RATES.0, MCR_RATES.1, MCR_RATES.2);
    let array = array_efficiency_vs_rate(&r.params, &r.profile, &rates)?;
    let wire = efficiency_vs_rate(&r.params[channel], &rates)?;
    let dir = out_dir(&a.out)?;
    table::write_rate_curve(dir.join("array_rate.csv"), &array)?;
    table::write_rate_curve(dir.join("wire_rate.csv"), &wire)?;
    let array_mcr = mcr_3db(&array);
    let wire_mcr = mcr_3db(&wire);
    let mut m = started("analyze-mcr", Some(&cfg));
    m.options = json!({ "channel": channel });
    m.summary = json!({
        "normalization": array.normalization,
        "array_mcr_cps": array_mcr.as_ref().ok(),
        "wire_mcr_cps": wire_mcr.as_ref().ok(),
        "wire_channel": channel,
        "wire_share": r.profile.per_wire[channel],
    });
    finish(m, dir, &[a.config.as_path()], &["array_rate.csv", "wire_rate.csv"])?;
    array_mcr.and(wire_mcr).map(|_| ())
}

fn calibrate_walk(a: CalibrateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let (tags, truth) = load_tags_truth(&a.tags, a.truth.as_deref(), a.channel)?;
    let reference = reference_for(&cfg, truth.as_deref())?;
    let wcfg = WalkConfig::for_wire(&cfg.wire_params(a.channel.unwrap_or(0) as usize)?)?;
    let mut cal = walk::calibrate(&tags, reference, a.order, &wcfg)?;
    cal.config_hash = Some(cfg.hash());
    let dir = out_dir(&a.out)?;
    table::write_json(dir.join(CALIBRATION_FILE), &cal)?;
    let mut m = started("calibrate-walk", Some(&cfg));
    m.options = json!({ "order": a.order, "channel": a.channel, "reference": if truth.is_some() { "truth" } else { "sync" } });
    m.summary = json!({
        "tags": tags.len(),
        "filled_bins": cal.counts.iter().filter(|&&c| c >= cal.min_count).count(),
        "filled_cells": cal.counts2.iter().filter(|&&c| c >= cal.min_count).count(),
        "channels": cal.baselines.len(),
    });
    let inputs: Vec<&Path> = [a.config.as_path(), a.tags.as_path()].into_iter().chain(a.truth.as_deref()).collect();
    finish(m, dir, &inputs, &[CALIBRATION_FILE])
}

pub fn load_calibration(path: &Path) -> Result<WalkCalibration> {
    let text = std::fs::read_to_string(path)?;
    let cal: WalkCalibration = serde_json::from_str(&text)?;
    cal.validate()?;
    Ok(cal)
}

fn apply_walk(a: ApplyArgs) -> Result<()> {
    let mut cal = load_calibration(&a.calibration)?;
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    if let (Some(c), Some(h)) = (&cfg, &cal.config_hash) {
        if &c.hash() != h {
            log::warn!("calibration was built from a different config ({h})");
        }
    }
    match a.order {
        Some(o) if o > cal.order => {
            return Err(Error::InvalidParameter(format!("calibration has order {}, cannot apply order {o}", cal.order)))
        }
        Some(1) if cal.order == 2 => {
            cal.order = 1;
            cal.correction2.clear();
            cal.counts2.clear();
        }
        _ => {}
    }
    let dir = out_dir(&a.out)?;
    let t0 = Instant::now();
    let reader = TagReader::open(&a.tags)?;
    let mut corrector = WalkCorrector::new(&cal)?;
    let mut out = Vec::with_capacity(reader.declared_len().min(1 << 28) as usize);
    for t in reader {
        out.push(corrector.correct(t?));
    }
    let order: Option<Vec<usize>> = out.windows(2).any(|w| w[0].key() > w[1].key()).then(|| {
        let mut idx: Vec<usize> = (0..out.len()).collect();
        idx.sort_by_key(|&i| out[i].key());
        idx
    });
    if let Some(idx) = &order {
        out = idx.iter().map(|&i| out[i]).collect();
    }
    let mut w = TagWriter::create(dir.join(CORRECTED_FILE))?;
    w.write_all(&out)?;
    w.finish()?;
    let mut outputs = vec![CORRECTED_FILE];
    if let Some(path) = &a.truth {
        let mut truth = table::read_truth(path)?;
        if truth.len() != out.len() {
            return Err(Error::Format(format!("{} truth rows for {} tags", truth.len(), out.len())));
        }
        if let Some(idx) = &order {
            truth = idx.iter().map(|&i| truth[i]).collect();
        }
        table::write_truth(dir.join(CORRECTED_TRUTH_FILE), &truth)?;
        outputs.push(CORRECTED_TRUTH_FILE);
    }
    let secs = t0.elapsed().as_secs_f64();
    log::info!("corrected {} tags in {secs:.3} s ({:.3e} tags/s)", out.len(), out.len() as f64 / secs.max(1e-12));
    let mut m = started("apply-walk", cfg.as_ref());
    m.options = json!({ "order": cal.order });
    m.summary = json!({ "tags": out.len(), "calibration_config_sha256": cal.config_hash });
    let mut inputs: Vec<&Path> = vec![a.tags.as_path(), a.calibration.as_path()];
    inputs.extend(a.truth.as_deref());
    inputs.extend(a.config.as_deref());
    finish(m, dir, &inputs, &outputs)
}

fn parse_irf(spec: &str) -> Result<(f64, PathBuf)> {
    let (rate, path) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidParameter(format!("IRF entry `{spec}` is not RATE=PATH")))?;
    let rate: f64 = rate.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad IRF rate `{rate}`")))?;
    Ok((rate, PathBuf::from(path)))
}

fn compose(a: ComposeArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let r = cfg.resolve()?;
    let incident = cfg.require_source()?.mean_rate();
    let entries = a.irfs.iter().map(|s| parse_irf(s)).collect::<Result<Vec<_>>>()?;
    let library = entries
        .iter()
        .map(|(rate, path)| Ok((*rate, table::read_histogram(path)?)))
        .collect::<Result<Vec<(f64, Histogram)>>>()?;
    let rates = wire_count_rates(&r.params, &r.profile.per_wire, incident)?;
    let h = compose_array_jitter(&rates, &library)?;
    let (fwhm, fw1m) = fwhm_fw1m(&h, false)?;
    let dir = out_dir(&a.out)?;
    table::write_histogram(dir.join("composed.csv"), &h)?;
    let mut m = started("compose-array-jitter", Some(&cfg));
    m.options = json!({ "library_rates": entries.iter().map(|e| e.0).collect::<Vec<_>>() });
    m.summary = json!({
        "incident_rate_per_s": incident,
        "array_count_rate_cps": rates.iter().sum::<f64>(),
        "wire_count_rates_cps": rates,
        "fwhm_ps": fwhm,
        "fw1m_ps": fw1m,
    });
    let mut inputs: Vec<&Path> = vec![a.config.as_path()];
    inputs.extend(entries.iter().map(|e| e.1.as_path()));
    finish(m, dir, &inputs, &["composed.csv"])
}

/// Renewal count rate of every wire at array incident rate `incident`.
pub fn wire_count_rates(params: &[WireParams], shares: &[f64], incident: f64) -> Result<Vec<f64>> {
    shares
        .par_iter()
        .enumerate()
        .map(|(k, &s)| {
            let p = &params[k.min(params.len() - 1)];
            if s * incident > 0.0 {
                Ok(1e9 / mean_interdetection_time(p, s * incident)?)
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let sw = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config(vec!["sweep: required for this command".into()]))?;
    let rates = log_rates(MCR_RATES.0, MCR_RATES.1, MCR_RATES.2);
    let rows = sw
        .values
        .par_iter()
        .map(|&v| {
            let c = cfg.with_parameter(&sw.parameter, v)?;
            let r = c.resolve()?;
            let k = brightest(&c)?;
            let p = &r.params[k];
            let wire = mcr_3db(&efficiency_vs_rate(p, &rates)?).ok();
            let array = mcr_3db(&array_efficiency_vs_rate(&r.params, &r.profile, &rates)?).ok();
            Ok((v, p.tau_reset(), dead_time(p, 0.01).ok(), wire, array, sde(&r.profile)))
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(&a.out)?;
    table::write_rows(
        dir.join("sweep.csv"),
        &["value", "tau_reset_ns", "dead_time_ns", "wire_mcr_cps", "array_mcr_cps", "sde"],
        rows.iter().map(|&(v, tau, dead, wire, array, s)| [num(v), num(tau), opt(dead), opt(wire), opt(array), num(s)]),
    )?;
    let mut m = started("sweep", Some(&cfg));
    m.options = json!({ "parameter": sw.parameter, "values": sw.values });
    m.summary = json!({
        "points": rows.iter().map(|r| json!({
            "value": r.0, "tau_reset_ns": r.1, "dead_time_ns": r.2, "wire_mcr_cps": r.3, "array_mcr_cps": r.4, "sde": r.5,
        })).collect::<Vec<_>>(),
    });
    finish(m, dir, &[a.config.as_path()], &["sweep.csv"])
}

#[derive(Default, Clone, Copy)]
struct ChannelSummary {
    tags: u64,
    dark: u64,
    crosstalk: u64,
    first: u64,
    last: u64,
}

fn report(a: ReportArgs) -> Result<()> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let mut per: Vec<ChannelSummary> = Vec::new();
    let mut total = 0u64;
    let mut span: Option<(u64, u64)> = None;
    for t in TagReader::open(&a.tags)? {
        let t = t?;
        let c = t.channel as usize;
        if c >= per.len() {
            per.resize(c + 1, ChannelSummary::default());
        }
        let s = &mut per[c];
        if s.tags == 0 {
            s.first = t.time;
        }
        s.tags += 1;
        s.dark += t.is_dark() as u64;
        s.crosstalk += t.is_crosstalk() as u64;
        s.last = t.time;
        total += 1;
        span = Some((span.map_or(t.time, |s| s.0), t.time));
    }
    let dir = out_dir(&a.out)?;
    let rate = |s: &ChannelSummary| {
        if s.tags > 1 && s.last > s.first {
            (s.tags - 1) as f64 / ((s.last - s.first) as f64 * 1e-12)
        } else {
            0.0
        }
    };
    table::write_rows(
        dir.join("report.csv"),
        &["channel", "tags", "dark_tags", "crosstalk_tags", "first_ps", "last_ps", "count_rate_cps"],
        per.iter().enumerate().filter(|(_, s)| s.tags > 0).map(|(k, s)| {
            [
                k.to_string(),
                s.tags.to_string(),
                s.dark.to_string(),
                s.crosstalk.to_string(),
                s.first.to_string(),
                s.last.to_string(),
                num(rate(s)),
            ]
        }),
    )?;
    let mut m = started("report", cfg.as_ref());
    m.summary = json!({
        "tags": total,
        "channels": per.iter().filter(|s| s.tags > 0).count(),
        "dark_tags": per.iter().map(|s| s.dark).sum::<u64>(),
        "crosstalk_tags": per.iter().map(|s| s.crosstalk).sum::<u64>(),
        "first_ps": span.map(|s| s.0),
        "last_ps": span.map(|s| s.1),
    });
    let mut inputs: Vec<&Path> = vec![a.tags.as_path()];
    inputs.extend(a.config.as_deref());
    finish(m, dir, &inputs, &["report.csv"])
}
