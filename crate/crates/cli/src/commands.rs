//! Subcommand bodies. Each writes into its own output directory and ends
//! with a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use rtn_trng::analysis::{
    autocorrelation, bitmap_write, dwell_times, estimate_psd, extract_levels, fit_spectrum,
    markov_predict, shannon_entropy, tlp, tlp_levels, AlphaFit, AutocorrSeries, DwellTimeStats,
    EntropyReport, LorentzianFit, MarkovReport, PbmFormat, TlpMatrix,
};
use rtn_trng::bitgen::{lfsr_whiten, BitFormat, BitStream};
use rtn_trng::harvester::{Branches, HarvestMode, Harvest, HarvestSeeds};
use rtn_trng::rtn::{effective_dwell_times, simulate_device, Trace, TRACE_MAGIC};
use rtn_trng::stat_tests::{run_battery, BatteryReport};
use rtn_trng::Execution;

use crate::config::{ExperimentConfig, Stage};
use crate::error::{CliError, Result, StageContext};
use crate::manifest::{self, ArtifactDir, MANIFEST_NAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Binary,
    Ascii,
    Csv,
    Json,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Binary => "binary",
            Format::Ascii => "ascii",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Picks the command's format, rejecting ones it cannot produce.
fn choose(format: Option<Format>, allowed: &[Format], command: &str) -> Result<Format> {
    match format {
        None => Ok(allowed[0]),
        Some(f) if allowed.contains(&f) => Ok(f),
        Some(f) => Err(CliError::config(format!(
            "{command} cannot write --format {}; choose one of {}",
            f.name(),
            allowed.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn bit_format(f: Format) -> BitFormat {
    if f == Format::Ascii {
        BitFormat::Ascii
    } else {
        BitFormat::Binary
    }
}

fn bits_name(stem: &str, f: BitFormat) -> String {
    match f {
        BitFormat::Binary => format!("{stem}.rtnb"),
        BitFormat::Ascii => format!("{stem}.txt"),
    }
}

fn write_bits(dir: &mut ArtifactDir, stem: &str, bits: &BitStream, f: BitFormat) -> Result<String> {
    let name = bits_name(stem, f);
    dir.write_with(&name, "write", |w| match f {
        BitFormat::Binary => bits.write_binary(w),
        BitFormat::Ascii => bits.write_ascii(w),
    })?;
    Ok(name)
}

fn read_bits(path: &Path) -> Result<BitStream> {
    BitStream::read_file(path).stage("read bitstream")
}

/// Outcome reported by `main`.
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: String,
    /// Set by `test` when an implemented test failed.
    pub tests_failed: bool,
}

impl Outcome {
    fn ok(dir: &ArtifactDir, summary: String) -> Self {
        Self {
            dir: dir.root().to_path_buf(),
            summary,
            tests_failed: false,
        }
    }
}

fn with_config(cfg: &ExperimentConfig, dir: &mut ArtifactDir) -> Result<()> {
    dir.write("config.toml", cfg.to_toml().as_bytes())?;
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path, format: Option<Format>) -> Result<Outcome> {
    let format = choose(format, &[Format::Binary, Format::Csv], "simulate")?;
    let mut dir = ArtifactDir::create(out, "simulate")?;
    let seed = Stage::Simulate.seed(cfg.seed);
    dir.seed(cfg.seed);
    dir.stage_seed(Stage::Simulate.name(), seed);
    with_config(cfg, &mut dir)?;
    let (trajectories, trace) = simulate_device(
        &cfg.device,
        &cfg.operating_point,
        cfg.simulation.duration,
        cfg.simulation.dt,
        seed,
    )
    .stage("simulate")?;
    match format {
        Format::Csv => dir.write_with("trace.csv", "simulate", |w| trace.write_csv(w))?,
        _ => dir.write_with("trace.rtnt", "simulate", |w| trace.write_binary(w))?,
    };

    #[derive(Serialize)]
    struct TrapTruth {
        tau_h: f64,
        tau_l: f64,
        delta_i: f64,
        transitions: usize,
        time_high: f64,
    }
    let truth = cfg
        .device
        .traps
        .iter()
        .zip(&trajectories)
        .map(|(trap, traj)| {
            let (tau_h, tau_l) = effective_dwell_times(trap, &cfg.operating_point)?;
            Ok(TrapTruth {
                tau_h,
                tau_l,
                delta_i: trap.delta_i,
                transitions: traj.transition_times.len(),
                time_high: traj.time_high(),
            })
        })
        .collect::<rtn_trng::Result<Vec<_>>>()
        .stage("simulate")?;
    dir.write_json("traps.json", &truth)?;
    let summary = format!("{} samples at dt = {:e} s, {} trap(s)", trace.len(), trace.dt, truth.len());
    let outcome = Outcome::ok(&dir, summary);
    dir.finish()?;
    Ok(outcome)
}

pub fn harvest(cfg: &ExperimentConfig, out: &Path, format: Option<Format>) -> Result<Outcome> {
    let format = bit_format(choose(format, &[Format::Binary, Format::Ascii], "harvest")?);
    let mut dir = ArtifactDir::create(out, "harvest")?;
    let seed = Stage::Harvest.seed(cfg.seed);
    dir.seed(cfg.seed);
    dir.stage_seed(Stage::Harvest.name(), seed);
    with_config(cfg, &mut dir)?;
    let branches = match cfg.harvester.mode {
        HarvestMode::SingleEnded => Branches::Single(&cfg.device),
        HarvestMode::Differential => Branches::Differential(&cfg.device, cfg.device_b()),
    };
    let h = Harvest {
        branches,
        cfg: &cfg.harvester,
        dist: &cfg.disturbance,
        op: cfg.operating_point,
        duration: cfg.harvest.duration,
        dt: cfg.harvest.dt,
        seeds: HarvestSeeds::from_master(seed),
    };
    let bits = if cfg.harvest.save_traces {
        let record = h.record().stage("harvest")?;
        dir.write_with("node_x.rtnt", "harvest", |w| record.channel_x().write_binary(w))?;
        if let Some(y) = record.channel_y() {
            dir.write_with("node_y.rtnt", "harvest", |w| y.write_binary(w))?;
        }
        write_bits(&mut dir, "decisions", &record.decisions(), format)?;
        rtn_trng::bitgen::sample_bits(&record, &cfg.sampler).stage("sample")?
    } else {
        h.bits(&cfg.sampler).stage("harvest")?
    };
    let name = write_bits(&mut dir, "bits", &bits, format)?;
    let summary = format!(
        "{} bits ({:.4} ones) -> {name}",
        bits.len(),
        bits.count_ones() as f64 / bits.len().max(1) as f64
    );
    let outcome = Outcome::ok(&dir, summary);
    dir.finish()?;
    Ok(outcome)
}

pub fn whiten(cfg: &ExperimentConfig, input: &Path, out: &Path, format: Option<Format>) -> Result<Outcome> {
    let format = bit_format(choose(format, &[Format::Binary, Format::Ascii], "whiten")?);
    let bits = read_bits(input)?;
    let mut dir = ArtifactDir::create(out, "whiten")?;
    dir.input(input)?;
    with_config(cfg, &mut dir)?;
    let white = lfsr_whiten(&bits, &cfg.lfsr).stage("whiten")?;
    let name = write_bits(&mut dir, "whitened", &white, format)?;
    let outcome = Outcome::ok(&dir, format!("{} bits -> {name}", white.len()));
    dir.finish()?;
    Ok(outcome)
}

#[derive(Serialize)]
struct TraceReport {
    kind: &'static str,
    samples: usize,
    dt: f64,
    mean: f64,
    lorentzian: LorentzianFit,
    alpha: AlphaFit,
    delta_i: f64,
    noise_sigma: f64,
    threshold: f64,
    dwell: DwellSummary,
    tlp_levels: TlpMatrix,
}

#[derive(Serialize)]
struct DwellSummary {
    mean_tau_h: Option<f64>,
    mean_tau_l: Option<f64>,
    high_dwells: usize,
    low_dwells: usize,
    transitions: usize,
}

impl From<&DwellTimeStats> for DwellSummary {
    fn from(s: &DwellTimeStats) -> Self {
        Self {
            mean_tau_h: s.mean_tau_h,
            mean_tau_l: s.mean_tau_l,
            high_dwells: s.high_dwells.len(),
            low_dwells: s.low_dwells.len(),
            transitions: s.transitions,
        }
    }
}

#[derive(Serialize)]
struct BitsReport {
    kind: &'static str,
    bits: usize,
    ones_fraction: f64,
    entropy_block1: EntropyReport,
    entropy_block: EntropyReport,
    autocorrelation: AutocorrSummary,
    markov: MarkovReport,
    bitmap: Option<String>,
}

#[derive(Serialize)]
struct AutocorrSummary {
    n: usize,
    confidence_band: f64,
    max_abs_rho: f64,
    violations: usize,
    fraction_within_band: f64,
}

impl From<&AutocorrSeries> for AutocorrSummary {
    fn from(a: &AutocorrSeries) -> Self {
        Self {
            n: a.n,
            confidence_band: a.confidence_band,
            max_abs_rho: a.max_abs(),
            violations: a.violations(),
            fraction_within_band: a.fraction_within_band(),
        }
    }
}

/// Trace input: PSD, fits, levels, dwell times and TLPs. Bitstream input:
/// entropy, autocorrelation, Markov predictor and bitmap.
pub fn analyze(cfg: &ExperimentConfig, input: &Path, out: &Path, format: Option<Format>) -> Result<Outcome> {
    choose(format, &[Format::Json, Format::Csv], "analyze")?;
    let bytes = fs::read(input).map_err(|e| CliError::io(input, e))?;
    let mut dir = ArtifactDir::create(out, "analyze")?;
    dir.input(input)?;
    with_config(cfg, &mut dir)?;
    let a = &cfg.analysis;
    let exec = Execution::Parallel;
    let summary = if bytes.starts_with(TRACE_MAGIC) {
        let trace = Trace::read_binary(bytes.as_slice()).stage("read trace")?;
        let spec = estimate_psd(&trace, &a.psd, exec).stage("analyze.psd")?;
        let (spec, lorentzian, alpha) = fit_spectrum(&spec).stage("analyze.fit")?;
        dir.write_with("spectrum.csv", "analyze", |w| spec.write_csv(w))?;
        let ex = extract_levels(&trace, a.guard_sigmas).stage("analyze.levels")?;
        let stats = dwell_times(&ex.levels, trace.dt).stage("analyze.dwell")?;
        let m = tlp(&trace.samples, a.tlp_lag, a.tlp_bins).stage("analyze.tlp")?;
        let rows = (0..m.bins).map(|r| {
            (0..m.bins).map(|c| m.at(r, c).to_string()).collect::<Vec<_>>().join(",")
        });
        dir.write_csv(
            "tlp.csv",
            &format!("# lag {}, range [{:e}, {:e}]", m.lag, m.range.0, m.range.1),
            rows,
        )?;
        let report = TraceReport {
            kind: "trace",
            samples: trace.len(),
            dt: trace.dt,
            mean: trace.mean(),
            lorentzian,
            alpha,
            delta_i: ex.delta_i,
            noise_sigma: ex.noise_sigma,
            threshold: ex.threshold,
            dwell: DwellSummary::from(&stats),
            tlp_levels: tlp_levels(&ex.levels, a.tlp_lag).stage("analyze.tlp")?,
        };
        dir.write_json("report.json", &report)?;
        format!(
            "corner {:.4e} Hz, alpha {:.3}, tau_h {:?} s, tau_l {:?} s",
            lorentzian.corner, alpha.alpha, stats.mean_tau_h, stats.mean_tau_l
        )
    } else {
        let bits = BitStream::decode(&bytes).stage("read bitstream")?;
        let ac = autocorrelation(&bits, a.max_lag, exec).stage("analyze.autocorrelation")?;
        let rows = ac.lags.iter().zip(&ac.rho).map(|(k, r)| format!("{k},{r:e}"));
        dir.write_csv("autocorr.csv", "lag,rho", rows)?;
        let bitmap = if bits.len() >= a.bitmap_width * a.bitmap_height {
            dir.write_with("bitmap.pbm", "analyze.bitmap", |w| {
                bitmap_write(&bits, a.bitmap_width, a.bitmap_height, PbmFormat::Raw, w)
            })?;
            Some("bitmap.pbm".to_string())
        } else {
            log::warn!("analyze: stream too short for a {}x{} bitmap", a.bitmap_width, a.bitmap_height);
            None
        };
        let report = BitsReport {
            kind: "bitstream",
            bits: bits.len(),
            ones_fraction: bits.count_ones() as f64 / bits.len().max(1) as f64,
            entropy_block1: shannon_entropy(&bits, 1).stage("analyze.entropy")?,
            entropy_block: shannon_entropy(&bits, a.entropy_block).stage("analyze.entropy")?,
            autocorrelation: AutocorrSummary::from(&ac),
            markov: markov_predict(&bits, a.markov_order, a.train_fraction).stage("analyze.markov")?,
            bitmap,
        };
        dir.write_json("report.json", &report)?;
        format!(
            "H{} = {:.4}, {} of {} lags outside the band",
            a.entropy_block,
            report.entropy_block.shannon_bits_per_bit,
            report.autocorrelation.violations,
            ac.lags.len()
        )
    };
    let outcome = Outcome::ok(&dir, summary);
    dir.finish()?;
    Ok(outcome)
}

#[derive(Serialize)]
struct Lineage {
    command: String,
    master_seed: Option<u64>,
    stage_seeds: std::collections::BTreeMap<String, u64>,
}

#[derive(Serialize)]
struct TestInput {
    source: String,
    length: usize,
    sha256: String,
    /// Provenance from a manifest next to the input that lists it.
    lineage: Option<Lineage>,
}

#[derive(Serialize)]
struct TestReport<'a> {
    input: TestInput,
    #[serde(flatten)]
    battery: &'a BatteryReport,
}

fn lineage(input: &Path) -> Option<Lineage> {
    let parent = input.parent()?;
    let name = input.file_name()?.to_str()?;
    let m = manifest::read_manifest(parent).ok()?;
    m.artifacts.iter().any(|a| a.path == name).then_some(Lineage {
        command: m.command,
        master_seed: m.master_seed,
        stage_seeds: m.stage_seeds,
    })
}

pub fn test(cfg: &ExperimentConfig, input: &Path, alpha: Option<f64>, out: &Path, format: Option<Format>) -> Result<Outcome> {
    choose(format, &[Format::Json], "test")?;
    let bits = read_bits(input)?;
    let mut bcfg = cfg.battery;
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::config(format!("alpha must be in (0, 1), got {a}")));
        }
        bcfg.alpha = a;
    }
    let mut dir = ArtifactDir::create(out, "test")?;
    dir.input(input)?;
    with_config(cfg, &mut dir)?;
    let report = run_battery(&bits, &bcfg, Execution::Parallel);
    let entry = manifest::input_entry(input)?;
    dir.write_json(
        "battery.json",
        &TestReport {
            input: TestInput {
                source: entry.path,
                length: bits.len(),
                sha256: entry.sha256,
                lineage: lineage(input),
            },
            battery: &report,
        },
    )?;
    let failed = report.failed();
    let summary = if failed.is_empty() {
        format!("all {} results passed at alpha = {}", report.results.len(), bcfg.alpha)
    } else {
        format!("{} of {} failed: {}", failed.len(), report.results.len() + report.errors.len(), failed.join(", "))
    };
    let mut outcome = Outcome::ok(&dir, summary);
    outcome.tests_failed = !report.all_passed();
    dir.finish()?;
    Ok(outcome)
}

pub fn bitmap(input: &Path, width: usize, height: usize, plain: bool, out: &Path) -> Result<Outcome> {
    let bits = read_bits(input)?;
    let mut dir = ArtifactDir::create(out, "bitmap")?;
    dir.input(input)?;
    let format = if plain { PbmFormat::Plain } else { PbmFormat::Raw };
    dir.write_with("bitmap.pbm", "bitmap", |w| bitmap_write(&bits, width, height, format, w))?;
    let outcome = Outcome::ok(&dir, format!("{width}x{height} bitmap"));
    dir.finish()?;
    Ok(outcome)
}

pub fn attack_baseline(input: &Path, order: usize, split: f64, out: &Path) -> Result<Outcome> {
    let bits = read_bits(input)?;
    let mut dir = ArtifactDir::create(out, "attack-baseline")?;
    dir.input(input)?;
    let report = markov_predict(&bits, order, split).stage("attack-baseline")?;
    dir.write_json("attack_baseline.json", &report)?;
    let summary = format!(
        "order-{order} accuracy {:.4} [{:.4}, {:.4}] on {} bits",
        report.accuracy, report.interval.0, report.interval.1, report.test_len
    );
    let outcome = Outcome::ok(&dir, summary);
    dir.finish()?;
    Ok(outcome)
}

/// Re-hashes the artifacts listed in `dir/manifest.json`.
pub fn verify(dir: &Path) -> Result<Vec<String>> {
    if !dir.join(MANIFEST_NAME).exists() {
        return Err(CliError::config(format!("{} has no {MANIFEST_NAME}", dir.display())));
    }
    manifest::verify(dir)
}
