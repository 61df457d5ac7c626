//! Canned experiments behind `repro` and the acceptance run.
//!
//! Every experiment takes a master seed and derives its own sub-seeds, so
//! targets can run alone or together with identical results.

use serde::Serialize;

use rtn_trng::analysis::{
    autocorrelation, dwell_times, estimate_psd, extract_levels, fit_spectrum, shannon_entropy,
    tlp, tlp_levels, AutocorrSeries, PsdConfig, SpectrumEstimate, TlpMatrix,
    DEFAULT_GUARD_SIGMAS,
};
use rtn_trng::bitgen::{lfsr_whiten, BitStream, LfsrConfig, SamplerConfig};
use rtn_trng::harvester::{
    psrr_estimate, Branches, Disturbance, Harvest, HarvestSeeds, HarvesterConfig, PsrrReport,
    Tone, PSRR_CEILING,
};
use rtn_trng::rtn::{
    corner_frequency, effective_dwell_times, lorentzian_psd, rts_time_constant, simulate_device,
    DeviceParams, OperatingPoint, TrapParams,
};
use rtn_trng::stat_tests::{run_battery, BatteryConfig, BatteryReport};
use rtn_trng::{seed, Execution};

use crate::config::Stage;
use crate::error::{Result, StageContext};

pub const DEFAULT_MASTER_SEED: u64 = 1;

/// Dwell-time grid of the spectral sweep, seconds.
pub const TAU_GRID: [f64; 3] = [0.01, 0.1, 1.0];

/// Stream length of the entropy, autocorrelation and battery experiments.
pub const STREAM_BITS: usize = 1 << 20;
pub const AUTOCORR_BITS: usize = 1 << 17;
pub const AUTOCORR_MAX_LAG: usize = 100;
pub const BATTERY_BITS: usize = 1_000_000;

fn trap_device(tau_h: f64, tau_l: f64, noise_sigma: f64) -> DeviceParams {
    DeviceParams {
        traps: vec![TrapParams {
            tau_capture_ref: tau_h,
            tau_emission_ref: tau_l,
            ..TrapParams::default()
        }],
        noise_sigma,
        ..DeviceParams::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorentzianCase {
    pub tau_h: f64,
    pub tau_l: f64,
    pub dt: f64,
    pub duration: f64,
    pub expected_corner: f64,
    pub fitted_corner: f64,
    /// `fitted / expected - 1`.
    pub corner_error: f64,
    pub alpha: f64,
    pub plateau: f64,
    pub expected_plateau: f64,
    pub segments: usize,
}

/// One noise-free single-trap trace sampled at `tau / 20` for `1e5 tau`,
/// Welch PSD and Lorentzian plus slope fit.
pub fn lorentzian_case(
    tau_h: f64,
    tau_l: f64,
    seed: u64,
    exec: Execution,
) -> Result<(LorentzianCase, SpectrumEstimate)> {
    let tau = rts_time_constant(tau_h, tau_l).stage("fig1a")?;
    let dt = tau / 20.0;
    let duration = 1e5 * tau;
    let dev = trap_device(tau_h, tau_l, 0.0);
    let (_, trace) = simulate_device(&dev, &OperatingPoint::default(), duration, dt, seed)
        .stage("fig1a.simulate")?;
    let spec = estimate_psd(&trace, &PsdConfig::default(), exec).stage("fig1a.psd")?;
    let (spec, lf, af) = fit_spectrum(&spec).stage("fig1a.fit")?;
    let expected_corner = corner_frequency(tau_h, tau_l).stage("fig1a")?;
    let delta_i = dev.traps[0].delta_i;
    Ok((
        LorentzianCase {
            tau_h,
            tau_l,
            dt,
            duration,
            expected_corner,
            fitted_corner: lf.corner,
            corner_error: lf.corner / expected_corner - 1.0,
            alpha: af.alpha,
            plateau: lf.plateau,
            expected_plateau: lorentzian_psd(0.0, delta_i, tau_h, tau_l).stage("fig1a")?,
            segments: spec.segments,
        },
        spec,
    ))
}

/// All nine `(tau_h, tau_l)` pairs of [`TAU_GRID`].
pub fn lorentzian_sweep(
    master: u64,
    exec: Execution,
) -> Result<Vec<(LorentzianCase, SpectrumEstimate)>> {
    let pairs: Vec<(f64, f64)> = TAU_GRID
        .iter()
        .flat_map(|&h| TAU_GRID.iter().map(move |&l| (h, l)))
        .collect();
    let base = Stage::Simulate.seed(master);
    let cases = exec.map_range(pairs.len(), |i| {
        let (h, l) = pairs[i];
        lorentzian_case(h, l, seed::derive(base, i as u64), Execution::Sequential)
    });
    cases.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DwellPoint {
    pub v_read: f64,
    pub temperature: f64,
    pub dt: f64,
    pub tau_h_true: f64,
    pub tau_l_true: f64,
    pub tau_h_est: f64,
    pub tau_l_est: f64,
    pub delta_i_true: f64,
    pub delta_i_est: f64,
    pub noise_sigma: f64,
    pub transitions: usize,
}

impl DwellPoint {
    pub fn tau_h_error(&self) -> f64 {
        self.tau_h_est / self.tau_h_true - 1.0
    }

    pub fn tau_l_error(&self) -> f64 {
        self.tau_l_est / self.tau_l_true - 1.0
    }
}

/// Simulates `dev` at `op` with `dt = min(tau) / 100` for about `2 * cycles`
/// transitions, then extracts levels and dwell times. With `psd` set, also
/// returns the normalized spectrum of the trace.
pub fn dwell_point(
    dev: &DeviceParams,
    op: &OperatingPoint,
    cycles: f64,
    seed: u64,
    psd: bool,
) -> Result<(DwellPoint, Option<SpectrumEstimate>)> {
    let (tau_h, tau_l) = effective_dwell_times(&dev.traps[0], op).stage("dwell")?;
    let dt = tau_h.min(tau_l) / 100.0;
    let (_, trace) = simulate_device(dev, op, cycles * (tau_h + tau_l), dt, seed)
        .stage("dwell.simulate")?;
    let ex = extract_levels(&trace, DEFAULT_GUARD_SIGMAS).stage("dwell.levels")?;
    let stats = dwell_times(&ex.levels, dt).stage("dwell.times")?;
    let spectrum = if psd {
        let cfg = PsdConfig {
            normalized: true,
            ..PsdConfig::default()
        };
        Some(estimate_psd(&trace, &cfg, Execution::Sequential).stage("dwell.psd")?)
    } else {
        None
    };
    let missing = |name: &str| {
        rtn_trng::Error::Data(format!("no complete {name} dwell in the trace"))
    };
    Ok((
        DwellPoint {
            v_read: op.v_read,
            temperature: op.temperature,
            dt,
            tau_h_true: tau_h,
            tau_l_true: tau_l,
            tau_h_est: stats.mean_tau_h.ok_or_else(|| missing("HIGH")).stage("dwell")?,
            tau_l_est: stats.mean_tau_l.ok_or_else(|| missing("LOW")).stage("dwell")?,
            delta_i_true: dev.traps[0].delta_i,
            delta_i_est: ex.delta_i,
            noise_sigma: dev.noise_sigma,
            transitions: stats.transitions,
        },
        spectrum,
    ))
}

/// `tau_h = 20 ms`, `tau_l = 10 ms`, `dI / sigma = 20`, about 2e4 transitions.
pub fn dwell_recovery(master: u64) -> Result<DwellPoint> {
    let dev = trap_device(0.02, 0.01, 200e-12 / 20.0);
    let s = seed::derive(Stage::Simulate.seed(master), 100);
    Ok(dwell_point(&dev, &OperatingPoint::default(), 1e4, s, false)?.0)
}

pub const VOLTAGE_SWEEP: [f64; 5] = [0.025, 0.05, 0.075, 0.1, 0.125];
pub const TEMPERATURE_SWEEP: [f64; 5] = [300.0, 315.0, 330.0, 345.0, 360.0];
/// Read voltage held during the temperature sweep.
pub const SWEEP_READ_VOLTAGE: f64 = 0.05;

fn sweep(
    ops: Vec<OperatingPoint>,
    stream: u64,
    master: u64,
    exec: Execution,
) -> Result<Vec<(DwellPoint, SpectrumEstimate)>> {
    let dev = DeviceParams::default();
    let base = seed::derive(Stage::Simulate.seed(master), stream);
    exec.map_range(ops.len(), |i| {
        let (p, s) = dwell_point(&dev, &ops[i], 1e4, seed::derive(base, i as u64), true)?;
        Ok((p, s.expect("spectrum requested")))
    })
    .into_iter()
    .collect()
}

/// Default device at 300 K across [`VOLTAGE_SWEEP`].
pub fn voltage_sweep(master: u64, exec: Execution) -> Result<Vec<(DwellPoint, SpectrumEstimate)>> {
    let ops = VOLTAGE_SWEEP
        .iter()
        .map(|&v| OperatingPoint::new(v, 300.0))
        .collect::<rtn_trng::Result<Vec<_>>>()
        .stage("fig3")?;
    sweep(ops, 200, master, exec)
}

/// Default device at [`SWEEP_READ_VOLTAGE`] across [`TEMPERATURE_SWEEP`].
pub fn temperature_sweep(
    master: u64,
    exec: Execution,
) -> Result<Vec<(DwellPoint, SpectrumEstimate)>> {
    let ops = TEMPERATURE_SWEEP
        .iter()
        .map(|&t| OperatingPoint::new(SWEEP_READ_VOLTAGE, t))
        .collect::<rtn_trng::Result<Vec<_>>>()
        .stage("fig3")?;
    sweep(ops, 300, master, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TlpResult {
    pub samples: usize,
    pub trace: TlpMatrix,
    pub levels: TlpMatrix,
}

/// Time-lag plot of a noisy default-device trace (lag 1, 64 bins) and of
/// its extracted levels.
pub fn time_lag_plot(master: u64) -> Result<TlpResult> {
    let dev = DeviceParams::default();
    let s = seed::derive(Stage::Simulate.seed(master), 400);
    let (_, trace) =
        simulate_device(&dev, &OperatingPoint::default(), 200.0, 1e-3, s).stage("fig4.simulate")?;
    let ex = extract_levels(&trace, DEFAULT_GUARD_SIGMAS).stage("fig4.levels")?;
    Ok(TlpResult {
        samples: trace.len(),
        trace: tlp(&trace.samples, 1, 64).stage("fig4.tlp")?,
        levels: tlp_levels(&ex.levels, 1).stage("fig4.tlp")?,
    })
}

/// Readout setup of the entropy, autocorrelation, bitmap and battery
/// experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub device: DeviceParams,
    pub op: OperatingPoint,
    pub disturbance: Disturbance,
    pub dt: f64,
    pub sampler: SamplerConfig,
    pub single_ended: HarvesterConfig,
    pub differential: HarvesterConfig,
    pub lfsr: LfsrConfig,
}

impl Default for Calibration {
    /// Symmetric 2 ms trap without measurement noise, a 1 mV / 100 Hz tone
    /// on `V_READ`, a single-ended reference 0.2 mV below `V_READ`, 2 ms
    /// bit clock.
    fn default() -> Self {
        let op = OperatingPoint::default();
        Self {
            device: trap_device(2e-3, 2e-3, 0.0),
            op,
            disturbance: Disturbance {
                common_mode_tone: Tone::new(1e-3, 100.0),
                ..Disturbance::default()
            },
            dt: 1e-4,
            sampler: SamplerConfig {
                sample_period: 2e-3,
                start_offset: 0.0,
            },
            single_ended: HarvesterConfig {
                reference_voltage: Some(op.v_read - 2e-4),
                ..HarvesterConfig::single_ended()
            },
            differential: HarvesterConfig::default(),
            lfsr: LfsrConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    pub single_ended: BitStream,
    pub differential: BitStream,
    pub whitened: BitStream,
}

impl Streams {
    pub fn named(&self) -> [(&'static str, &BitStream); 3] {
        [
            ("single_ended", &self.single_ended),
            ("differential_raw", &self.differential),
            ("differential_whitened", &self.whitened),
        ]
    }
}

/// Harvests `bits` clocked bits in each mode with the same harvest seeds
/// and whitens the differential stream.
pub fn calibrated_streams(cal: &Calibration, bits: usize, master: u64, exec: Execution) -> Result<Streams> {
    let duration = bits as f64 * cal.sampler.sample_period + 10.0 * cal.dt;
    let seeds = HarvestSeeds::from_master(Stage::Harvest.seed(master));
    let run = |differential: bool| -> Result<BitStream> {
        let (branches, cfg) = if differential {
            (Branches::Differential(&cal.device, &cal.device), &cal.differential)
        } else {
            (Branches::Single(&cal.device), &cal.single_ended)
        };
        let h = Harvest {
            branches,
            cfg,
            dist: &cal.disturbance,
            op: cal.op,
            duration,
            dt: cal.dt,
            seeds,
        };
        Ok(h.bits(&cal.sampler).stage("harvest")?.prefix(bits))
    };
    let mut out = exec.map(&[false, true], |&d| run(d)).into_iter();
    let single_ended = out.next().expect("two runs")?;
    let differential = out.next().expect("two runs")?;
    let whitened = lfsr_whiten(&differential, &cal.lfsr).stage("whiten")?;
    Ok(Streams {
        single_ended,
        differential,
        whitened,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRow {
    pub stream: String,
    pub bits: usize,
    pub ones_fraction: f64,
    pub block8: f64,
    pub block1: f64,
}

pub fn entropy_table(streams: &Streams) -> Result<Vec<EntropyRow>> {
    streams
        .named()
        .iter()
        .map(|(name, b)| {
            Ok(EntropyRow {
                stream: name.to_string(),
                bits: b.len(),
                ones_fraction: b.count_ones() as f64 / b.len() as f64,
                block8: shannon_entropy(b, 8).stage("entropy")?.shannon_bits_per_bit,
                block1: shannon_entropy(b, 1).stage("entropy")?.shannon_bits_per_bit,
            })
        })
        .collect()
}

/// Lags 1..=100 on the first 2^17 bits of each stream.
pub fn autocorr_table(streams: &Streams, exec: Execution) -> Result<Vec<(String, AutocorrSeries)>> {
    streams
        .named()
        .iter()
        .map(|(name, b)| {
            let a = autocorrelation(&b.prefix(AUTOCORR_BITS), AUTOCORR_MAX_LAG, exec)
                .stage("autocorrelation")?;
            Ok((name.to_string(), a))
        })
        .collect()
}

/// Battery on the first 10^6 whitened bits.
pub fn whitened_battery(streams: &Streams, cfg: &BatteryConfig, exec: Execution) -> BatteryReport {
    run_battery(&streams.whitened.prefix(BATTERY_BITS), cfg, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsrrComparison {
    pub single_ended: PsrrReport,
    pub differential: PsrrReport,
    /// Differential rejection over single-ended rejection.
    pub ratio: f64,
    pub zero_mismatch_bits: usize,
    /// Decisions of a zero-mismatch differential readout are unchanged by
    /// the supply and common-mode tones.
    pub zero_mismatch_identical: bool,
}

pub const PSRR_TONE: Tone = Tone {
    amplitude: 0.01,
    frequency: 100.0,
    phase: 0.0,
};

/// 100 Hz, 10 mV supply tone with default coupling and mismatch.
pub fn psrr_comparison(master: u64) -> Result<PsrrComparison> {
    let cal = Calibration::default();
    let seeds = HarvestSeeds::from_master(Stage::Harvest.seed(master));
    let supply = Disturbance {
        supply_tone: PSRR_TONE,
        ..Disturbance::default()
    };
    let (duration, dt) = (2.0, 1e-4);
    let harvest = |branches, cfg| Harvest {
        branches,
        cfg,
        dist: &supply,
        op: cal.op,
        duration,
        dt,
        seeds,
    };
    let se_cfg = HarvesterConfig::single_ended();
    let df_cfg = HarvesterConfig::default();
    let single_ended =
        psrr_estimate(&harvest(Branches::Single(&cal.device), &se_cfg), PSRR_CEILING)
            .stage("psrr.single_ended")?;
    let differential = psrr_estimate(
        &harvest(Branches::Differential(&cal.device, &cal.device), &df_cfg),
        PSRR_CEILING,
    )
    .stage("psrr.differential")?;

    let matched = HarvesterConfig {
        branch_mismatch: 0.0,
        ..HarvesterConfig::default()
    };
    let both = Disturbance {
        supply_tone: PSRR_TONE,
        common_mode_tone: Tone::new(0.01, 50.0),
        ..Disturbance::default()
    };
    let quiet = Disturbance::default();
    let decisions = |dist: &Disturbance| -> Result<Vec<u8>> {
        Ok(Harvest {
            dist,
            ..harvest(Branches::Differential(&cal.device, &cal.device), &matched)
        }
        .record()
        .stage("psrr.zero_mismatch")?
        .decision)
    };
    let with = decisions(&both)?;
    let without = decisions(&quiet)?;
    Ok(PsrrComparison {
        ratio: differential.rejection / single_ended.rejection,
        single_ended,
        differential,
        zero_mismatch_bits: with.len(),
        zero_mismatch_identical: with == without,
    })
}
