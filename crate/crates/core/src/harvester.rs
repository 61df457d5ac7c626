//! Behavioral models of the single-ended and differential RTN readout
//! circuits.
//!
//! Each branch node is held at `V_READ` by a first-order regulation loop
//! with time constant `1 / (2 pi loop_bandwidth)`:
//!
//! * a step `dI` in branch current displaces the node by `dI / G` (with `G`
//!   the branch small-signal conductance), after which the loop pulls it
//!   back exponentially;
//! * supply and `V_READ` disturbances move the regulation target, which the
//!   node follows through the same first-order low-pass.
//!
//! Disturbances reach both branches identically, scaled by
//! `1 +/- branch_mismatch / 2`. The comparator is an ideal hysteretic sign
//! with an additive input-referred offset.

use std::f64::consts::PI;

use log::warn;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bitgen::{BitStream, SamplerConfig};
use crate::error::{Error, Result};
use crate::rtn::{
    baseline_current, effective_dwell_times, DeviceParams, OperatingPoint, Trace, TraceMeta,
    TrapProcess, BOLTZMANN_EV,
};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestMode {
    SingleEnded,
    Differential,
}

/// Readout circuit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvesterConfig {
    pub mode: HarvestMode,
    /// Regulation loop bandwidth, hertz.
    pub loop_bandwidth: f64,
    /// Comparator input-referred offset, volts.
    pub comparator_offset: f64,
    /// Comparator hysteresis half-width, volts.
    pub comparator_hysteresis: f64,
    /// Relative conductance mismatch between the branches, in [0, 0.5].
    pub branch_mismatch: f64,
    /// Single-ended comparison level; `None` compares against `V_READ`.
    pub reference_voltage: Option<f64>,
    /// Fraction of a supply disturbance that reaches a regulated node.
    pub supply_coupling: f64,
    /// Identical ReRAMs placed in parallel in each branch.
    pub devices_per_branch: usize,
}

impl Default for HarvesterConfig {
    fn default() -> Self {
        Self {
            mode: HarvestMode::Differential,
            loop_bandwidth: 1e3,
            comparator_offset: 0.0,
            comparator_hysteresis: 1e-3,
            branch_mismatch: 0.01,
            reference_voltage: None,
            supply_coupling: 0.1,
            devices_per_branch: 1,
        }
    }
}

impl HarvesterConfig {
    pub fn single_ended() -> Self {
        Self {
            mode: HarvestMode::SingleEnded,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loop_bandwidth.is_finite() && self.loop_bandwidth > 0.0) {
            return Err(Error::config(format!(
                "loop bandwidth must be positive, got {}",
                self.loop_bandwidth
            )));
        }
        if !(self.comparator_hysteresis.is_finite() && self.comparator_hysteresis >= 0.0) {
            return Err(Error::config("comparator hysteresis must be non-negative"));
        }
        if !self.comparator_offset.is_finite() {
            return Err(Error::config("comparator offset must be finite"));
        }
        if !(0.0..=0.5).contains(&self.branch_mismatch) {
            return Err(Error::config(format!(
                "branch mismatch must be in [0, 0.5], got {}",
                self.branch_mismatch
            )));
        }
        if !(self.supply_coupling.is_finite() && self.supply_coupling >= 0.0) {
            return Err(Error::config("supply coupling must be non-negative"));
        }
        if self.devices_per_branch == 0 {
            return Err(Error::config("each branch needs at least one device"));
        }
        if let Some(r) = self.reference_voltage {
            if !r.is_finite() {
                return Err(Error::config("reference voltage must be finite"));
            }
        }
        Ok(())
    }

    fn loop_time_constant(&self) -> f64 {
        1.0 / (2.0 * PI * self.loop_bandwidth)
    }
}

/// A sinusoidal disturbance. Zero amplitude means absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tone {
    /// Volts.
    pub amplitude: f64,
    /// Hertz.
    pub frequency: f64,
    /// Radians.
    pub phase: f64,
}

impl Tone {
    pub fn new(amplitude: f64, frequency: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.amplitude != 0.0
    }

    fn at(&self, t: f64) -> f64 {
        if self.is_active() {
            self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin()
        } else {
            0.0
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::config(format!("{name} amplitude must be non-negative")));
        }
        if self.is_active() && !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::config(format!("{name} frequency must be positive")));
        }
        Ok(())
    }
}

/// Environmental disturbances injected into a readout run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Disturbance {
    pub supply_tone: Tone,
    /// Tone riding on `V_READ` (common mode for the differential circuit).
    pub common_mode_tone: Tone,
    /// Kelvin per second, applied identically to every device.
    pub temperature_drift: f64,
    /// White supply noise per step, volts.
    pub broadband_supply_noise_sigma: f64,
}

impl Disturbance {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.supply_tone.validate("supply tone")?;
        self.common_mode_tone.validate("common-mode tone")?;
        if !self.temperature_drift.is_finite() {
            return Err(Error::config("temperature drift must be finite"));
        }
        if !(self.broadband_supply_noise_sigma.is_finite()
            && self.broadband_supply_noise_sigma >= 0.0)
        {
            return Err(Error::config("supply noise sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Analog node voltages and the continuous comparator output.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutRecord {
    pub dt: f64,
    pub v_x: Vec<f64>,
    /// Present for differential runs only.
    pub v_y: Option<Vec<f64>>,
    pub decision: Vec<u8>,
}

impl ReadoutRecord {
    pub fn len(&self) -> usize {
        self.decision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decision.is_empty()
    }

    pub fn decisions(&self) -> BitStream {
        BitStream::from_bits(self.decision.clone()).expect("decisions are binary")
    }

    pub fn channel_x(&self) -> Trace {
        Trace {
            dt: self.dt,
            samples: self.v_x.clone(),
            meta: TraceMeta::default(),
        }
    }

    pub fn channel_y(&self) -> Option<Trace> {
        self.v_y.as_ref().map(|v| Trace {
            dt: self.dt,
            samples: v.clone(),
            meta: TraceMeta::default(),
        })
    }
}

/// Seeds of the independent random streams in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestSeeds {
    pub branch_x: u64,
    pub branch_y: u64,
    pub disturbance: u64,
}

impl HarvestSeeds {
    pub fn from_master(seed: u64) -> Self {
        Self {
            branch_x: seed::derive(seed, 1),
            branch_y: seed::derive(seed, 2),
            disturbance: seed::derive(seed, 3),
        }
    }
}

/// Devices under the two comparator inputs.
#[derive(Debug, Clone, Copy)]
pub enum Branches<'a> {
    Single(&'a DeviceParams),
    Differential(&'a DeviceParams, &'a DeviceParams),
}

/// A fully specified readout run.
#[derive(Debug, Clone, Copy)]
pub struct Harvest<'a> {
    pub branches: Branches<'a>,
    pub cfg: &'a HarvesterConfig,
    pub dist: &'a Disturbance,
    pub op: OperatingPoint,
    pub duration: f64,
    pub dt: f64,
    pub seeds: HarvestSeeds,
}

/// One simulation step as seen by a sink.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub index: usize,
    pub v_x: f64,
    pub v_y: f64,
    /// Comparator input before the offset (`v_x - v_y` or `v_x - reference`).
    pub analog: f64,
    pub decision: u8,
}

struct TrapState {
    process: TrapProcess<ChaCha8Rng>,
    delta_i: f64,
    activation_energy: f64,
    clock: f64,
}

struct BranchState {
    traps: Vec<TrapState>,
    devices: Vec<DeviceParams>,
    scale: f64,
    current: f64,
    jump: f64,
    target: f64,
}

impl BranchState {
    fn new(
        device: &DeviceParams,
        copies: usize,
        scale: f64,
        op: &OperatingPoint,
        branch_seed: u64,
    ) -> Result<Self> {
        device.validate()?;
        let mut traps = Vec::new();
        for copy in 0..copies {
            let device_seed = seed::derive(branch_seed, copy as u64);
            for (i, trap) in device.traps.iter().enumerate() {
                let (tau_h, tau_l) = effective_dwell_times(trap, op)?;
                let rng = seed::rng(seed::derive(device_seed, i as u64));
                traps.push(TrapState {
                    process: TrapProcess::new(tau_h, tau_l, rng)?,
                    delta_i: trap.delta_i,
                    activation_energy: trap.activation_energy,
                    clock: 0.0,
                });
            }
        }
        Ok(Self {
            traps,
            devices: vec![device.clone(); copies],
            scale,
            current: 0.0,
            jump: 0.0,
            target: 0.0,
        })
    }

    /// Branch current and conductance at time `t`, temperature `temp`.
    fn evaluate(&mut self, v_read: f64, t0: f64, temp: f64, dt: f64, warp: bool) -> Result<(f64, f64)> {
        let mut base = 0.0;
        let mut conductance = 0.0;
        for d in &self.devices {
            base += baseline_current(v_read, d, temp)?;
            conductance += d.small_signal_conductance(v_read, temp)?;
        }
        let mut rtn = 0.0;
        for trap in &mut self.traps {
            if trap.process.advance_to(trap.clock).is_high() {
                rtn += trap.delta_i;
            }
            if warp {
                // Dwell times scale with the Arrhenius factor relative to the
                // start temperature, so the trap clock runs faster when hot.
                let rate =
                    (-(trap.activation_energy / BOLTZMANN_EV) * (1.0 / temp - 1.0 / t0)).exp();
                trap.clock += dt * rate;
            } else {
                trap.clock += dt;
            }
        }
        Ok((self.scale * base + rtn, self.scale * conductance))
    }
}

struct Comparator {
    hysteresis: f64,
    state: Option<u8>,
}

impl Comparator {
    fn decide(&mut self, u: f64) -> u8 {
        let next = match self.state {
            None => u8::from(u > 0.0),
            Some(_) if u > self.hysteresis => 1,
            Some(_) if u < -self.hysteresis => 0,
            Some(s) => s,
        };
        self.state = Some(next);
        next
    }
}

impl Harvest<'_> {
    fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.dist.validate()?;
        self.op.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > 0.1 / self.cfg.loop_bandwidth * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "dt = {} s is too coarse for a {} Hz loop (need dt <= {} s)",
                self.dt,
                self.cfg.loop_bandwidth,
                0.1 / self.cfg.loop_bandwidth
            )));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::config(format!(
                "duration must be at least one step, got {}",
                self.duration
            )));
        }
        match (self.branches, self.cfg.mode) {
            (Branches::Single(_), HarvestMode::SingleEnded) => Ok(()),
            (Branches::Differential(a, b), HarvestMode::Differential) => {
                if a.traps.is_empty() || b.traps.is_empty() {
                    warn!("differential run with a trap-free branch has no entropy source");
                }
                Ok(())
            }
            (_, mode) => Err(Error::config(format!(
                "branch layout does not match harvester mode {mode:?}"
            ))),
        }
    }

    pub fn steps(&self) -> usize {
        ((self.duration / self.dt) + 1e-9).floor() as usize
    }

    /// Runs the simulation, handing every step to `sink`.
    pub fn run<F: FnMut(Step)>(&self, mut sink: F) -> Result<()> {
        self.validate()?;
        let cfg = self.cfg;
        let dist = self.dist;
        let v_read = self.op.v_read;
        let t0 = self.op.temperature;
        let half = cfg.branch_mismatch / 2.0;
        let copies = cfg.devices_per_branch;
        let (mut x, mut y) = match self.branches {
            Branches::Single(d) => (
                BranchState::new(d, copies, 1.0, &self.op, self.seeds.branch_x)?,
                None,
            ),
            Branches::Differential(a, b) => (
                BranchState::new(a, copies, 1.0 + half, &self.op, self.seeds.branch_x)?,
                Some(BranchState::new(b, copies, 1.0 - half, &self.op, self.seeds.branch_y)?),
            ),
        };
        let reference = cfg.reference_voltage.unwrap_or(v_read);
        let beta = (-self.dt / cfg.loop_time_constant()).exp();
        let warp = dist.temperature_drift != 0.0;
        let noise = if dist.broadband_supply_noise_sigma > 0.0 {
            Some(
                Normal::new(0.0, dist.broadband_supply_noise_sigma)
                    .map_err(|e| Error::config(e.to_string()))?,
            )
        } else {
            None
        };
        let mut noise_rng = seed::rng(self.seeds.disturbance);
        let mut comparator = Comparator {
            hysteresis: cfg.comparator_hysteresis,
            state: None,
        };

        for k in 0..self.steps() {
            let t = k as f64 * self.dt;
            let temp = t0 + dist.temperature_drift * t;
            if temp <= 0.0 {
                return Err(Error::config(format!(
                    "temperature drift drives the device to {temp} K"
                )));
            }
            let supply = dist.supply_tone.at(t)
                + noise.map_or(0.0, |n| n.sample(&mut noise_rng));
            let common = dist.common_mode_tone.at(t) + cfg.supply_coupling * supply;

            let node = |b: &mut BranchState| -> Result<()> {
                let (current, conductance) = b.evaluate(v_read, t0, temp, self.dt, warp)?;
                let target = b.scale * common;
                if k == 0 {
                    b.jump = 0.0;
                    b.target = target;
                } else {
                    b.jump = beta * b.jump + (current - b.current) / conductance;
                    b.target = beta * b.target + (1.0 - beta) * target;
                }
                b.current = current;
                Ok(())
            };
            node(&mut x)?;
            let v_x = v_read + x.jump + x.target;
            // Differences are taken term by term so that identical
            // disturbance terms cancel exactly.
            let (v_y, analog) = match y.as_mut() {
                Some(b) => {
                    node(b)?;
                    (
                        v_read + b.jump + b.target,
                        (x.jump - b.jump) + (x.target - b.target),
                    )
                }
                None => (reference, x.jump + x.target + (v_read - reference)),
            };
            let decision = comparator.decide(analog + cfg.comparator_offset);
            sink(Step {
                index: k,
                v_x,
                v_y,
                analog,
                decision,
            });
        }
        Ok(())
    }

    /// Full record of node voltages and decisions.
    pub fn record(&self) -> Result<ReadoutRecord> {
        let n = self.steps();
        let differential = matches!(self.branches, Branches::Differential(..));
        let mut v_x = Vec::with_capacity(n);
        let mut v_y = Vec::with_capacity(if differential { n } else { 0 });
        let mut decision = Vec::with_capacity(n);
        self.run(|s| {
            v_x.push(s.v_x);
            if differential {
                v_y.push(s.v_y);
            }
            decision.push(s.decision);
        })?;
        Ok(ReadoutRecord {
            dt: self.dt,
            v_x,
            v_y: differential.then_some(v_y),
            decision,
        })
    }

    /// Clocked bits without storing the analog record. Produces exactly what
    /// `bitgen::sample_bits` would on `self.record()`.
    pub fn bits(&self, sampler: &SamplerConfig) -> Result<BitStream> {
        let n = self.steps();
        if !(sampler.sample_period.is_finite() && sampler.sample_period >= self.dt * (1.0 - 1e-9)) {
            return Err(Error::config(format!(
                "sample period {} s is shorter than the record step {} s",
                sampler.sample_period, self.dt
            )));
        }
        if !(sampler.start_offset.is_finite() && sampler.start_offset >= 0.0) {
            return Err(Error::config("start offset must be non-negative"));
        }
        let duration = n as f64 * self.dt;
        if n == 0 || sampler.start_offset >= duration {
            return Ok(BitStream::new());
        }
        let count =
            ((duration - sampler.start_offset) / sampler.sample_period + 1e-9).floor() as usize;
        let index_of = |k: usize| {
            let t = sampler.start_offset + k as f64 * sampler.sample_period;
            ((t / self.dt).round() as usize).min(n - 1)
        };
        let mut bits = Vec::with_capacity(count);
        let mut next = 0;
        self.run(|s| {
            while next < count && index_of(next) == s.index {
                bits.push(s.decision);
                next += 1;
            }
        })?;
        BitStream::from_bits(bits)
    }

    /// Pre-comparator signal only.
    pub fn analog(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps());
        self.run(|s| out.push(s.analog))?;
        Ok(out)
    }
}

/// Differential readout of two independently seeded devices.
#[allow(clippy::too_many_arguments)]
pub fn run_differential(
    device_a: &DeviceParams,
    device_b: &DeviceParams,
    cfg: &HarvesterConfig,
    dist: &Disturbance,
    op: &OperatingPoint,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<ReadoutRecord> {
    Harvest {
        branches: Branches::Differential(device_a, device_b),
        cfg,
        dist,
        op: *op,
        duration,
        dt,
        seeds: HarvestSeeds::from_master(seed),
    }
    .record()
}

/// Single-ended readout against `cfg.reference_voltage`.
pub fn run_single_ended(
    device: &DeviceParams,
    cfg: &HarvesterConfig,
    dist: &Disturbance,
    op: &OperatingPoint,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<ReadoutRecord> {
    Harvest {
        branches: Branches::Single(device),
        cfg,
        dist,
        op: *op,
        duration,
        dt,
        seeds: HarvestSeeds::from_master(seed),
    }
    .record()
}

/// Supply rejection measured at the comparator input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsrrReport {
    pub frequency: f64,
    /// Injected supply amplitude, volts.
    pub injected: f64,
    /// Tone amplitude found at the comparator input, volts.
    pub leaked: f64,
    /// `injected / leaked`, or the ceiling.
    pub rejection: f64,
    pub rejection_db: f64,
    /// True when the rejection hit the ceiling ("at least").
    pub clipped: bool,
}

/// Default ceiling for reported rejection ratios (120 dB).
pub const PSRR_CEILING: f64 = 1e6;

/// Supply rejection at the frequency of the single supply tone in `dist`.
///
/// The run is simulated twice with identical seeds, with and without the
/// tone. The tone-induced part of the comparator input is the difference of
/// the two pre-comparator signals (everything before the comparator is
/// linear in the disturbance), and its amplitude is taken by a single-bin
/// Fourier projection over whole tone periods after the loop has settled.
pub fn psrr_estimate(harvest: &Harvest<'_>, ceiling: f64) -> Result<PsrrReport> {
    let dist = harvest.dist;
    let tone = dist.supply_tone;
    if !tone.is_active()
        || dist.common_mode_tone.is_active()
        || dist.broadband_supply_noise_sigma != 0.0
        || dist.temperature_drift != 0.0
    {
        return Err(Error::config(
            "PSRR needs exactly one non-zero supply tone and no other disturbance",
        ));
    }
    let dt = harvest.dt;
    if tone.frequency >= 0.25 / dt {
        return Err(Error::config(format!(
            "tone at {} Hz is not resolvable with dt = {dt} s",
            tone.frequency
        )));
    }
    let period = 1.0 / tone.frequency;
    let settle = 10.0 * harvest.cfg.loop_time_constant();
    let skip_periods = (settle / period).ceil();
    let usable = harvest.steps() as f64 * dt - skip_periods * period;
    let periods = (usable / period).floor();
    if periods < 1.0 {
        return Err(Error::config(format!(
            "duration {} s holds no whole tone period after settling",
            harvest.duration
        )));
    }
    let start = (skip_periods * period / dt).round() as usize;
    let len = (periods * period / dt).round() as usize;

    let with_tone = harvest.analog()?;
    let quiet = Disturbance::clean();
    let without = Harvest {
        dist: &quiet,
        ..*harvest
    }
    .analog()?;

    let omega = 2.0 * PI * tone.frequency;
    let (mut re, mut im) = (0.0, 0.0);
    for k in start..(start + len).min(with_tone.len()) {
        let d = with_tone[k] - without[k];
        let phase = omega * k as f64 * dt;
        re += d * phase.cos();
        im += d * phase.sin();
    }
    let leaked = 2.0 * re.hypot(im) / len as f64;
    let ratio = tone.amplitude / leaked;
    let clipped = !(ratio.is_finite() && ratio < ceiling);
    let rejection = if clipped { ceiling } else { ratio };
    Ok(PsrrReport {
        frequency: tone.frequency,
        injected: tone.amplitude,
        leaked,
        rejection,
        rejection_db: 20.0 * rejection.log10(),
        clipped,
    })
}

/// Magnitude response of the discretised regulation loop to a disturbance
/// at `frequency`.
pub fn loop_gain(frequency: f64, loop_bandwidth: f64, dt: f64) -> f64 {
    let beta = (-dt * 2.0 * PI * loop_bandwidth).exp();
    let w = 2.0 * PI * frequency * dt;
    let re = 1.0 - beta * w.cos();
    let im = beta * w.sin();
    (1.0 - beta) / re.hypot(im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtn::TrapParams;

    fn fast_device(tau: f64) -> DeviceParams {
        DeviceParams {
            traps: vec![TrapParams {
                tau_capture_ref: tau,
                tau_emission_ref: tau,
                ..TrapParams::default()
            }],
            noise_sigma: 0.0,
            ..DeviceParams::default()
        }
    }

    fn op() -> OperatingPoint {
        OperatingPoint::default()
    }

    #[test]
    fn trap_free_symmetric_branches_cancel_common_mode() {
        let d = DeviceParams::trap_free();
        let cfg = HarvesterConfig {
            branch_mismatch: 0.0,
            ..HarvesterConfig::default()
        };
        let dist = Disturbance {
            common_mode_tone: Tone::new(5e-3, 100.0),
            supply_tone: Tone::new(0.1, 37.0),
            ..Disturbance::default()
        };
        let r = run_differential(&d, &d, &cfg, &dist, &op(), 0.2, 1e-4, 1).unwrap();
        let vy = r.v_y.as_ref().unwrap();
        assert!(r.v_x.iter().zip(vy).all(|(a, b)| a == b));
        assert!(r.decision.iter().all(|&b| b == r.decision[0]));
        assert!(r.v_x.iter().any(|&v| (v - 0.025).abs() > 1e-3));
    }

    #[test]
    fn identical_seeds_make_branches_identical() {
        let d = fast_device(5e-3);
        let cfg = HarvesterConfig {
            branch_mismatch: 0.0,
            ..HarvesterConfig::default()
        };
        let h = Harvest {
            branches: Branches::Differential(&d, &d),
            cfg: &cfg,
            dist: &Disturbance::clean(),
            op: op(),
            duration: 0.5,
            dt: 1e-4,
            seeds: HarvestSeeds {
                branch_x: 9,
                branch_y: 9,
                disturbance: 0,
            },
        };
        let r = h.record().unwrap();
        assert_eq!(&r.v_x, r.v_y.as_ref().unwrap());
        assert!(r.decision.iter().all(|&b| b == r.decision[0]));
    }

    #[test]
    fn symmetric_differential_is_unbiased() {
        let d = fast_device(2e-3);
        let cfg = HarvesterConfig::default();
        let r = run_differential(&d, &d, &cfg, &Disturbance::clean(), &op(), 20.0, 1e-4, 4).unwrap();
        assert!(r.len() >= 100_000);
        let p = r.decision.iter().map(|&b| b as f64).sum::<f64>() / r.len() as f64;
        assert!((p - 0.5).abs() < 0.02, "P[1] = {p}");
    }

    #[test]
    fn reference_above_swing_saturates_low() {
        let d = fast_device(5e-3);
        let cfg = HarvesterConfig {
            reference_voltage: Some(1.0),
            ..HarvesterConfig::single_ended()
        };
        let r = run_single_ended(&d, &cfg, &Disturbance::clean(), &op(), 0.5, 1e-4, 2).unwrap();
        assert!(r.decision.iter().all(|&b| b == 0));
    }

    #[test]
    fn midpoint_single_ended_tracks_occupancy() {
        // tau_h / (tau_h + tau_l) = 0.75
        let d = DeviceParams {
            traps: vec![TrapParams {
                tau_capture_ref: 6e-3,
                tau_emission_ref: 2e-3,
                ..TrapParams::default()
            }],
            noise_sigma: 0.0,
            ..DeviceParams::default()
        };
        let cfg = HarvesterConfig::single_ended();
        let r = run_single_ended(&d, &cfg, &Disturbance::clean(), &op(), 40.0, 1e-4, 8).unwrap();
        let p = r.decision.iter().map(|&b| b as f64).sum::<f64>() / r.len() as f64;
        assert!((p - 0.75).abs() < 0.02, "P[1] = {p}");
    }

    #[test]
    fn hysteresis_suppresses_small_excursions() {
        let mut c = Comparator {
            hysteresis: 0.5,
            state: None,
        };
        let inputs = [0.1, -0.4, 0.45, -0.49, 0.3, 0.6, -0.2, 0.4, -0.6, 0.49];
        let out: Vec<u8> = inputs.iter().map(|&u| c.decide(u)).collect();
        assert_eq!(out, vec![1, 1, 1, 1, 1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn coarse_step_and_mode_mismatch_are_config_errors() {
        let d = fast_device(5e-3);
        let cfg = HarvesterConfig::default();
        let err = run_differential(&d, &d, &cfg, &Disturbance::clean(), &op(), 1.0, 2e-4, 0);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = run_single_ended(&d, &cfg, &Disturbance::clean(), &op(), 1.0, 1e-4, 0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn streamed_bits_match_sampled_record() {
        let d = fast_device(3e-3);
        let cfg = HarvesterConfig::default();
        let dist = Disturbance {
            broadband_supply_noise_sigma: 1e-3,
            ..Disturbance::default()
        };
        let h = Harvest {
            branches: Branches::Differential(&d, &d),
            cfg: &cfg,
            dist: &dist,
            op: op(),
            duration: 2.0,
            dt: 1e-4,
            seeds: HarvestSeeds::from_master(77),
        };
        let sampler = SamplerConfig {
            sample_period: 2.1e-3,
            start_offset: 0.013,
        };
        let streamed = h.bits(&sampler).unwrap();
        let sampled = crate::bitgen::sample_bits(&h.record().unwrap(), &sampler).unwrap();
        assert_eq!(streamed, sampled);
        assert!(streamed.len() > 900);
    }

    #[test]
    fn zero_mismatch_differential_psrr_hits_ceiling() {
        let d = fast_device(5e-3);
        let cfg = HarvesterConfig {
            branch_mismatch: 0.0,
            ..HarvesterConfig::default()
        };
        let dist = Disturbance {
            supply_tone: Tone::new(0.05, 100.0),
            ..Disturbance::default()
        };
        let h = Harvest {
            branches: Branches::Differential(&d, &d),
            cfg: &cfg,
            dist: &dist,
            op: op(),
            duration: 0.5,
            dt: 1e-4,
            seeds: HarvestSeeds::from_master(1),
        };
        let r = psrr_estimate(&h, PSRR_CEILING).unwrap();
        assert!(r.clipped);
        assert_eq!(r.rejection, PSRR_CEILING);
    }

    #[test]
    fn single_ended_psrr_matches_loop_response() {
        let d = fast_device(5e-3);
        let cfg = HarvesterConfig::single_ended();
        let dist = Disturbance {
            supply_tone: Tone::new(0.05, 100.0),
            ..Disturbance::default()
        };
        let h = Harvest {
            branches: Branches::Single(&d),
            cfg: &cfg,
            dist: &dist,
            op: op(),
            duration: 0.5,
            dt: 1e-4,
            seeds: HarvestSeeds::from_master(1),
        };
        let r = psrr_estimate(&h, PSRR_CEILING).unwrap();
        let expected = 1.0 / (cfg.supply_coupling * loop_gain(100.0, cfg.loop_bandwidth, 1e-4));
        assert!((r.rejection / expected - 1.0).abs() < 1e-6, "{} vs {expected}", r.rejection);
        // Continuous-time first-order low-pass agrees to well under 1%.
        let analog = 1.0 / (0.1 / (1.0f64 + 0.01).sqrt());
        assert!((r.rejection / analog - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_mismatch_decisions_ignore_common_mode() {
        let d = fast_device(3e-3);
        let cfg = HarvesterConfig {
            branch_mismatch: 0.0,
            ..HarvesterConfig::default()
        };
        let noisy = Disturbance {
            supply_tone: Tone::new(0.2, 100.0),
            common_mode_tone: Tone::new(0.02, 60.0),
            broadband_supply_noise_sigma: 5e-3,
            ..Disturbance::default()
        };
        let a = run_differential(&d, &d, &cfg, &Disturbance::clean(), &op(), 2.0, 1e-4, 6).unwrap();
        let b = run_differential(&d, &d, &cfg, &noisy, &op(), 2.0, 1e-4, 6).unwrap();
        assert_eq!(a.decision, b.decision);
        assert_ne!(a.v_x, b.v_x);
    }

    fn single_ended_bias(amplitude: f64) -> f64 {
        let d = fast_device(2e-3);
        let cfg = HarvesterConfig {
            reference_voltage: Some(op().v_read - 2e-4),
            ..HarvesterConfig::single_ended()
        };
        let dist = Disturbance {
            common_mode_tone: Tone::new(amplitude, 100.0),
            ..Disturbance::default()
        };
        let r = run_single_ended(&d, &cfg, &dist, &op(), 20.0, 1e-4, 10).unwrap();
        let p = r.decision.iter().map(|&b| b as f64).sum::<f64>() / r.len() as f64;
        (p - 0.5).abs()
    }

    #[test]
    fn common_mode_tone_biases_single_ended_output() {
        assert!(single_ended_bias(0.0) < 0.02);
        assert!(single_ended_bias(1e-3) > 0.05);
    }

    #[test]
    fn single_ended_bias_grows_with_tone_amplitude_below_the_far_threshold() {
        // Reference error 0.2 mV, hysteresis 1 mV: the tone reaches only the
        // upper threshold for amplitudes up to 1.2 mV.
        let amps = [0.0, 0.7e-3, 0.85e-3, 1.0e-3, 1.1e-3, 1.19e-3];
        let bias: Vec<f64> = amps.iter().map(|&a| single_ended_bias(a)).collect();
        for w in bias.windows(2) {
            assert!(w[1] >= w[0] - 0.005, "{bias:?}");
        }
        assert!(bias[5] > bias[0] + 0.1);
    }

    #[test]
    fn differential_rejects_supply_an_order_better() {
        let d = fast_device(5e-3);
        let dist = Disturbance {
            supply_tone: Tone::new(0.05, 100.0),
            ..Disturbance::default()
        };
        let diff_cfg = HarvesterConfig::default();
        let se_cfg = HarvesterConfig::single_ended();
        let base = Harvest {
            branches: Branches::Differential(&d, &d),
            cfg: &diff_cfg,
            dist: &dist,
            op: op(),
            duration: 0.5,
            dt: 1e-4,
            seeds: HarvestSeeds::from_master(2),
        };
        let diff = psrr_estimate(&base, PSRR_CEILING).unwrap();
        let se = psrr_estimate(
            &Harvest {
                branches: Branches::Single(&d),
                cfg: &se_cfg,
                ..base
            },
            PSRR_CEILING,
        )
        .unwrap();
        assert!((diff.rejection / se.rejection - 100.0).abs() < 1.0);
        assert!(!diff.clipped);
    }

    #[test]
    fn psrr_rejects_unresolvable_or_impure_tones() {
        let d = fast_device(5e-3);
        let cfg = HarvesterConfig::single_ended();
        let bad = Disturbance {
            supply_tone: Tone::new(0.05, 1.0),
            ..Disturbance::default()
        };
        let h = Harvest {
            branches: Branches::Single(&d),
            cfg: &cfg,
            dist: &bad,
            op: op(),
            duration: 0.5,
            dt: 1e-4,
            seeds: HarvestSeeds::from_master(1),
        };
        assert!(matches!(psrr_estimate(&h, PSRR_CEILING), Err(Error::Config(_))));
        let impure = Disturbance {
            supply_tone: Tone::new(0.05, 100.0),
            common_mode_tone: Tone::new(0.01, 50.0),
            ..Disturbance::default()
        };
        let h = Harvest { dist: &impure, ..h };
        assert!(psrr_estimate(&h, PSRR_CEILING).is_err());
    }
}
