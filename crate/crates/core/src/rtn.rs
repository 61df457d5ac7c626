//! Generative model of random telegraph noise in a resistive memory cell
//! read at a fixed operating point.
//!
//! Each bistable trap alternates between an empty (LOW current) and a
//! captured (HIGH current) state with exponentially distributed dwell
//! times. Trajectories are generated exactly, event by event, and only then
//! sampled on a uniform grid, so the transition statistics do not depend on
//! the sampling step.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617_333_262e-5;

/// Read bias and device temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingPoint {
    /// Read voltage in volts.
    pub v_read: f64,
    /// Temperature in kelvin.
    pub temperature: f64,
}

impl OperatingPoint {
    pub fn new(v_read: f64, temperature: f64) -> Result<Self> {
        let op = Self {
            v_read,
            temperature,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_read.is_finite() && self.v_read > 0.0) {
            return Err(Error::domain(format!(
                "read voltage must be positive, got {}",
                self.v_read
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::domain(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self {
            v_read: 0.025,
            temperature: 300.0,
        }
    }
}

/// One bistable defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapParams {
    /// Mean HIGH (captured) dwell time at the reference point, seconds.
    pub tau_capture_ref: f64,
    /// Mean LOW (empty) dwell time at the reference point, seconds.
    pub tau_emission_ref: f64,
    /// Current step between the two levels, amperes.
    pub delta_i: f64,
    /// Voltage e-folding scale of the capture time, volts.
    pub v_sensitivity: f64,
    /// Arrhenius activation energy shared by both dwell times, eV.
    pub activation_energy: f64,
    pub ref_point: OperatingPoint,
}

impl Default for TrapParams {
    fn default() -> Self {
        Self {
            tau_capture_ref: 0.5,
            tau_emission_ref: 0.2,
            delta_i: 200e-12,
            v_sensitivity: 0.05,
            activation_energy: 0.3,
            ref_point: OperatingPoint::default(),
        }
    }
}

impl TrapParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_capture_ref", self.tau_capture_ref),
            ("tau_emission_ref", self.tau_emission_ref),
            ("delta_i", self.delta_i),
            ("v_sensitivity", self.v_sensitivity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.activation_energy.is_finite() && self.activation_energy >= 0.0) {
            return Err(Error::domain(format!(
                "activation_energy must be non-negative, got {}",
                self.activation_energy
            )));
        }
        self.ref_point.validate()
    }
}

/// A read-regime ReRAM cell: HRS baseline plus zero or more traps whose
/// currents superpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub traps: Vec<TrapParams>,
    /// Baseline conductance scale, siemens.
    pub g0: f64,
    /// sinh nonlinearity scale, volts.
    pub v_c: f64,
    /// Linear temperature coefficient of the baseline current, 1/K.
    pub temp_coeff: f64,
    /// Temperature at which `temp_coeff` is referenced, kelvin.
    pub reference_temperature: f64,
    /// Largest |V| accepted as a read; beyond it the cell would switch.
    pub read_window: f64,
    /// Standard deviation of additive white measurement noise, amperes.
    pub noise_sigma: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        let trap = TrapParams::default();
        Self {
            traps: vec![trap],
            g0: 10e-9,
            v_c: 0.06,
            temp_coeff: 2e-3,
            reference_temperature: 300.0,
            read_window: 0.15,
            noise_sigma: trap.delta_i / 20.0,
        }
    }
}

impl DeviceParams {
    /// Device without traps: a pure baseline conductance.
    pub fn trap_free() -> Self {
        Self {
            traps: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("g0", self.g0),
            ("v_c", self.v_c),
            ("reference_temperature", self.reference_temperature),
            ("read_window", self.read_window),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.temp_coeff.is_finite() {
            return Err(Error::domain("temp_coeff must be finite"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::domain("noise_sigma must be non-negative"));
        }
        self.traps.iter().try_for_each(TrapParams::validate)
    }

    fn thermal_factor(&self, temperature: f64) -> f64 {
        1.0 + self.temp_coeff * (temperature - self.reference_temperature)
    }

    fn check_read_window(&self, v: f64) -> Result<()> {
        if !v.is_finite() || v.abs() > self.read_window {
            return Err(Error::domain(format!(
                "|v| = {} V exceeds the read window of {} V",
                v.abs(),
                self.read_window
            )));
        }
        Ok(())
    }

    /// Small-signal conductance dI/dV of the baseline at `v`.
    pub fn small_signal_conductance(&self, v: f64, temperature: f64) -> Result<f64> {
        self.check_read_window(v)?;
        Ok(self.g0 * (v / self.v_c).cosh() * self.thermal_factor(temperature))
    }
}

/// Two trap states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn flipped(self) -> Self {
        match self {
            Level::Low => Level::High,
            Level::High => Level::Low,
        }
    }

    pub fn is_high(self) -> bool {
        self == Level::High
    }
}

/// Arrhenius factor `exp((Ea/kB)(1/T - 1/T_ref))`.
fn arrhenius(activation_energy: f64, temperature: f64, reference: f64) -> f64 {
    ((activation_energy / BOLTZMANN_EV) * (1.0 / temperature - 1.0 / reference)).exp()
}

/// Mean HIGH and LOW dwell times of `trap` at `op`.
///
/// The capture time falls exponentially with read voltage; both times share
/// one Arrhenius factor.
pub fn effective_dwell_times(trap: &TrapParams, op: &OperatingPoint) -> Result<(f64, f64)> {
    trap.validate()?;
    op.validate()?;
    let thermal = arrhenius(
        trap.activation_energy,
        op.temperature,
        trap.ref_point.temperature,
    );
    let voltage = (-(op.v_read - trap.ref_point.v_read) / trap.v_sensitivity).exp();
    let tau_h = trap.tau_capture_ref * voltage * thermal;
    let tau_l = trap.tau_emission_ref * thermal;
    for (name, tau) in [("tau_h", tau_h), ("tau_l", tau_l)] {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::domain(format!(
                "{name} evaluates to {tau} at V = {} V, T = {} K",
                op.v_read, op.temperature
            )));
        }
    }
    Ok((tau_h, tau_l))
}

fn check_taus(tau_h: f64, tau_l: f64) -> Result<()> {
    if !(tau_h.is_finite() && tau_h > 0.0 && tau_l.is_finite() && tau_l > 0.0) {
        return Err(Error::domain(format!(
            "dwell times must be positive, got tau_h = {tau_h}, tau_l = {tau_l}"
        )));
    }
    Ok(())
}

/// Composite RTS time constant `1 / (1/tau_l + 1/tau_h)`.
pub fn rts_time_constant(tau_h: f64, tau_l: f64) -> Result<f64> {
    check_taus(tau_h, tau_l)?;
    Ok(1.0 / (1.0 / tau_l + 1.0 / tau_h))
}

/// Lorentzian corner frequency in hertz.
pub fn corner_frequency(tau_h: f64, tau_l: f64) -> Result<f64> {
    check_taus(tau_h, tau_l)?;
    Ok((1.0 / tau_l + 1.0 / tau_h) / (2.0 * PI))
}

/// One-sided Lorentzian PSD of a two-level RTS, A²/Hz.
pub fn lorentzian_psd(f: f64, delta_i: f64, tau_h: f64, tau_l: f64) -> Result<f64> {
    check_taus(tau_h, tau_l)?;
    if !(delta_i.is_finite() && delta_i > 0.0) {
        return Err(Error::domain(format!("delta_i must be positive, got {delta_i}")));
    }
    if !(f.is_finite() && f >= 0.0) {
        return Err(Error::domain(format!("frequency must be non-negative, got {f}")));
    }
    let tau = rts_time_constant(tau_h, tau_l)?;
    let x = 2.0 * PI * f * tau;
    Ok(4.0 * delta_i * delta_i / (tau_h + tau_l) * tau * tau / (1.0 + x * x))
}

/// HRS read current without trap contributions:
/// `g0 * v_c * sinh(v / v_c) * (1 + gamma (T - T_ref))`.
pub fn baseline_current(v: f64, device: &DeviceParams, temperature: f64) -> Result<f64> {
    device.check_read_window(v)?;
    Ok(device.g0 * device.v_c * (v / device.v_c).sinh() * device.thermal_factor(temperature))
}

/// Exact event record of one trap: the level flips at every transition time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapTrajectory {
    pub initial_level: Level,
    /// Strictly increasing transition times in seconds.
    pub transition_times: Vec<f64>,
    /// Simulated horizon in seconds.
    pub duration: f64,
}

impl TrapTrajectory {
    pub fn level_at(&self, t: f64) -> Level {
        let flips = self.transition_times.partition_point(|&x| x <= t);
        if flips % 2 == 0 {
            self.initial_level
        } else {
            self.initial_level.flipped()
        }
    }

    /// Cursor for monotone (non-decreasing) time queries.
    pub fn cursor(&self) -> LevelCursor<'_> {
        LevelCursor {
            times: &self.transition_times,
            next: 0,
            level: self.initial_level,
        }
    }

    /// Dwell durations per level, excluding the censored first and last.
    pub fn complete_dwells(&self) -> (Vec<f64>, Vec<f64>) {
        let mut high = Vec::new();
        let mut low = Vec::new();
        // Level during (t[i], t[i+1]) is initial flipped (i + 1) times.
        for (i, w) in self.transition_times.windows(2).enumerate() {
            let level = if i % 2 == 0 {
                self.initial_level.flipped()
            } else {
                self.initial_level
            };
            match level {
                Level::High => high.push(w[1] - w[0]),
                Level::Low => low.push(w[1] - w[0]),
            }
        }
        (high, low)
    }

    /// Total time spent HIGH within `[0, duration)`.
    pub fn time_high(&self) -> f64 {
        let mut level = self.initial_level;
        let mut last = 0.0;
        let mut total = 0.0;
        for &t in &self.transition_times {
            if level.is_high() {
                total += t - last;
            }
            last = t;
            level = level.flipped();
        }
        if level.is_high() {
            total += self.duration - last;
        }
        total
    }
}

/// Sequential level lookup over a trajectory.
#[derive(Debug, Clone)]
pub struct LevelCursor<'a> {
    times: &'a [f64],
    next: usize,
    level: Level,
}

impl LevelCursor<'_> {
    /// Level at `t`; `t` must not decrease between calls.
    pub fn advance_to(&mut self, t: f64) -> Level {
        while self.next < self.times.len() && self.times[self.next] <= t {
            self.level = self.level.flipped();
            self.next += 1;
        }
        self.level
    }
}

/// Streaming two-state alternating renewal process with exponential dwells,
/// started from its stationary distribution.
///
/// Time is whatever clock the caller advances it with; a time-warped clock
/// models rates that drift with temperature.
#[derive(Debug, Clone)]
pub(crate) struct TrapProcess<R> {
    level: Level,
    next_flip: f64,
    high_dwell: Exp<f64>,
    low_dwell: Exp<f64>,
    rng: R,
}

impl<R: Rng> TrapProcess<R> {
    pub(crate) fn new(tau_h: f64, tau_l: f64, mut rng: R) -> Result<Self> {
        check_taus(tau_h, tau_l)?;
        let high_dwell = Exp::new(1.0 / tau_h).map_err(|e| Error::domain(e.to_string()))?;
        let low_dwell = Exp::new(1.0 / tau_l).map_err(|e| Error::domain(e.to_string()))?;
        let p_high = tau_h / (tau_h + tau_l);
        let level = if rng.random::<f64>() < p_high {
            Level::High
        } else {
            Level::Low
        };
        // Exponential dwells are memoryless, so the residual first dwell of a
        // stationary start has the same law as a full dwell.
        let first = match level {
            Level::High => high_dwell.sample(&mut rng),
            Level::Low => low_dwell.sample(&mut rng),
        };
        Ok(Self {
            level,
            next_flip: first,
            high_dwell,
            low_dwell,
            rng,
        })
    }

    pub(crate) fn level(&self) -> Level {
        self.level
    }

    fn flip(&mut self) -> f64 {
        let at = self.next_flip;
        self.level = self.level.flipped();
        let dwell = match self.level {
            Level::High => self.high_dwell.sample(&mut self.rng),
            Level::Low => self.low_dwell.sample(&mut self.rng),
        };
        self.next_flip = at + dwell;
        at
    }

    /// Level at clock value `u`; `u` must not decrease between calls.
    pub(crate) fn advance_to(&mut self, u: f64) -> Level {
        while self.next_flip <= u {
            self.flip();
        }
        self.level
    }
}

pub(crate) fn simulate_two_state<R: Rng>(
    tau_h: f64,
    tau_l: f64,
    duration: f64,
    rng: R,
) -> Result<TrapTrajectory> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::domain(format!("duration must be positive, got {duration}")));
    }
    let mut process = TrapProcess::new(tau_h, tau_l, rng)?;
    let initial_level = process.level();
    let expected = (2.0 * duration / (tau_h + tau_l)).min(1e8) as usize;
    let mut transition_times: Vec<f64> = Vec::with_capacity(expected + 16);
    while process.next_flip < duration {
        let at = process.flip();
        // Two flips at the same instant cancel out.
        if transition_times.last() == Some(&at) {
            transition_times.pop();
        } else {
            transition_times.push(at);
        }
    }
    Ok(TrapTrajectory {
        initial_level,
        transition_times,
        duration,
    })
}

/// Simulates one trap at `op` for `duration` seconds. Deterministic in `seed`.
pub fn simulate_trap(
    trap: &TrapParams,
    op: &OperatingPoint,
    duration: f64,
    seed: u64,
) -> Result<TrapTrajectory> {
    let (tau_h, tau_l) = effective_dwell_times(trap, op)?;
    simulate_two_state(tau_h, tau_l, duration, seed::rng(seed))
}

/// Provenance attached to a trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub op: Option<OperatingPoint>,
    pub seed: Option<u64>,
}

/// Uniformly sampled time series (current in amperes, or node voltage).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self> {
        let trace = Self {
            dt,
            samples,
            meta: TraceMeta::default(),
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::data(format!("dt must be positive, got {}", self.dt)));
        }
        if self.samples.is_empty() {
            return Err(Error::data("trace has no samples"));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::data(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&TRACE_VERSION.to_le_bytes())?;
        w.write_all(&0u16.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for x in &self.samples {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; TRACE_HEADER_LEN];
        read_exact_at(&mut r, &mut header, 0)?;
        if &header[0..4] != TRACE_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"RTNT\""));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != TRACE_VERSION {
            return Err(Error::format(4, format!("unsupported trace version {version}")));
        }
        let dt = f64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let count = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
        let mut samples = Vec::with_capacity(count.min(1 << 24) as usize);
        let mut buf = [0u8; 8];
        for i in 0..count {
            let offset = TRACE_HEADER_LEN as u64 + 8 * i;
            read_exact_at(&mut r, &mut buf, offset)?;
            samples.push(f64::from_le_bytes(buf));
        }
        let end = TRACE_HEADER_LEN as u64 + 8 * count;
        if r.read(&mut buf)? != 0 {
            return Err(Error::format(end, "trailing bytes after declared sample count"));
        }
        let trace = Trace {
            dt,
            samples,
            meta: TraceMeta::default(),
        };
        trace
            .validate()
            .map_err(|e| Error::format(8, e.to_string()))?;
        Ok(trace)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(BufReader::new(File::open(path)?))
    }

    /// `time,current` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,current")?;
        for (k, x) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", k as f64 * self.dt, x)?;
        }
        Ok(())
    }
}

pub const TRACE_MAGIC: &[u8; 4] = b"RTNT";
const TRACE_VERSION: u16 = 1;
/// magic(4) + version(2) + reserved(2) + dt(8) + count(8)
pub const TRACE_HEADER_LEN: usize = 24;

pub(crate) fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::format(
                    offset + filled as u64,
                    "unexpected end of file",
                ))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Samples the summed trap currents on top of the baseline at `k * dt`.
///
/// `noise_seed` drives the optional white measurement noise
/// (`device.noise_sigma`).
pub fn render_trace(
    device: &DeviceParams,
    trajectories: &[TrapTrajectory],
    op: &OperatingPoint,
    dt: f64,
    duration: f64,
    noise_seed: u64,
) -> Result<Trace> {
    device.validate()?;
    op.validate()?;
    if trajectories.len() != device.traps.len() {
        return Err(Error::config(format!(
            "{} trajectories supplied for {} traps",
            trajectories.len(),
            device.traps.len()
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && duration.is_finite() && duration >= dt) {
        return Err(Error::domain(format!(
            "need 0 < dt <= duration, got dt = {dt}, duration = {duration}"
        )));
    }
    for trap in &device.traps {
        let (tau_h, tau_l) = effective_dwell_times(trap, op)?;
        if dt > tau_h.min(tau_l) / 10.0 {
            warn!(
                "dt = {dt:e} s is coarse for dwell times ({tau_h:e}, {tau_l:e}) s; short dwells will be missed"
            );
        }
    }
    let base = baseline_current(op.v_read, device, op.temperature)?;
    let n = ((duration / dt) + 1e-9).floor() as usize;
    let mut samples = vec![base; n.max(1)];
    for (trap, traj) in device.traps.iter().zip(trajectories) {
        let mut cursor = traj.cursor();
        for (k, s) in samples.iter_mut().enumerate() {
            if cursor.advance_to(k as f64 * dt).is_high() {
                *s += trap.delta_i;
            }
        }
    }
    if device.noise_sigma > 0.0 {
        let noise =
            Normal::new(0.0, device.noise_sigma).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = seed::rng(noise_seed);
        for s in samples.iter_mut() {
            *s += noise.sample(&mut rng);
        }
    }
    Ok(Trace {
        dt,
        samples,
        meta: TraceMeta {
            op: Some(*op),
            seed: Some(noise_seed),
        },
    })
}

/// Sub-stream used for the measurement noise of a device simulation.
const NOISE_STREAM: u64 = 0xFFFF;

/// Simulates every trap of `device` and renders the trace. Trap `i` uses
/// sub-seed `derive(seed, i)`; the measurement noise uses
/// `derive(seed, 0xFFFF)`.
pub fn simulate_device(
    device: &DeviceParams,
    op: &OperatingPoint,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<(Vec<TrapTrajectory>, Trace)> {
    let trajectories = device
        .traps
        .iter()
        .enumerate()
        .map(|(i, trap)| simulate_trap(trap, op, duration, seed::derive(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut trace = render_trace(
        device,
        &trajectories,
        op,
        dt,
        duration,
        seed::derive(seed, NOISE_STREAM),
    )?;
    trace.meta.seed = Some(seed);
    Ok((trajectories, trace))
}
