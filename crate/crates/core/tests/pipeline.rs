use rand::Rng;
use rtn_trng::analysis::{
    autocorrelation, dwell_times, estimate_psd, extract_levels, fit_spectrum, PsdConfig,
    DEFAULT_GUARD_SIGMAS,
};
use rtn_trng::bitgen::{lfsr_whiten, BitStream, LfsrConfig};
use rtn_trng::rtn::{
    corner_frequency, lorentzian_psd, rts_time_constant, simulate_device, DeviceParams,
    OperatingPoint, TrapParams,
};
use rtn_trng::{seed, Execution};

fn single_trap(tau_h: f64, tau_l: f64, noise_sigma: f64) -> DeviceParams {
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

#[test]
fn simulated_spectrum_matches_the_analytic_lorentzian() {
    let (tau_h, tau_l) = (0.1, 0.05);
    let tau = rts_time_constant(tau_h, tau_l).unwrap();
    let dev = single_trap(tau_h, tau_l, 0.0);
    let op = OperatingPoint::default();
    let (_, trace) = simulate_device(&dev, &op, 1e5 * tau, tau / 20.0, 3).unwrap();
    let spec = estimate_psd(&trace, &PsdConfig::default(), Execution::Parallel).unwrap();
    let (_, lf, af) = fit_spectrum(&spec).unwrap();

    let fc = corner_frequency(tau_h, tau_l).unwrap();
    assert!((lf.corner / fc - 1.0).abs() < 0.1, "corner {} vs {fc}", lf.corner);
    assert!((1.8..=2.2).contains(&af.alpha), "alpha {}", af.alpha);

    let delta_i = dev.traps[0].delta_i;
    for (&f, &p) in spec.freqs.iter().zip(&spec.psd) {
        if f < lf.band.0 || f > lf.band.1 {
            continue;
        }
        let db = 10.0 * (p / lorentzian_psd(f, delta_i, tau_h, tau_l).unwrap()).log10();
        assert!(db.abs() < 1.5, "{db:.2} dB at {f} Hz");
    }
}

#[test]
fn noisy_trace_yields_dwell_times_of_the_trap() {
    let (tau_h, tau_l) = (0.02, 0.01);
    let dev = single_trap(tau_h, tau_l, 10e-12);
    let op = OperatingPoint::default();
    let (_, trace) = simulate_device(&dev, &op, 200.0, 1e-4, 17).unwrap();
    let ex = extract_levels(&trace, DEFAULT_GUARD_SIGMAS).unwrap();
    let stats = dwell_times(&ex.levels, trace.dt).unwrap();
    assert!(stats.transitions > 10_000);
    assert!((stats.mean_tau_h.unwrap() / tau_h - 1.0).abs() < 0.05);
    assert!((stats.mean_tau_l.unwrap() / tau_l - 1.0).abs() < 0.05);
    assert!((ex.delta_i / dev.traps[0].delta_i - 1.0).abs() < 0.01);
}

#[test]
fn whitening_removes_serial_correlation() {
    // Sticky biased chain: repeat the previous bit with probability 0.7.
    let mut rng = seed::rng(9);
    let mut prev = false;
    let raw = BitStream::from_bools((0..1 << 17).map(|_| {
        prev = if rng.random_bool(0.7) { prev } else { rng.random_bool(0.55) };
        prev
    }));
    let white = lfsr_whiten(&raw, &LfsrConfig::default()).unwrap();
    let a = autocorrelation(&raw, 10, Execution::Parallel).unwrap();
    let b = autocorrelation(&white, 10, Execution::Parallel).unwrap();
    assert!(a.rho[0] > 0.5);
    assert!(b.rho[0].abs() < 3.0 * b.confidence_band, "{}", b.rho[0]);
}
