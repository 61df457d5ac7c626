//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use rtn_trng::bitgen::{keystream, lfsr_whiten, BitStream, Lfsr, LfsrConfig};
use rtn_trng::stat_tests::*;
use rtn_trng::{seed, Execution};
use rtn_trng_cli::experiments::{self as ex, Calibration, DEFAULT_MASTER_SEED};
use rtn_trng_cli::manifest;
use rtn_trng_cli::repro::{self, Target};

const MASTER: u64 = DEFAULT_MASTER_SEED;
const EXEC: Execution = Execution::Parallel;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, f: impl FnOnce() -> Result<(bool, String), String>) -> Verdict {
    match f() {
        Ok((pass, detail)) => Verdict { name, pass, detail },
        Err(e) => Verdict {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn max_rel_spread(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn lorentzian() -> Result<(bool, String), String> {
    let t = Instant::now();
    let cases = ex::lorentzian_sweep(MASTER, EXEC).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let worst_corner = cases.iter().map(|(c, _)| c.corner_error.abs()).fold(0.0, f64::max);
    let (amin, amax) = cases.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (c, _)| {
        (lo.min(c.alpha), hi.max(c.alpha))
    });
    let pass = cases.len() == 9
        && worst_corner <= 0.10
        && amin >= 1.8
        && amax <= 2.2
        && elapsed < Duration::from_secs(120);
    Ok((
        pass,
        format!(
            "9 pairs: max |corner error| {:.2}% (<= 10%), alpha in [{amin:.3}, {amax:.3}] (within [1.8, 2.2]), {:.1} s (< 120 s)",
            100.0 * worst_corner,
            elapsed.as_secs_f64()
        ),
    ))
}

fn dwell() -> Result<(bool, String), String> {
    let p = ex::dwell_recovery(MASTER).map_err(|e| e.to_string())?;
    let snr = p.delta_i_true / p.noise_sigma;
    let pass = p.transitions >= 10_000
        && (snr - 20.0).abs() < 1e-9
        && p.tau_h_error().abs() <= 0.05
        && p.tau_l_error().abs() <= 0.05;
    Ok((
        pass,
        format!(
            "{} transitions, dI/sigma {snr:.0}: tau_h {:+.2}%, tau_l {:+.2}% (<= 5%)",
            p.transitions,
            100.0 * p.tau_h_error(),
            100.0 * p.tau_l_error()
        ),
    ))
}

fn trends() -> Result<(bool, String), String> {
    let volt = ex::voltage_sweep(MASTER, EXEC).map_err(|e| e.to_string())?;
    let temp = ex::temperature_sweep(MASTER, EXEC).map_err(|e| e.to_string())?;
    let col = |pts: &[(ex::DwellPoint, _)], f: fn(&ex::DwellPoint) -> f64| -> Vec<f64> {
        pts.iter().map(|(p, _)| f(p)).collect()
    };
    let v_tau_h = col(&volt, |p| p.tau_h_est);
    let v_tau_l = col(&volt, |p| p.tau_l_est);
    let t_tau_h = col(&temp, |p| p.tau_h_est);
    let t_tau_l = col(&temp, |p| p.tau_l_est);
    let t_delta = col(&temp, |p| p.delta_i_est);
    let l_spread = max_rel_spread(&v_tau_l);
    let d_spread = max_rel_spread(&t_delta);
    let checks = [
        strictly_decreasing(&v_tau_h),
        l_spread <= 0.05,
        strictly_decreasing(&t_tau_h),
        strictly_decreasing(&t_tau_l),
        d_spread <= 0.03,
    ];
    Ok((
        checks.iter().all(|&c| c),
        format!(
            "25-125 mV: tau_h decreasing {}, tau_l spread {:.2}% (<= 5%); 300-360 K: tau_h decreasing {}, tau_l decreasing {}, dI spread {:.3}% (<= 3%)",
            checks[0],
            100.0 * l_spread,
            checks[2],
            checks[3],
            100.0 * d_spread
        ),
    ))
}

fn psrr() -> Result<(bool, String), String> {
    let c = ex::psrr_comparison(MASTER).map_err(|e| e.to_string())?;
    Ok((
        c.ratio >= 10.0 && c.zero_mismatch_identical,
        format!(
            "single-ended {:.1} dB, differential {:.1} dB, ratio {:.1}x (>= 10x); zero mismatch: {} decisions identical {}",
            c.single_ended.rejection_db,
            c.differential.rejection_db,
            c.ratio,
            c.zero_mismatch_bits,
            c.zero_mismatch_identical
        ),
    ))
}

fn entropy(s: &ex::Streams) -> Result<(bool, String), String> {
    let rows = ex::entropy_table(s).map_err(|e| e.to_string())?;
    let (se, raw, wh) = (rows[0].block8, rows[1].block8, rows[2].block8);
    let pass = (se - 0.93).abs() <= 0.02 && raw >= 0.97 && wh >= 0.99 && se < raw && raw < wh;
    Ok((
        pass,
        format!(
            "2^20 bits, block 8: single-ended {se:.4} (0.93 +/- 0.02) < raw {raw:.4} (>= 0.97) < whitened {wh:.4} (>= 0.99)"
        ),
    ))
}

fn autocorr(s: &ex::Streams) -> Result<(bool, String), String> {
    let table = ex::autocorr_table(s, EXEC).map_err(|e| e.to_string())?;
    let get = |name: &str| &table.iter().find(|(n, _)| n == name).expect("stream present").1;
    let se = get("single_ended");
    let wh = get("differential_whitened");
    Ok((
        wh.fraction_within_band() >= 0.95 && se.violations() >= 10,
        format!(
            "n = 2^17, band {:.5}: whitened {:.0}% of lags 1..100 inside (>= 95%); single-ended {} lags outside (>= 10)",
            wh.confidence_band,
            100.0 * wh.fraction_within_band(),
            se.violations()
        ),
    ))
}

fn battery(s: &ex::Streams) -> Result<(bool, String), String> {
    let cfg = BatteryConfig::default();
    let white = ex::whitened_battery(s, &cfg, EXEC);
    let zeros = run_battery(&BitStream::from_bits(vec![0; 1_000_000]).unwrap(), &cfg, EXEC);
    let mut rng = seed::rng(seed::derive(MASTER, 0xB1A5));
    let biased = BitStream::from_bools((0..1_000_000).map(|_| rng.random_bool(0.6)));
    let biased = run_battery(&biased, &cfg, EXEC);
    let frequency_family = ["frequency", "block_frequency", "cumulative_sums_forward", "cumulative_sums_backward", "runs"];
    let biased_fails = frequency_family
        .iter()
        .all(|n| biased.get(n).is_some_and(|r| !r.pass));
    let null = null_ensemble(200, 1 << 17, seed::derive(MASTER, 0x4E55), &cfg, EXEC)
        .map_err(|e| e.to_string())?;
    let worst = null
        .iter()
        .min_by(|a, b| a.p_uniformity.total_cmp(&b.p_uniformity))
        .expect("twelve results");
    let min_prop = null.iter().map(|c| c.proportion).fold(1.0, f64::min);
    let null_ok = null.len() == 12 && null.iter().all(|c| c.pass);
    let min_white = white
        .results
        .iter()
        .min_by(|a, b| a.p_value.total_cmp(&b.p_value))
        .map(|r| format!("{} {:.4}", r.name, r.p_value))
        .unwrap_or_default();
    let pass = white.all_passed() && white.results.len() == 12 && !zeros.all_passed() && biased_fails && null_ok;
    Ok((
        pass,
        format!(
            "whitened 10^6: {}/12 pass (lowest {min_white}); all-zeros: {} tests fail; Bernoulli(0.6) fails frequency family {}; 200-seed null: {}/12 uniform (lowest P_T {} {:.2e} >= 1e-4; min proportion {min_prop:.3}, floor {:.3})",
            white.results.iter().filter(|r| r.pass).count(),
            zeros.failed().len(),
            biased_fails,
            null.iter().filter(|c| c.pass).count(),
            worst.name,
            worst.p_uniformity,
            worst.proportion_floor
        ),
    ))
}

const E100: &str = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
const E128: &str = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";

fn known_answers() -> Result<(bool, String), String> {
    let e128 = BitStream::parse(E128).map_err(|e| e.to_string())?;
    let e100 = BitStream::parse(E100).map_err(|e| e.to_string())?;
    let p = |r: rtn_trng::Result<TestResult>| r.map(|t| t.p_value).map_err(|e| e.to_string());
    let (s128a, s128b) = serial(&e128, 3).map_err(|e| e.to_string())?;
    let (s100a, s100b) = serial(&e100, 2).map_err(|e| e.to_string())?;
    let table: Vec<(&str, f64, f64)> = vec![
        ("monobit", p(frequency_monobit(&e128))?, 0.21592493894014053),
        ("block_frequency", p(block_frequency(&e128, 16))?, 0.7305521200124169),
        ("runs", p(runs(&e128))?, 0.6207289533939493),
        ("longest_run", p(longest_run_of_ones(&e128))?, 0.1806093182397121),
        ("rank", p(binary_matrix_rank(&e128, 4, 4))?, 0.9395560328738866),
        ("fft", p(dft_spectral(&e128))?, 0.5164122683960398),
        ("approximate_entropy", p(approximate_entropy(&e128, 2))?, 0.3107422908061402),
        ("serial_1", s128a.p_value, 0.44994658814076116),
        ("serial_2", s128b.p_value, 0.36217599908082576),
        ("cusum_forward", p(cumulative_sums(&e128, Direction::Forward))?, 0.1541995160325706),
        ("cusum_backward", p(cumulative_sums(&e128, Direction::Backward))?, 0.3145542331096482),
        ("linear_complexity", p(linear_complexity(&e128, 16))?, 0.2983365680202945),
        ("linear_complexity_e100", p(linear_complexity(&e100, 10))?, 0.32084719886213414),
        ("rank_e100", p(binary_matrix_rank(&e100, 3, 3))?, 0.05699881510412895),
        ("serial_1_e100", s100a.p_value, 0.25666077695355605),
        ("serial_2_e100", s100b.p_value, 0.689156516779355),
        ("fft_e100", p(dft_spectral(&e100))?, 0.6463551955394902),
    ];
    let worst = table
        .iter()
        .map(|(n, got, want)| (*n, (got - want).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");

    let cfg = LfsrConfig::default();
    let mut lfsr = Lfsr::new(&cfg).map_err(|e| e.to_string())?;
    let start = lfsr.state();
    let mut period = 0u64;
    loop {
        lfsr.next_bit();
        period += 1;
        if lfsr.state() == start || period > 1 << 17 {
            break;
        }
    }
    let zeros = BitStream::from_bits(vec![0; 4096]).unwrap();
    let white = lfsr_whiten(&zeros, &cfg).map_err(|e| e.to_string())?;
    let ks_match = white == keystream(&cfg, 4096).map_err(|e| e.to_string())?;
    let complexity = berlekamp_massey(white.as_slice());
    Ok((
        worst.1 <= 1e-6 && period == 65_535 && complexity == 16 && ks_match,
        format!(
            "{} oracle p-values, max |error| {:.1e} ({}) (<= 1e-6); LFSR period {period}, Berlekamp-Massey {complexity}",
            table.len(),
            worst.1,
            worst.0
        ),
    ))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).expect("readable"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Result<(bool, String), String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    repro::run(Target::All, MASTER, a.path(), EXEC).map_err(|e| e.to_string())?;
    repro::run(Target::All, MASTER, b.path(), Execution::Sequential).map_err(|e| e.to_string())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<&String> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .collect();
    let unverified = manifest::verify(a.path()).map_err(|e| e.to_string())?;
    let bytes: usize = ta.values().map(Vec::len).sum();
    Ok((
        differing.is_empty() && unverified.is_empty() && ta.len() > 1,
        format!(
            "repro all twice (parallel, then sequential): {} files, {bytes} bytes, {} differing, {} failing manifest hash check",
            ta.len(),
            differing.len(),
            unverified.len()
        ),
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cal = Calibration::default();
    let streams = ex::calibrated_streams(&cal, ex::STREAM_BITS, MASTER, EXEC);
    let streams = &streams;
    let with_streams = |f: fn(&ex::Streams) -> Result<(bool, String), String>| {
        move || match streams {
            Ok(s) => f(s),
            Err(e) => Err(e.to_string()),
        }
    };
    let verdicts = [
        verdict("lorentzian_spectra", lorentzian),
        verdict("dwell_time_recovery", dwell),
        verdict("voltage_temperature_trends", trends),
        verdict("common_mode_rejection", psrr),
        verdict("entropy_triple", with_streams(entropy)),
        verdict("autocorrelation", with_streams(autocorr)),
        verdict("test_battery", with_streams(battery)),
        verdict("known_answers", known_answers),
        verdict("repro_determinism", determinism),
    ];
    println!("acceptance: master seed {MASTER}");
    for v in &verdicts {
        println!("{} {:<27} {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.1} s",
        verdicts.len(),
        started.elapsed().as_secs_f64()
    );
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
