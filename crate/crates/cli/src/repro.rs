//! `repro` targets: canned experiments written as CSV, JSON and PBM
//! artifacts under `<out>/<target>/`.

use std::cell::OnceCell;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use rtn_trng::analysis::{bitmap_write, PbmFormat, SpectrumEstimate};
use rtn_trng::bitgen::BitStream;
use rtn_trng::rtn::lorentzian_psd;
use rtn_trng::stat_tests::BatteryConfig;
use rtn_trng::Execution;

use crate::config::Stage;
use crate::error::Result;
use crate::experiments::{self as ex, Calibration, Streams};
use crate::manifest::ArtifactDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Lorentzian spectra and fits for nine dwell-time pairs.
    Fig1a,
    /// Dwell times, current step and spectra across voltage and temperature.
    Fig3,
    /// Time-lag plot of a noisy trace.
    Fig4,
    /// Autocorrelation of single-ended, raw differential and whitened streams.
    Fig5a,
    /// Bitmaps of the single-ended and whitened streams.
    Fig5bc,
    /// Battery report on 10^6 whitened bits.
    Table1,
    /// Block entropy of the three streams, plus the streams themselves.
    Entropy,
    /// Supply rejection of both readouts.
    Psrr,
    /// Dwell-time recovery from a noisy trace.
    Dwell,
    All,
}

impl Target {
    pub const EACH: [Target; 9] = [
        Target::Fig1a,
        Target::Fig3,
        Target::Fig4,
        Target::Fig5a,
        Target::Fig5bc,
        Target::Table1,
        Target::Entropy,
        Target::Psrr,
        Target::Dwell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Fig1a => "fig1a",
            Target::Fig3 => "fig3",
            Target::Fig4 => "fig4",
            Target::Fig5a => "fig5a",
            Target::Fig5bc => "fig5bc",
            Target::Table1 => "table1",
            Target::Entropy => "entropy",
            Target::Psrr => "psrr",
            Target::Dwell => "dwell",
            Target::All => "all",
        }
    }
}

struct Context {
    master: u64,
    exec: Execution,
    cal: Calibration,
    streams: OnceCell<Streams>,
}

impl Context {
    fn streams(&self) -> Result<&Streams> {
        if let Some(s) = self.streams.get() {
            return Ok(s);
        }
        let s = ex::calibrated_streams(&self.cal, ex::STREAM_BITS, self.master, self.exec)?;
        Ok(self.streams.get_or_init(|| s))
    }
}

fn spectrum_rows<'a>(
    spec: &'a SpectrumEstimate,
    model: impl Fn(f64) -> Option<f64> + 'a,
) -> impl Iterator<Item = String> + 'a {
    spec.freqs
        .iter()
        .zip(&spec.psd)
        .skip(1)
        .map(move |(&f, &p)| match model(f) {
            Some(m) => format!("{f:e},{p:e},{m:e}"),
            None => format!("{f:e},{p:e}"),
        })
}

fn fig1a(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let cases = ex::lorentzian_sweep(cx.master, cx.exec)?;
    for (case, spec) in &cases {
        let (h, l) = (case.tau_h, case.tau_l);
        let delta_i = 200e-12;
        let rows = spectrum_rows(spec, move |f| lorentzian_psd(f, delta_i, h, l).ok());
        dir.write_csv(
            &format!("fig1a/psd_tauh{h}_taul{l}.csv"),
            "freq_hz,psd_a2_per_hz,lorentzian_a2_per_hz",
            rows,
        )?;
    }
    let table: Vec<_> = cases.iter().map(|(c, _)| c).collect();
    dir.write_json("fig1a/fits.json", &table)?;
    Ok(())
}

fn sweep_csv(points: &[(ex::DwellPoint, SpectrumEstimate)]) -> impl Iterator<Item = String> + '_ {
    points.iter().map(|(p, _)| {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{}",
            p.v_read,
            p.temperature,
            p.tau_h_true,
            p.tau_h_est,
            p.tau_l_true,
            p.tau_l_est,
            p.delta_i_est,
            p.transitions
        )
    })
}

const SWEEP_HEADER: &str =
    "v_read,temperature,tau_h_true,tau_h_est,tau_l_true,tau_l_est,delta_i_est,transitions";

fn fig3(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let volt = ex::voltage_sweep(cx.master, cx.exec)?;
    let temp = ex::temperature_sweep(cx.master, cx.exec)?;
    dir.write_csv("fig3/voltage_sweep.csv", SWEEP_HEADER, sweep_csv(&volt))?;
    dir.write_csv("fig3/temperature_sweep.csv", SWEEP_HEADER, sweep_csv(&temp))?;
    for (p, spec) in &volt {
        let mv = (p.v_read * 1e3).round();
        dir.write_csv(
            &format!("fig3/psd_normalized_{mv}mV.csv"),
            "freq_hz,psd_per_hz",
            spectrum_rows(spec, |_| None),
        )?;
    }
    #[derive(Serialize)]
    struct Fig3<'a> {
        voltage_sweep: Vec<&'a ex::DwellPoint>,
        temperature_sweep: Vec<&'a ex::DwellPoint>,
    }
    dir.write_json(
        "fig3/sweeps.json",
        &Fig3 {
            voltage_sweep: volt.iter().map(|(p, _)| p).collect(),
            temperature_sweep: temp.iter().map(|(p, _)| p).collect(),
        },
    )?;
    Ok(())
}

fn fig4(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let t = ex::time_lag_plot(cx.master)?;
    let m = &t.trace;
    let rows = (0..m.bins).map(|r| {
        (0..m.bins)
            .map(|c| m.at(r, c).to_string())
            .collect::<Vec<_>>()
            .join(",")
    });
    dir.write_csv(
        "fig4/tlp_counts.csv",
        &format!("# rows x[k], columns x[k+1], range [{:e}, {:e}] A", m.range.0, m.range.1),
        rows,
    )?;
    dir.write_json("fig4/tlp.json", &t)?;
    Ok(())
}

fn fig5a(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let table = ex::autocorr_table(cx.streams()?, cx.exec)?;
    #[derive(Serialize)]
    struct Row<'a> {
        stream: &'a str,
        n: usize,
        confidence_band: f64,
        max_abs_rho: f64,
        violations: usize,
        fraction_within_band: f64,
    }
    let mut summary = Vec::new();
    for (name, a) in &table {
        let rows = a.lags.iter().zip(&a.rho).map(|(k, r)| format!("{k},{r:e}"));
        dir.write_csv(&format!("fig5a/autocorr_{name}.csv"), "lag,rho", rows)?;
        summary.push(Row {
            stream: name,
            n: a.n,
            confidence_band: a.confidence_band,
            max_abs_rho: a.max_abs(),
            violations: a.violations(),
            fraction_within_band: a.fraction_within_band(),
        });
    }
    dir.write_json("fig5a/summary.json", &summary)?;
    Ok(())
}

pub const BITMAP_SIDE: usize = 256;

fn pbm(bits: &BitStream) -> Vec<u8> {
    let mut buf = Vec::new();
    bitmap_write(bits, BITMAP_SIDE, BITMAP_SIDE, PbmFormat::Raw, &mut buf)
        .expect("streams are longer than one bitmap");
    buf
}

fn fig5bc(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let s = cx.streams()?;
    let (a, b, c) = (pbm(&s.single_ended), pbm(&s.differential), pbm(&s.whitened));
    dir.write("fig5bc/single_ended.pbm", &a)?;
    dir.write("fig5bc/differential_raw.pbm", &b)?;
    dir.write("fig5bc/differential_whitened.pbm", &c)?;
    Ok(())
}

fn table1(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let report = ex::whitened_battery(cx.streams()?, &BatteryConfig::default(), cx.exec);
    dir.write_json("table1/battery.json", &report)?;
    let rows = report
        .results
        .iter()
        .map(|r| format!("{},{:.6},{}", r.name, r.p_value, if r.pass { "pass" } else { "fail" }))
        .chain(report.errors.iter().map(|e| format!("{},,error", e.name)))
        .chain(report.unimplemented.iter().map(|n| format!("{n},,not implemented")));
    dir.write_csv("table1/table1.csv", "test,p_value,verdict", rows)?;
    Ok(())
}

fn entropy(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let table = ex::entropy_table(cx.streams()?)?;
    dir.write_json("entropy/entropy.json", &table)?;
    for (name, bits) in cx.streams()?.named() {
        dir.write_with(&format!("entropy/{name}.rtnb"), "entropy", |w| bits.write_binary(w))?;
    }
    dir.write_json("entropy/calibration.json", &cx.cal)?;
    Ok(())
}

fn psrr(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let cmp = ex::psrr_comparison(cx.master)?;
    dir.write_json("psrr/psrr.json", &cmp)?;
    Ok(())
}

fn dwell(cx: &Context, dir: &mut ArtifactDir) -> Result<()> {
    let p = ex::dwell_recovery(cx.master)?;
    dir.write_json("dwell/dwell.json", &p)?;
    Ok(())
}

/// Runs `target` (every target for [`Target::All`]) into `out`.
pub fn run(target: Target, master: u64, out: &Path, exec: Execution) -> Result<()> {
    let mut dir = ArtifactDir::create(out, format!("repro {}", target.name()))?;
    dir.seed(master);
    dir.stage_seed(Stage::Simulate.name(), Stage::Simulate.seed(master));
    dir.stage_seed(Stage::Harvest.name(), Stage::Harvest.seed(master));
    let cx = Context {
        master,
        exec,
        cal: Calibration::default(),
        streams: OnceCell::new(),
    };
    let targets: Vec<Target> = match target {
        Target::All => Target::EACH.to_vec(),
        t => vec![t],
    };
    for t in targets {
        log::info!("repro: {}", t.name());
        match t {
            Target::Fig1a => fig1a(&cx, &mut dir)?,
            Target::Fig3 => fig3(&cx, &mut dir)?,
            Target::Fig4 => fig4(&cx, &mut dir)?,
            Target::Fig5a => fig5a(&cx, &mut dir)?,
            Target::Fig5bc => fig5bc(&cx, &mut dir)?,
            Target::Table1 => table1(&cx, &mut dir)?,
            Target::Entropy => entropy(&cx, &mut dir)?,
            Target::Psrr => psrr(&cx, &mut dir)?,
            Target::Dwell => dwell(&cx, &mut dir)?,
            Target::All => unreachable!("expanded above"),
        }
    }
    dir.finish().map(|_| ())
}
