use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use overbarrier::{
    born_closed_form, born_lloc, crossover_line, estimate_lloc, find_turning_points, log_grid,
    reflectance_born, reflectance_closed_form, reflectance_exact, reflectance_wkb, sweep,
    turning_point_histogram, wkb_lloc_estimate, Backend, BornOptions, BornStatus, Correlation,
    EnsembleConfig, Family, FourierSeriesDocument, HistogramOptions, PotentialSpec, SolveOptions,
    Status, SweepOptions, Tabulated, Thresholds, WkbOptions,
};

use crate::{
    BackendArg, Command, FamilyArg, LocalizeArgs, LocalizeMethod, MethodArg, PotentialArgs,
    ReflectArgs, SweepArgs, SweepFamily, TurningArgs, ValidateArgs, ValidateFamily,
};

/// A number was demanded but could not be certified.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn run(command: &Command, verbose: u8) -> Result<()> {
    let start = Instant::now();
    let r = match command {
        Command::Reflect(a) => reflect(a),
        Command::TurningPoints(a) => turning_points(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Localize(a) => localize(a),
        Command::Validate(a) => validate(a),
    };
    if verbose > 0 {
        eprintln!("done in {:.3} s", start.elapsed().as_secs_f64());
    }
    r
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn required(v: Option<f64>, name: &str, family: FamilyArg) -> Result<f64> {
    v.ok_or_else(|| overbarrier::Error::Configuration(format!("--{name} is required for {family:?}")).into())
}

pub fn build_spec(p: &PotentialArgs) -> Result<PotentialSpec> {
    let spec = match p.family {
        FamilyArg::Fermi | FamilyArg::Sech2 | FamilyArg::Gauss => {
            let delta = required(p.delta, "delta", p.family)?;
            let eps = required(p.eps, "eps", p.family)?;
            match p.family {
                FamilyArg::Fermi => PotentialSpec::fermi(delta, eps)?,
                FamilyArg::Sech2 => PotentialSpec::sech2(delta, eps)?,
                _ => PotentialSpec::gaussian(delta, eps)?,
            }
        }
        FamilyArg::Tabulated => {
            let path = p
                .table
                .as_ref()
                .ok_or_else(|| overbarrier::Error::Configuration("--table is required for the tabulated family".into()))?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table = Tabulated::parse(&text)?;
            let delta = required(p.delta, "delta", p.family)?;
            let eps = required(p.eps, "eps", p.family)?;
            PotentialSpec::new(Family::Tabulated(table), delta, eps)?
        }
        FamilyArg::Fourier => {
            let path = p
                .series
                .as_ref()
                .ok_or_else(|| overbarrier::Error::Configuration("--series is required for the fourier family".into()))?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let doc: FourierSeriesDocument = serde_json::from_str(&text).map_err(overbarrier::Error::from)?;
            let mut spec = doc.into_spec()?;
            if let Some(d) = p.delta {
                spec = spec.with_delta(d)?;
            }
            if p.eps.is_some_and(|e| e != spec.eps) {
                return Err(overbarrier::Error::Configuration(
                    "--eps must match the series document".into(),
                )
                .into());
            }
            spec
        }
    };
    Ok(if p.mirrored { spec.mirrored() } else { spec })
}

fn header(spec: &PotentialSpec, method: &str, status: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("method".into(), json!(method));
    m.insert("status".into(), json!(status));
    m.insert("family".into(), json!(spec.family.name()));
    m.insert("delta".into(), json!(spec.delta));
    m.insert("eps".into(), json!(spec.eps));
    m.insert("mirrored".into(), json!(spec.mirrored));
    m
}

fn merge<T: Serialize>(m: &mut serde_json::Map<String, Value>, v: &T) -> Result<()> {
    if let Value::Object(o) = serde_json::to_value(v)? {
        for (k, x) in o {
            if !m.contains_key(&k) {
                m.insert(k, x);
            }
        }
    }
    Ok(())
}

fn shape_window(spec: &PotentialSpec) -> (f64, f64) {
    let e = spec.eps;
    let (lo, hi) = match &spec.family {
        Family::FermiStep => (-8.0 / e, 8.0 / e + (1.0 / (1.0 - spec.delta)).ln() / e),
        Family::SechSquared => (-8.0 / e, 8.0 / e),
        Family::GaussianBump => (-4.0 / e, 4.0 / e),
        Family::FourierSeries(s) => (0.0, s.length()),
        Family::Tabulated(t) => t.span(),
    };
    if spec.mirrored {
        (-hi, -lo)
    } else {
        (lo, hi)
    }
}

fn dump_shape(spec: &PotentialSpec, path: &Path) -> Result<()> {
    let (lo, hi) = shape_window(spec);
    let n = 1001;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["z", "eps_z", "U", "k2"])?;
    for j in 0..n {
        let z = lo + (hi - lo) * j as f64 / (n - 1) as f64;
        let u = spec.shape(Complex64::new(z, 0.0))?.re;
        w.write_record([
            num(z),
            num(spec.eps * z),
            num(u),
            num(1.0 - spec.delta * u),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn reflect(a: &ReflectArgs) -> Result<()> {
    let spec = build_spec(&a.potential)?;
    if let Some(p) = &a.dump_shape {
        dump_shape(&spec, p)?;
    }
    let record = match a.method {
        MethodArg::Exact => {
            let mut opts = SolveOptions::with_backend(match a.backend {
                BackendArg::Tm => Backend::TransferMatrix,
                BackendArg::Ie => Backend::InvariantEmbedding,
                BackendArg::Layered => Backend::Layered,
            });
            opts.rtol = a.rtol;
            opts.layer_width = a.layer_width;
            let r = reflectance_exact(&spec, &opts)?;
            let status = match r.status {
                Status::Ok => "ok",
                Status::BelowNumericFloor => "below_numeric_floor",
            };
            let mut m = header(&spec, "exact", status);
            merge(&mut m, &r)?;
            emit(&Value::Object(m), a.out.as_deref())?;
            if r.status == Status::BelowNumericFloor {
                return Err(NumericFailure(format!(
                    "R = {:e} is below the certified floor {:e}",
                    r.reflectance, r.r_floor
                ))
                .into());
            }
            return Ok(());
        }
        MethodArg::ClosedForm => {
            let r = reflectance_closed_form(&spec)?;
            let mut m = header(&spec, "closed-form", "ok");
            merge(&mut m, &r)?;
            m
        }
        MethodArg::Born => {
            let r = reflectance_born(&spec, &BornOptions::default())?;
            let status = match r.status {
                BornStatus::Ok => "ok",
                BornStatus::FirstOrderUnderflow => "first_order_underflow",
            };
            let mut m = header(&spec, "born", status);
            m.insert("quadrature".into(), serde_json::to_value(r.method)?);
            merge(&mut m, &r)?;
            m.remove("method");
            m.insert("method".into(), json!("born"));
            m
        }
        MethodArg::Wkb => {
            let r = reflectance_wkb(&spec, &WkbOptions::default())?;
            let status = if r.warning.is_some() { "warning" } else { "ok" };
            let mut m = header(&spec, "wkb", status);
            merge(&mut m, &r)?;
            m
        }
    };
    emit(&Value::Object(record), a.out.as_deref())
}

fn turning_points(a: &TurningArgs) -> Result<()> {
    let spec = build_spec(&a.potential)?;
    let mut opts = WkbOptions::default();
    if let Some(h) = a.im_max {
        opts.strip = Some((0.0, h));
    }
    let set = find_turning_points(&spec, &opts)?;
    let status = if set.points.is_empty() { "empty" } else { "ok" };
    let mut m = header(&spec, "wkb", status);
    m.insert("points".into(), serde_json::to_value(&set.points)?);
    m.insert("diagnostic".into(), json!(set.diagnostic));
    emit(&Value::Object(m), a.out.as_deref())
}

/// Shortest round-trip text; exponent form away from moderate magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let family = match a.family {
        SweepFamily::Fermi => Family::FermiStep,
        SweepFamily::Sech2 => Family::SechSquared,
        SweepFamily::Gauss => Family::GaussianBump,
    };
    for (name, lo, hi, n) in [
        ("delta", a.delta_min, a.delta_max, a.n_delta),
        ("eps", a.eps_min, a.eps_max, a.n_eps),
    ] {
        if !(lo > 0.0 && hi >= lo && n >= 1) {
            return Err(overbarrier::Error::InvalidParameter(format!(
                "{name} grid needs 0 < min <= max and at least one point"
            ))
            .into());
        }
    }
    let deltas = log_grid(a.delta_min, a.delta_max, a.n_delta);
    let epss = log_grid(a.eps_min, a.eps_max, a.n_eps);
    let opts = SweepOptions {
        thresholds: Thresholds {
            s_lo: a.s_lo,
            s_hi: a.s_hi,
        },
        numeric_exact: !a.no_exact,
        ..Default::default()
    };
    let cells = sweep(&family, &deltas, &epss, &opts);
    if let Some(p) = &a.out {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
        w.write_record(["delta", "eps", "R_exact", "R_born", "R_wkb", "S", "regime"])?;
        for c in &cells {
            w.write_record([
                num(c.delta),
                num(c.eps),
                opt_field(c.r_exact),
                num(c.r_born),
                num(c.r_wkb),
                num(c.smoothness),
                c.regime.label().to_string(),
            ])?;
        }
        w.flush()?;
    }
    let line = crossover_line(&family, &cells, &opts)?;
    if let Some(p) = &a.line {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
        w.write_record(["ln_inv_eps", "ln_inv_delta"])?;
        for pt in &line.points {
            w.write_record([num(pt.ln_inv_eps), num(pt.ln_inv_delta)])?;
        }
        w.flush()?;
    }
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    let mut counts = serde_json::Map::new();
    for c in &cells {
        let e = counts.entry(c.regime.label()).or_insert(json!(0));
        *e = json!(e.as_u64().unwrap_or(0) + 1);
    }
    let summary = json!({
        "method": "sweep",
        "status": if failed == 0 { "ok" } else { "partial" },
        "family": family.name(),
        "cells": cells.len(),
        "failed_cells": failed,
        "regimes": counts,
        "line": line,
    });
    emit(&summary, a.summary.as_deref())
}

fn localize(a: &LocalizeArgs) -> Result<()> {
    let correlation = Correlation::gaussian(a.eps);
    let mut config = EnsembleConfig::new(correlation, a.delta, a.l0, a.n, a.seed);
    config.taper_width = a.taper;
    config.solve.layer_width = a.layer_width;
    let value = match a.method {
        LocalizeMethod::Born => {
            config.validate()?;
            json!({ "method": "born", "status": "ok", "config": config, "lloc_inv": born_lloc(&config) })
        }
        LocalizeMethod::Ensemble => {
            let est = estimate_lloc(&config)?;
            if let Some(p) = &a.samples {
                let mut w = csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
                w.write_record(["index", "lnT"])?;
                for (j, v) in est.ln_t.iter().enumerate() {
                    w.write_record([j.to_string(), opt_field(*v)])?;
                }
                w.flush()?;
            }
            let status = if est.failed == 0 { "ok" } else { "partial" };
            json!({ "method": "ensemble", "status": status, "config": config, "estimate": est })
        }
        LocalizeMethod::WkbHist => {
            let opts = HistogramOptions {
                bins: a.bins,
                ..Default::default()
            };
            let hist = turning_point_histogram(&config, &opts)?;
            let est = wkb_lloc_estimate(&hist)?;
            json!({
                "method": "wkb-hist",
                "status": "ok",
                "config": config,
                "histogram": hist,
                "estimate": est,
            })
        }
    };
    emit(&value, a.out.as_deref())
}

#[derive(Serialize)]
struct Check {
    family: &'static str,
    check: &'static str,
    delta: f64,
    eps: f64,
    value: f64,
    reference: f64,
    error: f64,
    tolerance: f64,
    pass: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn exact_grid(family: &'static str, spec_of: fn(f64, f64) -> overbarrier::Result<PotentialSpec>, extra: &[(f64, f64)], out: &mut Vec<Check>) -> Result<()> {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    for &d in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        for &e in &[0.3, 0.5, 1.0, 2.0] {
            cells.push((d, e));
        }
    }
    cells.extend_from_slice(extra);
    for (d, e) in cells {
        let spec = spec_of(d, e)?;
        let cf = reflectance_closed_form(&spec)?;
        let ex = reflectance_exact(&spec, &SolveOptions::default())?;
        if ex.status != Status::Ok {
            continue;
        }
        let err = rel(ex.reflectance, cf.r);
        out.push(Check {
            family,
            check: "exact vs closed form",
            delta: d,
            eps: e,
            value: ex.reflectance,
            reference: cf.r,
            error: err,
            tolerance: 1e-6,
            pass: err <= 1e-6,
        });
    }
    Ok(())
}

fn born_checks(family: &'static str, spec_of: fn(f64, f64) -> overbarrier::Result<PotentialSpec>, out: &mut Vec<Check>) -> Result<()> {
    for &d in &[1e-3, 1e-2] {
        for &e in &[0.5, 1.0, 2.0] {
            let spec = spec_of(d, e)?;
            let q = reflectance_born(&spec, &BornOptions::default())?;
            let c = born_closed_form(&spec)?;
            let err = (q.ln_reflectance - c.ln_r).abs();
            out.push(Check {
                family,
                check: "born quadrature vs closed form",
                delta: d,
                eps: e,
                value: q.reflectance,
                reference: c.r,
                error: err,
                tolerance: 1e-8,
                pass: err <= 1e-8,
            });
        }
    }
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let mut checks = Vec::new();
    let want = |f: ValidateFamily| a.family == f || a.family == ValidateFamily::All;
    if want(ValidateFamily::Fermi) {
        exact_grid("fermi", PotentialSpec::fermi, &[], &mut checks)?;
        born_checks("fermi", PotentialSpec::fermi, &mut checks)?;
        let spec = PotentialSpec::fermi(0.9, 0.05)?;
        let w = reflectance_wkb(&spec, &WkbOptions::default())?;
        let c = reflectance_closed_form(&spec)?;
        let err = rel(w.ln_reflectance, c.ln_r);
        checks.push(Check {
            family: "fermi",
            check: "wkb ln R vs closed form",
            delta: 0.9,
            eps: 0.05,
            value: w.ln_reflectance,
            reference: c.ln_r,
            error: err,
            tolerance: 0.01,
            pass: err <= 0.01,
        });
    }
    if want(ValidateFamily::Sech2) {
        // Cells on and around the branch point 4 delta = eps^2.
        let b = 0.25 * 0.5 * 0.5;
        let straddle = [(0.99 * b, 0.5), (b, 0.5), (1.01 * b, 0.5)];
        exact_grid("sech2", PotentialSpec::sech2, &straddle, &mut checks)?;
        born_checks("sech2", PotentialSpec::sech2, &mut checks)?;
    }
    if want(ValidateFamily::Gauss) {
        born_checks("gauss", PotentialSpec::gaussian, &mut checks)?;
        for &(d, e) in &[(0.5, 0.2), (0.1, 0.5), (1e-3, 1.0)] {
            let spec = PotentialSpec::gaussian(d, e)?;
            let set = find_turning_points(&spec, &WkbOptions::default())?;
            let reference = (1.0f64 / d).ln().sqrt() / e;
            let got = set.points.first().map_or(f64::NAN, |p| p.z0.im);
            let err = rel(got, reference);
            checks.push(Check {
                family: "gauss",
                check: "turning point height",
                delta: d,
                eps: e,
                value: got,
                reference,
                error: err,
                tolerance: 1e-10,
                pass: err <= 1e-10,
            });
        }
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<7} {:<32} {:>10} {:>6} {:>11}  result", "family", "check", "delta", "eps", "error")?;
    for c in &checks {
        writeln!(
            stdout,
            "{:<7} {:<32} {:>10.4e} {:>6} {:>11.3e}  {}",
            c.family,
            c.check,
            c.delta,
            c.eps,
            c.error,
            if c.pass { "PASS" } else { "FAIL" }
        )?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    writeln!(stdout, "{} checks, {} failed", checks.len(), failed)?;
    if let Some(p) = &a.out {
        let mut f = File::create(p).with_context(|| format!("writing {}", p.display()))?;
        let report = json!({
            "method": "validate",
            "status": if failed == 0 { "ok" } else { "failed" },
            "checks": checks,
        });
        writeln!(f, "{}", serde_json::to_string_pretty(&report)?)?;
    }
    if failed > 0 {
        bail!(NumericFailure(format!("{failed} validation check(s) failed")));
    }
    Ok(())
}
