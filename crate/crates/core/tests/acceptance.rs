//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use overbarrier::quadrature::QuadTolerance;
use overbarrier::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

const DELTAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const EPSS: [f64; 4] = [0.3, 0.5, 1.0, 2.0];

/// Max relative error of the exact solver against the closed form; cells
/// with `R >= 1e-16` must also be certified.
fn exact_grid(make: fn(f64, f64) -> Result<PotentialSpec>, extra: &[(f64, f64)]) -> Result<(f64, usize, usize, Vec<String>)> {
    let mut cells: Vec<(f64, f64)> = DELTAS
        .iter()
        .flat_map(|&d| EPSS.iter().map(move |&e| (d, e)))
        .collect();
    cells.extend_from_slice(extra);
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut uncertified = Vec::new();
    for &(d, e) in &cells {
        let spec = make(d, e)?;
        let cf = reflectance_closed_form(&spec)?;
        let ex = reflectance_exact(&spec, &SolveOptions::default())?;
        if ex.status == Status::Ok {
            worst = worst.max(rel(ex.reflectance, cf.r));
            compared += 1;
        } else if cf.r >= 1e-16 {
            uncertified.push(format!("({d}, {e})"));
        }
    }
    Ok((worst, compared, cells.len(), uncertified))
}

fn criterion_1() -> Result<Outcome> {
    let (worst, n, total, unc) = exact_grid(PotentialSpec::fermi, &[])?;
    Ok(outcome(
        worst <= 1e-6 && unc.is_empty(),
        format!("fermi exact vs closed form: max rel {worst:.2e} over {n}/{total} certified cells (tol 1e-6); uncertified with R >= 1e-16: {unc:?}"),
    ))
}

fn criterion_2() -> Result<Outcome> {
    // The branch point of the sech^2 closed form sits at 4 delta = eps^2.
    let b = 0.25 * 0.5 * 0.5;
    let straddle = [(0.9 * b, 0.5), (b, 0.5), (1.1 * b, 0.5)];
    let (worst, n, total, unc) = exact_grid(PotentialSpec::sech2, &straddle)?;
    Ok(outcome(
        worst <= 1e-6 && unc.is_empty(),
        format!("sech2 exact vs closed form incl. 3 branch-point cells: max rel {worst:.2e} over {n}/{total} certified cells (tol 1e-6); uncertified with R >= 1e-16: {unc:?}"),
    ))
}

fn criterion_3() -> Result<Outcome> {
    let opts = BornOptions {
        method: BornMethod::RealAxis,
        tol: QuadTolerance {
            abs: 0.0,
            rel: 1e-9,
            max_intervals: 20_000,
        },
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for make in [PotentialSpec::fermi, PotentialSpec::sech2, PotentialSpec::gaussian] {
        for &d in &[1e-3, 1e-2] {
            for &e in &[0.5, 1.0, 2.0] {
                let spec = make(d, e)?;
                let q = reflectance_born(&spec, &opts)?;
                let c = born_closed_form(&spec)?;
                worst = worst.max(rel(q.reflectance, c.r));
            }
        }
    }
    let spec = PotentialSpec::fermi(1e-3, 1.0)?;
    let vs_exact = rel(
        reflectance_born(&spec, &BornOptions::default())?.reflectance,
        reflectance_closed_form(&spec)?.r,
    );
    Ok(outcome(
        worst <= 1e-8 && vs_exact <= 5e-3,
        format!("real-axis Born vs closed forms (3 families, 18 cells): max rel {worst:.2e} (tol 1e-8); Born vs exact fermi eps=1 delta=1e-3: rel {vs_exact:.2e} (tol 5e-3)"),
    ))
}

fn criterion_4() -> Result<Outcome> {
    let spec = PotentialSpec::fermi(0.9, 0.05)?;
    let w = reflectance_wkb(&spec, &WkbOptions::default())?;
    let c = reflectance_closed_form(&spec)?;
    let e1 = (w.ln_reflectance - c.ln_r).abs() / c.ln_r.abs();
    let spec = PotentialSpec::sech2(0.9, 0.05)?;
    let w = reflectance_wkb(&spec, &WkbOptions::default())?;
    let four_gamma = -w.ln_reflectance;
    let reference = 2.0 * PI * (1.0 - 0.9f64.sqrt()) / 0.05;
    let e2 = rel(four_gamma, reference);
    Ok(outcome(
        e1 <= 0.01 && e2 <= 0.05,
        format!("fermi delta=0.9 eps=0.05 |dlnR|/|lnR| = {e1:.2e} (tol 1e-2); sech2 4 gamma = {four_gamma:.6} vs contour value {reference:.6}, rel {e2:.2e} (tol 5e-2)"),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let eps = 0.5;
    let opts = WkbOptions::default();
    let close = |z: ComplexPoint, re: f64, im: f64| {
        let d = ((z.re - re).powi(2) + (z.im - im).powi(2)).sqrt();
        d / (re * re + im * im).sqrt().max(1.0)
    };
    let mut worst = [0.0f64; 3];
    for j in 1..=9 {
        let d = 0.1 * j as f64 - 0.05;
        let set = find_turning_points(&PotentialSpec::fermi(d, eps)?, &opts)?;
        let z = set.points.first().map(|p| p.z0).ok_or(Error::UnsupportedRegime("no point".into()))?;
        worst[0] = worst[0].max(close(z, (1.0 / (1.0 - d)).ln() / eps, PI / eps));
    }
    for &d in &[0.01, 0.1, 0.3, 0.5, 0.7, 0.9] {
        let set = find_turning_points(&PotentialSpec::sech2(d, eps)?, &opts)?;
        let mut ims: Vec<f64> = set.points.iter().filter(|p| p.z0.im < PI / eps).map(|p| p.z0.im).collect();
        ims.sort_by(f64::total_cmp);
        let want = [d.sqrt().acos() / eps, (-d.sqrt()).acos() / eps];
        if ims.len() != 2 {
            worst[1] = f64::INFINITY;
            continue;
        }
        for (g, w) in ims.iter().zip(want) {
            worst[1] = worst[1].max(close(ComplexPoint { re: 0.0, im: *g }, 0.0, w));
        }
    }
    for &d in &[1e-6, 1e-3, 0.1, 0.5, 0.9] {
        let set = find_turning_points(&PotentialSpec::gaussian(d, eps)?, &opts)?;
        let z = set.points.first().map(|p| p.z0).ok_or(Error::UnsupportedRegime("no point".into()))?;
        worst[2] = worst[2].max(close(z, 0.0, (1.0 / d).ln().sqrt() / eps));
    }
    Ok(outcome(
        worst.iter().all(|&w| w <= 1e-10),
        format!("max relative turning-point error: fermi {:.1e}, sech2 pair {:.1e}, gauss {:.1e} (tol 1e-10)", worst[0], worst[1], worst[2]),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let t = Instant::now();
    let opts = SweepOptions::default();
    let (deltas, epss) = default_grids();
    let mut lines = Vec::new();
    for fam in [Family::FermiStep, Family::SechSquared] {
        let cells = sweep(&fam, &deltas, &epss, &opts);
        lines.push(crossover_line(&fam, &cells, &opts)?);
    }
    // ln(1/delta) ~ 1/eps^2 needs a delta grid reaching e^{-1/0.15^2}.
    let g_deltas = log_grid(1e-25, 0.9, 48);
    let g_eps = log_grid(0.15, 0.5, 24);
    let cells = sweep(&Family::GaussianBump, &g_deltas, &g_eps, &opts);
    lines.push(crossover_line(&Family::GaussianBump, &cells, &opts)?);
    let elapsed = t.elapsed().as_secs_f64();

    let slope_ok = [
        (lines[0].slope - 1.0).abs() <= 0.1,
        (lines[1].slope - 2.0).abs() <= 0.2,
        (lines[2].slope - 1.0).abs() <= 0.15,
    ];
    let pointwise: Vec<f64> = lines[2]
        .points
        .iter()
        .map(|p| p.ln_inv_delta * p.eps * p.eps)
        .collect();
    let (pw_lo, pw_hi) = pointwise
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let mut band = Vec::new();
    let mut band_ok = true;
    for l in &lines {
        let (lo, hi) = l
            .points
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.ratio), b.max(p.ratio)));
        band_ok &= l.points.iter().all(|p| (1.0 / 3.0..=3.0).contains(&p.ratio));
        band.push(format!("{} [{lo:.3}, {hi:.3}]", l.family));
    }
    Ok(outcome(
        slope_ok.iter().all(|&b| b) && band_ok,
        format!(
            "slopes fermi {:.4} (1.0 +- 0.1), sech2 {:.4} (2.0 +- 0.2), gauss vs 1/eps^2 {:.4} (1 +- 0.15, pointwise ln(1/delta) eps^2 in [{pw_lo:.3}, {pw_hi:.3}]); points {}/{}/{}; R_born/R_wkb at crossovers {} (need [1/3, 3]); {elapsed:.1} s",
            lines[0].slope,
            lines[1].slope,
            lines[2].slope,
            lines[0].points.len(),
            lines[1].points.len(),
            lines[2].points.len(),
            band.join(", ")
        ),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let opts = WkbOptions::default();
    let mut worst = [0.0f64; 3];
    for &(d, e) in &[(0.1, 0.3), (0.5, 0.5), (0.9, 1.0), (0.3, 2.0)] {
        let spec = PotentialSpec::fermi(d, e)?;
        let tp = reflectance_wkb(&spec, &opts)?.turning_point.unwrap();
        let s = smoothness_criterion(&spec, tp.z0)?;
        worst[0] = worst[0].max(rel(s, d / (e * (1.0 - d))));
    }
    for &(d, e) in &[(1e-4, 0.3), (1e-3, 0.5), (1e-2, 1.0), (5e-3, 2.0)] {
        let spec = PotentialSpec::sech2(d, e)?;
        let tp = reflectance_wkb(&spec, &opts)?.turning_point.unwrap();
        let s = smoothness_criterion(&spec, tp.z0)?;
        worst[1] = worst[1].max(rel(s, d.sqrt() / (2.0 * e)));
    }
    for &(d, e) in &[(1e-3, 0.3), (0.1, 0.5), (0.5, 1.0), (1e-8, 0.2)] {
        let spec = PotentialSpec::gaussian(d, e)?;
        let tp = reflectance_wkb(&spec, &opts)?.turning_point.unwrap();
        let s = smoothness_criterion(&spec, tp.z0)?;
        worst[2] = worst[2].max(rel(s, 1.0 / (2.0 * e * (1.0 / d).ln().sqrt())));
    }
    Ok(outcome(
        worst[0] <= 1e-8 && worst[1] <= 0.02 && worst[2] <= 1e-8,
        format!("smoothness score vs closed forms: fermi rel {:.1e} (tol 1e-8), sech2 small-delta rel {:.1e} (tol 2e-2), gauss rel {:.1e} (tol 1e-8)", worst[0], worst[1], worst[2]),
    ))
}

fn criterion_8() -> Result<Outcome> {
    let t = Instant::now();
    let base = EnsembleConfig::new(Correlation::gaussian(1.0), 0.05, 2e4, 200, 20_240_601);
    let a = estimate_lloc(&base)?;
    let doubled = EnsembleConfig { delta: 0.1, ..base };
    let b = estimate_lloc(&doubled)?;
    let dev = rel(a.lloc_inv, a.born_pred);
    let ratio = b.lloc_inv / a.lloc_inv;
    Ok(outcome(
        dev <= 0.2 && (ratio - 4.0).abs() <= 0.8,
        format!(
            "eps=1 delta=0.05 L0=2e4 N=200: lloc_inv {:.4e} +- {:.1e} vs delta^2 w(2)/4 = {:.4e} (ratio {:.3}, need within 20%); doubling ratio {ratio:.3} (4 +- 0.8); failed {}+{}; {:.0} s",
            a.lloc_inv,
            a.stderr,
            a.born_pred,
            a.lloc_inv / a.born_pred,
            a.failed,
            b.failed,
            t.elapsed().as_secs_f64()
        ),
    ))
}

fn criterion_9() -> Result<Outcome> {
    let t = Instant::now();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut at_02 = f64::NAN;
    for &eps in &[0.10, 0.125, 0.15, 0.2] {
        let config = EnsembleConfig::new(Correlation::gaussian(eps), 0.8, 60.0 / eps, 8, 99);
        let hist = turning_point_histogram(&config, &HistogramOptions::default())?;
        let est = wkb_lloc_estimate(&hist)?;
        xs.push(1.0 / eps);
        ys.push(est.lloc_inv.ln());
        if eps == 0.2 {
            at_02 = est.lloc_inv;
        }
    }
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let direct = estimate_lloc(&EnsembleConfig::new(Correlation::gaussian(0.2), 0.8, 2000.0, 100, 99))?;
    let factor = (direct.lloc_inv / at_02).max(at_02 / direct.lloc_inv);
    Ok(outcome(
        slope < 0.0 && r2 > 0.9 && factor <= 10.0,
        format!(
            "delta=0.8: ln(estimate) vs 1/eps slope {slope:.4}, R^2 {r2:.4} (need < 0, > 0.9); eps=0.2 estimate {at_02:.3e} vs ensemble {:.3e} +- {:.1e}, factor {factor:.1} (need <= 10); {:.0} s",
            direct.lloc_inv,
            direct.stderr,
            t.elapsed().as_secs_f64()
        ),
    ))
}

fn criterion_10() -> Result<Outcome> {
    let mut unitarity = 0.0f64;
    let mut symmetry = 0.0f64;
    let opts = SolveOptions::default();
    let mut specs = Vec::new();
    for &d in &DELTAS {
        for &e in &EPSS {
            specs.push(PotentialSpec::fermi(d, e)?);
            specs.push(PotentialSpec::sech2(d, e)?);
            specs.push(PotentialSpec::gaussian(d, e)?);
        }
    }
    specs.push(synthesize_random(&Correlation::gaussian(1.0), 0.3, 40.0, 3, &SynthesisOptions::default())?);
    for spec in &specs {
        let a = reflectance_exact(spec, &opts)?;
        if a.status == Status::Ok {
            unitarity = unitarity.max((a.reflectance + a.transmittance - 1.0).abs());
            let b = reflectance_exact(&spec.mirrored(), &opts)?;
            if b.status == Status::Ok {
                unitarity = unitarity.max((b.reflectance + b.transmittance - 1.0).abs());
                symmetry = symmetry.max(rel(b.reflectance, a.reflectance));
            }
        }
    }

    let mut scaling = 0.0f64;
    for make in [PotentialSpec::fermi, PotentialSpec::sech2, PotentialSpec::gaussian] {
        for &(d, e) in &[(0.01, 0.5), (0.1, 1.0), (0.2, 2.0)] {
            let r1 = reflectance_born(&make(d, e)?, &BornOptions::default())?.reflectance;
            let r2 = reflectance_born(&make(2.0 * d, e)?, &BornOptions::default())?.reflectance;
            scaling = scaling.max((r2 / r1 - 4.0).abs());
        }
    }
    let c1 = EnsembleConfig::new(Correlation::gaussian(0.7), 0.1, 100.0, 2, 1);
    let c2 = EnsembleConfig { delta: 0.2, ..c1 };
    scaling = scaling.max((born_lloc(&c2) / born_lloc(&c1) - 4.0).abs());

    let mut start_dep = 0.0f64;
    for spec in [PotentialSpec::fermi(0.6, 0.3)?, PotentialSpec::sech2(0.4, 0.5)?, PotentialSpec::gaussian(0.3, 0.4)?] {
        let tp = reflectance_wkb(&spec, &WkbOptions::default())?.turning_point.unwrap();
        let g0 = tp.gamma;
        for s in [-3.0, -0.5, 0.7, 2.5] {
            let o = WkbOptions {
                start: Some(tp.z0.re + s / spec.eps),
                ..Default::default()
            };
            start_dep = start_dep.max((wkb_action(&spec, tp.z0, &o)? - g0).abs());
        }
    }

    let config = EnsembleConfig::new(Correlation::gaussian(1.0), 0.1, 600.0, 16, 42);
    let a = estimate_lloc(&config)?;
    let b = estimate_lloc(&config)?;
    let bits = a.ln_t.iter().zip(&b.ln_t).all(|(x, y)| x.map(f64::to_bits) == y.map(f64::to_bits))
        && a.lloc_inv.to_bits() == b.lloc_inv.to_bits();

    let scaling_tol = 8.0 * f64::EPSILON;
    Ok(outcome(
        unitarity <= 1e-10 && symmetry <= 1e-8 && scaling <= scaling_tol && start_dep <= 1e-10 && bits,
        format!(
            "|R+T-1| max {unitarity:.1e} (1e-10); mirror rel {symmetry:.1e} (1e-8); delta^2 ratio dev {scaling:.1e} ({scaling_tol:.1e}); gamma start dependence {start_dep:.1e} (1e-10); seeded ensemble bit-identical: {bits}"
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("exact vs closed form, fermi", criterion_1),
        ("exact vs closed form, sech2", criterion_2),
        ("Born consistency", criterion_3),
        ("WKB consistency", criterion_4),
        ("turning points", criterion_5),
        ("crossover lines", criterion_6),
        ("smoothness closed forms", criterion_7),
        ("localization, Born regime", criterion_8),
        ("localization, WKB trend", criterion_9),
        ("global invariants", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (j, (name, f)) in criteria.iter().enumerate() {
        let id = (j + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let (tag, detail) = match f() {
            Ok(o) if o.pass => ("PASS", o.detail),
            Ok(o) => ("FAIL", o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("[{tag}] {id:>2} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
