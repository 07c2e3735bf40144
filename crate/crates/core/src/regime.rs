//! Applicability map of the Born and WKB reflectances over the `(delta, eps)` plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::born::{reflectance_born, BornOptions};
use crate::error::{Error, Result};
use crate::exact::{reflectance_closed_form, reflectance_exact, SolveOptions, Status};
use crate::model::{Family, PotentialSpec};
use crate::wkb::{reflectance_wkb, WkbOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    BornValid,
    WkbValid,
    Crossover,
    Unresolved,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::BornValid => "BornValid",
            Regime::WkbValid => "WkbValid",
            Regime::Crossover => "Crossover",
            Regime::Unresolved => "Unresolved",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub s_lo: f64,
    pub s_hi: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            s_lo: 1.0 / 3.0,
            s_hi: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub family: String,
    pub delta: f64,
    pub eps: f64,
    #[serde(rename = "R_exact")]
    pub r_exact: Option<f64>,
    #[serde(rename = "R_born")]
    pub r_born: f64,
    #[serde(rename = "R_wkb")]
    pub r_wkb: f64,
    pub ln_r_exact: Option<f64>,
    pub ln_r_born: f64,
    pub ln_r_wkb: f64,
    #[serde(rename = "S")]
    pub smoothness: f64,
    pub regime: Regime,
    /// Failure of any of the three evaluations, if one occurred.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub thresholds: Thresholds,
    pub born: BornOptions,
    pub wkb: WkbOptions,
    pub solve: SolveOptions,
    /// Run the ODE solver where no closed form exists.
    pub numeric_exact: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            thresholds: Thresholds::default(),
            born: BornOptions::default(),
            wkb: WkbOptions::default(),
            solve: SolveOptions::default(),
            numeric_exact: true,
        }
    }
}

/// Log-spaced grid of `n` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|j| (a + (b - a) * j as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default grids: eps over [0.05, 2] (24 points), delta over [1e-4, 0.9] (32 points).
pub fn default_grids() -> (Vec<f64>, Vec<f64>) {
    (log_grid(1e-4, 0.9, 32), log_grid(0.05, 2.0, 24))
}

/// Label from the smoothness score.
pub fn classify(cell: &RegimeCell, thresholds: &Thresholds) -> Regime {
    let s = cell.smoothness;
    if s >= thresholds.s_hi {
        Regime::WkbValid
    } else if s <= thresholds.s_lo {
        Regime::BornValid
    } else if cell.r_exact.is_none() {
        Regime::Unresolved
    } else {
        Regime::Crossover
    }
}

fn exact_value(spec: &PotentialSpec, opts: &SweepOptions) -> Result<Option<(f64, f64)>> {
    match spec.family {
        Family::FermiStep | Family::SechSquared => {
            let cf = reflectance_closed_form(spec)?;
            Ok(Some((cf.r, cf.ln_r)))
        }
        _ if opts.numeric_exact => {
            let r = reflectance_exact(spec, &opts.solve)?;
            Ok((r.status == Status::Ok).then_some((r.reflectance, r.ln_reflectance)))
        }
        _ => Ok(None),
    }
}

/// One cell; failures are recorded in the cell rather than returned.
pub fn evaluate_cell(family: &Family, delta: f64, eps: f64, opts: &SweepOptions) -> RegimeCell {
    let mut cell = RegimeCell {
        family: family.name().to_string(),
        delta,
        eps,
        r_exact: None,
        r_born: f64::NAN,
        r_wkb: f64::NAN,
        ln_r_exact: None,
        ln_r_born: f64::NAN,
        ln_r_wkb: f64::NAN,
        smoothness: f64::NAN,
        regime: Regime::Unresolved,
        error: None,
    };
    let spec = match PotentialSpec::new(family.clone(), delta, eps) {
        Ok(s) => s,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    let mut errors = Vec::new();
    match reflectance_born(&spec, &opts.born) {
        Ok(b) => {
            cell.r_born = b.reflectance;
            cell.ln_r_born = b.ln_reflectance;
        }
        Err(e) => errors.push(format!("born: {e}")),
    }
    match reflectance_wkb(&spec, &opts.wkb) {
        Ok(w) => {
            cell.r_wkb = w.reflectance;
            cell.ln_r_wkb = w.ln_reflectance;
            cell.smoothness = w.turning_point.map_or(0.0, |tp| tp.smoothness);
        }
        Err(e) => errors.push(format!("wkb: {e}")),
    }
    match exact_value(&spec, opts) {
        Ok(v) => {
            cell.r_exact = v.map(|x| x.0);
            cell.ln_r_exact = v.map(|x| x.1);
        }
        Err(e) => errors.push(format!("exact: {e}")),
    }
    if !errors.is_empty() {
        cell.error = Some(errors.join("; "));
    }
    if cell.smoothness.is_finite() {
        cell.regime = classify(&cell, &opts.thresholds);
    }
    cell
}

/// All cells of the grid, eps-major, independent of scheduling.
pub fn sweep(family: &Family, deltas: &[f64], epss: &[f64], opts: &SweepOptions) -> Vec<RegimeCell> {
    let jobs: Vec<(f64, f64)> = epss
        .iter()
        .flat_map(|&e| deltas.iter().map(move |&d| (d, e)))
        .collect();
    jobs.par_iter()
        .map(|&(d, e)| evaluate_cell(family, d, e, opts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineAxis {
    /// Abscissa `ln(1/eps)`.
    LnInvEps,
    /// Abscissa `1/eps^2`.
    InvEpsSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverPoint {
    pub eps: f64,
    pub delta: f64,
    pub ln_inv_eps: f64,
    pub ln_inv_delta: f64,
    /// `R_born / R_wkb` at the point.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverLine {
    pub family: String,
    pub axis: LineAxis,
    /// Sorted by `ln_inv_eps`.
    pub points: Vec<CrossoverPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    /// Columns without an interior extremum, with the reason.
    pub skipped: Vec<(f64, String)>,
}

fn log_ratio(family: &Family, delta: f64, eps: f64, opts: &SweepOptions) -> Result<(f64, f64)> {
    let spec = PotentialSpec::new(family.clone(), delta, eps)?;
    let b = reflectance_born(&spec, &opts.born)?;
    let w = reflectance_wkb(&spec, &opts.wkb)?;
    Ok((b.ln_reflectance - w.ln_reflectance, (b.ln_reflectance - w.ln_reflectance).exp()))
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
fn golden_max<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// The Born/WKB dividing line from a single-family sweep.
///
/// Per eps column the crossover is where `ln(R_born / R_wkb)` is largest in
/// `ln delta`, i.e. where the two approximations come closest; the grid
/// maximum is refined by golden-section search.
pub fn crossover_line(family: &Family, cells: &[RegimeCell], opts: &SweepOptions) -> Result<CrossoverLine> {
    let axis = match family {
        Family::FermiStep | Family::SechSquared => LineAxis::LnInvEps,
        Family::GaussianBump => LineAxis::InvEpsSquared,
        _ => return Err(Error::UnsupportedFamily(family.name())),
    };
    let mut epss: Vec<f64> = cells.iter().map(|c| c.eps).collect();
    epss.sort_by(f64::total_cmp);
    epss.dedup();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &eps in &epss {
        let mut col: Vec<&RegimeCell> = cells
            .iter()
            .filter(|c| c.eps == eps && c.delta > 0.0 && c.ln_r_born.is_finite() && c.ln_r_wkb.is_finite())
            .collect();
        col.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        if col.len() < 3 {
            skipped.push((eps, "fewer than three usable cells".to_string()));
            continue;
        }
        let lr: Vec<f64> = col.iter().map(|c| c.ln_r_born - c.ln_r_wkb).collect();
        let jmax = (0..lr.len()).max_by(|&a, &b| lr[a].total_cmp(&lr[b])).unwrap();
        if jmax == 0 || jmax == lr.len() - 1 {
            skipped.push((eps, "ln(R_born/R_wkb) has no interior maximum on the delta grid".into()));
            continue;
        }
        let lo = col[jmax - 1].delta.ln();
        let hi = col[jmax + 1].delta.ln();
        let refined = golden_max(|x| Ok(log_ratio(family, x.exp(), eps, opts)?.0), lo, hi, 1e-6);
        let x = match refined {
            Ok(x) => x,
            Err(e) => {
                skipped.push((eps, format!("refinement failed: {e}")));
                continue;
            }
        };
        let delta = x.exp();
        let (_, ratio) = log_ratio(family, delta, eps, opts)?;
        points.push(CrossoverPoint {
            eps,
            delta,
            ln_inv_eps: -eps.ln(),
            ln_inv_delta: -x,
            ratio,
        });
    }
    points.sort_by(|a, b| a.ln_inv_eps.total_cmp(&b.ln_inv_eps));
    let abscissa = |p: &CrossoverPoint| match axis {
        LineAxis::LnInvEps => p.ln_inv_eps,
        LineAxis::InvEpsSquared => 1.0 / (p.eps * p.eps),
    };
    let xs: Vec<f64> = points.iter().map(abscissa).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.ln_inv_delta).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    Ok(CrossoverLine {
        family: family.name().to_string(),
        axis,
        points,
        slope,
        intercept,
        residuals,
        r_squared,
        skipped,
    })
}

/// Ordinary least squares `y = slope x + intercept` with its `R^2`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}
