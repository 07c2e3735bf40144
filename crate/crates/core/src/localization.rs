//! Localization length of smooth random potentials: direct ensemble
//! measurement, the Born prediction, and the turning-point estimate.

use rayon::prelude::*;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{reflectance_exact, Backend, SolveOptions};
use crate::model::{Family, PotentialSpec};
use crate::random::{correlation_fourier, synthesize_realization, Correlation, SynthesisOptions};
use crate::wkb::{find_turning_points, WkbOptions};

/// Largest tolerated fraction of failed realizations.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub correlation: Correlation,
    pub delta: f64,
    /// Sample length `L0`, tapers included.
    pub length: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Ramp width at each end; `None` gives `5/eps`.
    pub taper_width: Option<f64>,
    pub solve: SolveOptions,
}

impl EnsembleConfig {
    pub fn new(correlation: Correlation, delta: f64, length: f64, realizations: usize, seed: u64) -> Self {
        let mut solve = SolveOptions::with_backend(Backend::Layered);
        solve.layer_width = 0.05;
        EnsembleConfig {
            correlation,
            delta,
            length,
            realizations,
            seed,
            taper_width: None,
            solve,
        }
    }

    pub fn eps(&self) -> f64 {
        self.correlation.eps()
    }

    pub fn taper(&self) -> f64 {
        self.taper_width.unwrap_or(5.0 / self.eps())
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.eps();
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::AboveBarrierOnly { delta: self.delta });
        }
        if self.realizations < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 realizations, got {}",
                self.realizations
            )));
        }
        let w = self.taper();
        if !(w * eps >= 3.0) {
            return Err(Error::InvalidParameter(format!(
                "taper width {w} is below 3/eps = {}",
                3.0 / eps
            )));
        }
        if !(self.length >= 2.0 * w) {
            return Err(Error::InvalidParameter(format!(
                "sample length {} cannot hold two tapers of width {w}",
                self.length
            )));
        }
        Ok(())
    }

    fn synthesis(&self) -> SynthesisOptions {
        SynthesisOptions {
            modes: None,
            taper_width: Some(self.taper()),
        }
    }

    /// Realization number `index`.
    pub fn realization(&self, index: u64) -> Result<PotentialSpec> {
        synthesize_realization(
            &self.correlation,
            self.delta,
            self.length,
            self.seed,
            index,
            &self.synthesis(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    /// `-<ln T> / (2 L0)`
    pub lloc_inv: f64,
    pub stderr: f64,
    /// `delta^2 w(2) / 4`
    pub born_pred: f64,
    pub n: usize,
    #[serde(rename = "lnT_mean")]
    pub ln_t_mean: f64,
    #[serde(rename = "lnT_var")]
    pub ln_t_var: f64,
    pub failed: usize,
    /// Per-realization `ln T` in index order; failed ones are `None`.
    #[serde(rename = "lnT")]
    pub ln_t: Vec<Option<f64>>,
}

/// `ln T` of one realization over its full support.
pub fn measure_transmission(realization: &PotentialSpec, opts: &SolveOptions) -> Result<f64> {
    if realization.delta == 0.0 {
        return Ok(0.0);
    }
    let r = reflectance_exact(realization, opts)?;
    if !r.ln_transmittance.is_finite() {
        return Err(Error::UnsupportedRegime(format!(
            "transmission below the representable floor (ln T = {})",
            r.ln_transmittance
        )));
    }
    Ok(r.ln_transmittance)
}

fn failure_check<T>(results: &[Result<T>]) -> Result<usize> {
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * results.len() as f64 {
        let first = results
            .iter()
            .find_map(|r| r.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(Error::EnsembleFailure {
            failed,
            total: results.len(),
            first,
        });
    }
    Ok(failed)
}

/// Ensemble estimate of the inverse localization length.
pub fn estimate_lloc(config: &EnsembleConfig) -> Result<LocalizationEstimate> {
    config.validate()?;
    let results: Vec<Result<f64>> = (0..config.realizations as u64)
        .into_par_iter()
        .map(|j| measure_transmission(&config.realization(j)?, &config.solve))
        .collect();
    let failed = failure_check(&results)?;
    let ln_t: Vec<Option<f64>> = results.into_iter().map(|r| r.ok()).collect();
    let ok: Vec<f64> = ln_t.iter().flatten().copied().collect();
    let n = ok.len();
    let mean = ok.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let two_l = 2.0 * config.length;
    Ok(LocalizationEstimate {
        lloc_inv: -mean / two_l,
        stderr: (var / n as f64).sqrt() / two_l,
        born_pred: born_lloc(config),
        n,
        ln_t_mean: mean,
        ln_t_var: var,
        failed,
        ln_t,
    })
}

/// `delta^2 w(2) / 4`
pub fn born_lloc(config: &EnsembleConfig) -> f64 {
    config.delta * config.delta * correlation_fourier(&config.correlation) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramOptions {
    pub bins: usize,
    pub wkb: WkbOptions,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        HistogramOptions {
            bins: 40,
            wkb: WkbOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MGammaHistogram {
    pub edges: Vec<f64>,
    /// Turning points per bin per unit `Re z` length.
    pub counts: Vec<f64>,
    /// `sum exp(-4 gamma)` per bin per unit `Re z` length.
    pub weights: Vec<f64>,
    /// Mean spacing of turning points along `Re z`.
    pub lambda: f64,
    pub gamma_min: Option<f64>,
    pub points: usize,
    /// Every kept action, ascending.
    pub gammas: Vec<f64>,
    /// Total `Re z` length searched.
    pub searched_length: f64,
    /// Realizations without any turning point in the strip.
    pub empty_realizations: usize,
    /// Points left out because their action depends on the path to the real axis.
    pub shadowed: usize,
    pub failed_realizations: usize,
}

impl MGammaHistogram {
    /// `M(gamma)`: counts per unit length per unit `gamma`.
    pub fn density(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(c, e)| c / (e[1] - e[0]))
            .collect()
    }

    /// Empirical `p`-quantile of the kept actions.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        if self.gammas.is_empty() {
            return None;
        }
        let j = (p.clamp(0.0, 1.0) * (self.gammas.len() - 1) as f64).round() as usize;
        Some(self.gammas[j])
    }

    pub fn mean_gamma(&self) -> Option<f64> {
        let total: f64 = self.counts.iter().sum();
        (total > 0.0).then(|| {
            self.counts
                .iter()
                .zip(self.edges.windows(2))
                .map(|(c, e)| c * 0.5 * (e[0] + e[1]))
                .sum::<f64>()
                / total
        })
    }
}

/// Whether the vertical path from the real axis up to `z0` starts in an
/// allowed region and keeps clear of the other branch points.
fn clean_foot(spec: &PotentialSpec, z0: Complex64, all: &[Complex64]) -> Result<bool> {
    let (u, _) = spec.real_shape_and_gradient(z0.re)?;
    if 1.0 - spec.delta * u <= 0.0 {
        return Ok(false);
    }
    let foot = Complex64::new(z0.re, 0.0);
    Ok(all.iter().all(|&p| {
        if p == z0 || p.im >= z0.im {
            return true;
        }
        let d = if p.im > 0.0 { (p.re - z0.re).abs() } else { (p - foot).norm() };
        d > 0.25 * (p - z0).norm()
    }))
}

/// Turning-point actions harvested from the analytic strip of each realization.
pub fn turning_point_histogram(config: &EnsembleConfig, opts: &HistogramOptions) -> Result<MGammaHistogram> {
    config.validate()?;
    if opts.bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let results: Vec<Result<(Vec<f64>, f64, usize)>> = (0..config.realizations as u64)
        .into_par_iter()
        .map(|j| {
            let spec = config.realization(j)?;
            let span = match &spec.family {
                Family::FourierSeries(s) => {
                    let (lo, hi) = s.analytic_interval();
                    hi - lo
                }
                _ => unreachable!(),
            };
            let set = find_turning_points(&spec, &opts.wkb)?;
            let zs: Vec<Complex64> = set.points.iter().map(|p| p.z0.into()).collect();
            let mut kept = Vec::new();
            let mut shadowed = 0;
            for (j, p) in set.points.iter().enumerate() {
                if clean_foot(&spec, zs[j], &zs)? && p.gamma > 0.0 {
                    kept.push(p.gamma);
                } else {
                    shadowed += 1;
                }
            }
            Ok((kept, span, shadowed))
        })
        .collect();
    let failed = failure_check(&results)?;
    let ok: Vec<(Vec<f64>, f64, usize)> = results.into_iter().flatten().collect();
    let searched_length: f64 = ok.iter().map(|r| r.1).sum();
    let empty_realizations = ok.iter().filter(|r| r.0.is_empty()).count();
    let shadowed: usize = ok.iter().map(|r| r.2).sum();
    let mut gammas: Vec<f64> = ok.into_iter().flat_map(|r| r.0).collect();
    gammas.sort_by(f64::total_cmp);
    let lo = gammas.iter().copied().fold(0.0, f64::min);
    let hi = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / opts.bins as f64;
    let edges: Vec<f64> = (0..=opts.bins).map(|j| lo + j as f64 * width).collect();
    let mut counts = vec![0.0; opts.bins];
    let mut weights = vec![0.0; opts.bins];
    for &g in &gammas {
        let b = (((g - lo) / width) as usize).min(opts.bins - 1);
        counts[b] += 1.0 / searched_length;
        weights[b] += (-4.0 * g).exp() / searched_length;
    }
    Ok(MGammaHistogram {
        edges,
        counts,
        weights,
        lambda: searched_length / gammas.len() as f64,
        gamma_min: gammas.first().copied(),
        points: gammas.len(),
        gammas,
        searched_length,
        empty_realizations,
        shadowed,
        failed_realizations: failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WkbLlocEstimate {
    pub lloc_inv: f64,
    /// The estimate fixes the trend only; its overall constant is unknown.
    pub up_to_constant: bool,
    pub lambda: f64,
    pub gamma_min: f64,
}

/// `int M(xi) exp(-4 xi) d xi` over the harvested turning points.
pub fn wkb_lloc_estimate(hist: &MGammaHistogram) -> Result<WkbLlocEstimate> {
    let gamma_min = match hist.gamma_min {
        Some(g) if hist.points > 0 => g,
        _ => {
            return Err(Error::UnsupportedRegime(
                "empty turning-point histogram".into(),
            ))
        }
    };
    Ok(WkbLlocEstimate {
        lloc_inv: hist.weights.iter().sum(),
        up_to_constant: true,
        lambda: hist.lambda,
        gamma_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(delta: f64, eps: f64, length: f64, n: usize) -> EnsembleConfig {
        EnsembleConfig::new(Correlation::gaussian(eps), delta, length, n, 7)
    }

    #[test]
    fn born_prediction_value() {
        let c = config(0.05, 1.0, 2e4, 10);
        assert!((born_lloc(&c) - 4.0755e-4).abs() < 1e-7);
        assert_eq!(born_lloc(&config(0.0, 1.0, 100.0, 2)), 0.0);
        let a = born_lloc(&config(0.1, 0.7, 100.0, 2));
        let b = born_lloc(&config(0.2, 0.7, 100.0, 2));
        assert_eq!(b / a, 4.0);
        // Exponentially small as eps -> 0.
        let small = born_lloc(&config(0.5, 0.1, 100.0, 2));
        assert!(small < 1e-40);
    }

    #[test]
    fn zero_delta_transmits() {
        let spec = config(0.0, 1.0, 40.0, 2).realization(0).unwrap();
        assert_eq!(measure_transmission(&spec, &SolveOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn reciprocity_of_transmission() {
        let spec = config(0.3, 1.0, 40.0, 2).realization(3).unwrap();
        let opts = SolveOptions::default();
        let a = measure_transmission(&spec, &opts).unwrap();
        let b = measure_transmission(&spec.mirrored(), &opts).unwrap();
        assert!(a < 0.0);
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn layered_matches_embedding_on_realization() {
        let spec = config(0.3, 1.0, 60.0, 2).realization(1).unwrap();
        let a = measure_transmission(&spec, &SolveOptions::default()).unwrap();
        let mut layered = config(0.3, 1.0, 60.0, 2).solve;
        layered.layer_width = 0.0125;
        let b = measure_transmission(&spec, &layered).unwrap();
        assert!((a - b).abs() < 1e-4 * a.abs(), "{a} {b}");
    }

    #[test]
    fn ensemble_is_reproducible() {
        let c = config(0.2, 1.0, 400.0, 12);
        let a = estimate_lloc(&c).unwrap();
        let b = estimate_lloc(&c).unwrap();
        assert_eq!(a.ln_t_mean.to_bits(), b.ln_t_mean.to_bits());
        assert_eq!(a, b);
        assert_eq!(a.n, 12);
        assert!(a.lloc_inv > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(config(0.1, 1.0, 100.0, 1).validate().is_err());
        assert!(config(1.1, 1.0, 100.0, 4).validate().is_err());
        assert!(config(0.1, 1.0, 8.0, 4).validate().is_err());
        let mut c = config(0.1, 1.0, 100.0, 4);
        c.taper_width = Some(2.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn tapers_alone_barely_reflect() {
        // Only the two ramps: end reflection is negligible against the bulk.
        let c = config(0.05, 1.0, 10.0, 2);
        let ln_t = measure_transmission(&c.realization(0).unwrap(), &c.solve).unwrap();
        let bulk = 2.0 * 2e3 * born_lloc(&c);
        assert!(ln_t.abs() < 0.05 * bulk, "{ln_t} {bulk}");
    }

    #[test]
    fn all_mass_at_zero_gives_inverse_spacing() {
        let hist = MGammaHistogram {
            edges: vec![0.0, 1.0],
            counts: vec![0.1],
            weights: vec![0.1],
            lambda: 10.0,
            gamma_min: Some(0.0),
            points: 5,
            gammas: vec![0.0; 5],
            searched_length: 50.0,
            empty_realizations: 0,
            shadowed: 0,
            failed_realizations: 0,
        };
        let est = wkb_lloc_estimate(&hist).unwrap();
        assert!((est.lloc_inv - 1.0 / hist.lambda).abs() < 1e-15);
        assert!(est.up_to_constant);
    }

    #[test]
    fn empty_strip_reports_zero_density() {
        let mut opts = HistogramOptions::default();
        opts.wkb.strip = Some((0.0, 0.2));
        let c = config(1e-6, 0.5, 60.0, 2);
        let hist = turning_point_histogram(&c, &opts).unwrap();
        assert_eq!(hist.points, 0);
        assert_eq!(hist.empty_realizations, 2);
        assert!(hist.counts.iter().all(|&x| x == 0.0));
        assert!(wkb_lloc_estimate(&hist).is_err());
    }

    #[test]
    fn histogram_spacing_and_trend() {
        let eps = 0.5;
        let h = |delta: f64| {
            turning_point_histogram(&config(delta, eps, 80.0, 8), &HistogramOptions::default()).unwrap()
        };
        let lo = h(0.3);
        let hi = h(0.5);
        for x in [&lo, &hi] {
            assert!(x.counts.iter().all(|&c| c >= 0.0));
            let total: f64 = x.counts.iter().sum();
            assert!((total * x.lambda - 1.0).abs() < 1e-12);
        }
        assert!((0.2..=5.0).contains(&(hi.lambda * eps)), "{}", hi.lambda * eps);
        // The low-action end moves toward the real axis; the bulk is set by the strip depth.
        assert!(hi.quantile(0.1).unwrap() < lo.quantile(0.1).unwrap());
        assert!(hi.quantile(0.25).unwrap() < lo.quantile(0.25).unwrap());
        let (a, b) = (wkb_lloc_estimate(&lo).unwrap(), wkb_lloc_estimate(&hi).unwrap());
        assert!(b.lloc_inv > a.lloc_inv);
    }
}
