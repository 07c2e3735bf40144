//! Spectral synthesis of smooth stationary Gaussian random potentials.
//!
//! A realization is a finite cosine series `sum a_n cos(q_n z + phi_n)` with
//! amplitudes drawn from the spectral density and uniform random phases,
//! multiplied by raised-cosine ramps at both ends of `[0, length]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, PotentialSpec};

/// Modes per correlation length over the sample.
pub const MODES_PER_CORRELATION_LENGTH: f64 = 8.0;
/// Spectral cutoff in units of eps.
pub const SPECTRAL_CUTOFF: f64 = 12.0;
const MIN_MODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Correlation {
    /// `w(z) = exp(-(eps z)^2)`
    Gaussian { eps: f64 },
}

impl Correlation {
    pub fn gaussian(eps: f64) -> Self {
        Correlation::Gaussian { eps }
    }

    pub fn eps(&self) -> f64 {
        match *self {
            Correlation::Gaussian { eps } => eps,
        }
    }

    /// Binary correlation `<U(z') U(z' + s)>`.
    pub fn correlation(&self, s: f64) -> f64 {
        match *self {
            Correlation::Gaussian { eps } => (-(eps * s).powi(2)).exp(),
        }
    }

    /// Fourier transform `w(q) = int w(z) e^{iqz} dz`.
    pub fn transform(&self, q: f64) -> f64 {
        match *self {
            Correlation::Gaussian { eps } => PI.sqrt() / eps * (-(q * q) / (4.0 * eps * eps)).exp(),
        }
    }

    /// One-sided spectral density, normalized to unit variance on `q > 0`.
    pub fn spectral_density(&self, q: f64) -> f64 {
        self.transform(q) / PI
    }

    fn validate(&self) -> Result<()> {
        let eps = self.eps();
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "correlation eps must be positive, got {eps}"
            )));
        }
        Ok(())
    }
}

/// `w(2)`, the correlation transform at the backscattering wavenumber.
pub fn correlation_fourier(correlation: &Correlation) -> f64 {
    correlation.transform(2.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Mode count; `None` picks the minimum that resolves the sample.
    pub modes: Option<usize>,
    /// Ramp width at each end; `None` gives `5/eps`.
    pub taper_width: Option<f64>,
}

/// Tapered cosine series on `[0, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesData", into = "SeriesData")]
pub struct FourierSeries {
    amplitudes: Vec<f64>,
    wavenumbers: Vec<f64>,
    phases: Vec<f64>,
    taper_width: f64,
    length: f64,
    /// `a_n e^{i phi_n}`
    coeffs: Vec<Complex64>,
    /// `(q_0, dq)` when the wavenumbers are equally spaced.
    uniform: Option<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SeriesData {
    amplitudes: Vec<f64>,
    wavenumbers: Vec<f64>,
    phases: Vec<f64>,
    taper_width: f64,
    length: f64,
}

impl TryFrom<SeriesData> for FourierSeries {
    type Error = Error;
    fn try_from(d: SeriesData) -> Result<Self> {
        FourierSeries::new(d.amplitudes, d.wavenumbers, d.phases, d.taper_width, d.length)
    }
}

impl From<FourierSeries> for SeriesData {
    fn from(s: FourierSeries) -> Self {
        SeriesData {
            amplitudes: s.amplitudes,
            wavenumbers: s.wavenumbers,
            phases: s.phases,
            taper_width: s.taper_width,
            length: s.length,
        }
    }
}

/// JSON interchange form of a random realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeriesDocument {
    pub delta: f64,
    pub eps: f64,
    pub amplitudes: Vec<f64>,
    pub wavenumbers: Vec<f64>,
    pub phases: Vec<f64>,
    pub taper_width: f64,
    pub length: f64,
}

impl FourierSeriesDocument {
    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        match &spec.family {
            Family::FourierSeries(s) => Ok(FourierSeriesDocument {
                delta: spec.delta,
                eps: spec.eps,
                amplitudes: s.amplitudes.clone(),
                wavenumbers: s.wavenumbers.clone(),
                phases: s.phases.clone(),
                taper_width: s.taper_width,
                length: s.length,
            }),
            other => Err(Error::UnsupportedFamily(other.name())),
        }
    }

    pub fn into_spec(self) -> Result<PotentialSpec> {
        let series = FourierSeries::new(
            self.amplitudes,
            self.wavenumbers,
            self.phases,
            self.taper_width,
            self.length,
        )?;
        PotentialSpec::new(Family::FourierSeries(series), self.delta, self.eps)
    }
}

impl FourierSeries {
    pub fn new(
        amplitudes: Vec<f64>,
        wavenumbers: Vec<f64>,
        phases: Vec<f64>,
        taper_width: f64,
        length: f64,
    ) -> Result<Self> {
        let n = amplitudes.len();
        if wavenumbers.len() != n || phases.len() != n {
            return Err(Error::InvalidParameter(
                "amplitudes, wavenumbers and phases must have equal lengths".into(),
            ));
        }
        if wavenumbers.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            return Err(Error::InvalidParameter("wavenumbers must be positive".into()));
        }
        if amplitudes.iter().chain(&phases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite series coefficient".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("length must be positive, got {length}")));
        }
        if !(taper_width >= 0.0 && 2.0 * taper_width <= length) {
            return Err(Error::InvalidParameter(format!(
                "taper width {taper_width} does not fit twice into length {length}"
            )));
        }
        let coeffs = amplitudes
            .iter()
            .zip(&phases)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        let uniform = detect_uniform(&wavenumbers);
        Ok(FourierSeries {
            amplitudes,
            wavenumbers,
            phases,
            taper_width,
            length,
            coeffs,
            uniform,
        })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
    pub fn taper_width(&self) -> f64 {
        self.taper_width
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Interval on which the series can be continued off the real axis.
    pub fn analytic_interval(&self) -> (f64, f64) {
        (self.taper_width, self.length - self.taper_width)
    }

    /// Ramp `T(z)` and its slope.
    pub fn taper(&self, z: f64) -> (f64, f64) {
        let (w, l) = (self.taper_width, self.length);
        if z <= 0.0 || z >= l {
            (0.0, 0.0)
        } else if z < w {
            let x = PI * z / w;
            (0.5 * (1.0 - x.cos()), 0.5 * PI / w * x.sin())
        } else if z > l - w {
            let x = PI * (l - z) / w;
            (0.5 * (1.0 - x.cos()), -0.5 * PI / w * x.sin())
        } else {
            (1.0, 0.0)
        }
    }

    /// Untapered series and its derivative at complex `z`.
    pub fn raw_series(&self, z: Complex64) -> (Complex64, Complex64) {
        let i = Complex64::new(0.0, 1.0);
        let mut s = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        let mut accumulate = |c: Complex64, q: f64, e: Complex64, einv: Complex64| {
            let fwd = c * e;
            let bwd = c.conj() * einv;
            s += fwd + bwd;
            d += i * q * (fwd - bwd);
        };
        match self.uniform {
            Some((q0, dq)) => {
                let step = (i * dq * z).exp();
                let step_inv = 1.0 / step;
                let mut e = Complex64::new(0.0, 0.0);
                let mut einv = Complex64::new(0.0, 0.0);
                for (n, &c) in self.coeffs.iter().enumerate() {
                    if n % 64 == 0 {
                        let q = q0 + n as f64 * dq;
                        e = (i * q * z).exp();
                        einv = (-i * q * z).exp();
                    }
                    accumulate(c, q0 + n as f64 * dq, e, einv);
                    e *= step;
                    einv *= step_inv;
                }
            }
            None => {
                for (&c, &q) in self.coeffs.iter().zip(&self.wavenumbers) {
                    accumulate(c, q, (i * q * z).exp(), (-i * q * z).exp());
                }
            }
        }
        (0.5 * s, 0.5 * d)
    }

    /// Tapered value and `d/dz`; complex arguments only inside the analytic interval.
    pub fn eval(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let zero = Complex64::new(0.0, 0.0);
        if z.im != 0.0 {
            let (lo, hi) = self.analytic_interval();
            if !(z.re >= lo && z.re <= hi) {
                return Err(Error::TaperNotAnalytic { re: z.re });
            }
            return Ok(self.raw_series(z));
        }
        let (t, dt) = self.taper(z.re);
        if t == 0.0 && dt == 0.0 {
            return Ok((zero, zero));
        }
        let (s, ds) = self.raw_series(z);
        Ok((Complex64::new(t * s.re, 0.0), Complex64::new(dt * s.re + t * ds.re, 0.0)))
    }

    /// Grid step that [`sample`](Self::sample) will use for a requested step.
    pub fn sample_step(&self, h_target: f64) -> f64 {
        match self.uniform {
            Some((_, dq)) => {
                let period = 2.0 * PI / dq;
                period / smooth_size((period / h_target).ceil().max(1.0) as usize) as f64
            }
            None => h_target,
        }
    }

    /// Tapered real values at `z_j = z_start + j h` for `j < count`.
    ///
    /// Uses one inverse FFT per call when the wavenumbers are equally spaced;
    /// `h` is then adjusted so that a whole number of samples spans the
    /// series period, and the adjusted step is returned.
    pub fn sample(&self, z_start: f64, h_target: f64, span: f64) -> (f64, Vec<f64>) {
        let Some((q0, dq)) = self.uniform else {
            let count = (span / h_target).ceil().max(1.0) as usize;
            let h = span / count as f64;
            let values = (0..count)
                .map(|j| {
                    let z = z_start + j as f64 * h;
                    self.eval(Complex64::new(z, 0.0)).map(|v| v.0.re).unwrap_or(0.0)
                })
                .collect();
            return (h, values);
        };
        let period = 2.0 * PI / dq;
        let h = self.sample_step(h_target);
        let m = (period / h).round() as usize;
        let count = ((span / h).ceil() as usize).max(1);
        // S(z_j) = Re[e^{i q0 z_j} sum_n c_n e^{i n dq z_start} e^{2 pi i n j / m}]
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (n, &c) in self.coeffs.iter().enumerate() {
            let phase = Complex64::new(0.0, n as f64 * dq * z_start).exp();
            buf[n % m] += c * phase;
        }
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_inverse(m).process(&mut buf);
        let values = (0..count)
            .map(|j| {
                let z = z_start + j as f64 * h;
                let s = (Complex64::new(0.0, q0 * z).exp() * buf[j % m]).re;
                self.taper(z).0 * s
            })
            .collect();
        (h, values)
    }
}

/// Smallest `n' >= n` with no prime factor above 5.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&k| {
            let mut r = k;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .unwrap()
}

fn detect_uniform(q: &[f64]) -> Option<(f64, f64)> {
    if q.len() < 2 {
        return q.first().map(|&q0| (q0, 1.0));
    }
    let dq = (q[q.len() - 1] - q[0]) / (q.len() - 1) as f64;
    let scale = q[q.len() - 1].abs();
    let ok = dq > 0.0
        && q
            .iter()
            .enumerate()
            .all(|(n, &qn)| (qn - (q[0] + n as f64 * dq)).abs() <= 1e-12 * scale);
    ok.then_some((q[0], dq))
}

/// Mode count needed to resolve a sample of the given length.
pub fn required_modes(correlation: &Correlation, length: f64) -> usize {
    ((MODES_PER_CORRELATION_LENGTH * correlation.eps() * length).ceil() as usize).max(MIN_MODES)
}

/// A realization drawn from stream 0 of `seed`.
pub fn synthesize_random(
    correlation: &Correlation,
    delta: f64,
    length: f64,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<PotentialSpec> {
    synthesize_realization(correlation, delta, length, seed, 0, opts)
}

/// Realization number `index` of the ensemble keyed by `base_seed`.
pub fn synthesize_realization(
    correlation: &Correlation,
    delta: f64,
    length: f64,
    base_seed: u64,
    index: u64,
    opts: &SynthesisOptions,
) -> Result<PotentialSpec> {
    correlation.validate()?;
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("length must be positive, got {length}")));
    }
    let eps = correlation.eps();
    let needed = required_modes(correlation, length);
    let modes = match opts.modes {
        Some(n) if n < needed => {
            return Err(Error::Configuration(format!(
                "{n} modes cannot resolve length {length} at eps {eps}; need at least {needed}"
            )))
        }
        Some(n) => n,
        None => needed,
    };
    let taper = opts.taper_width.unwrap_or(5.0 / eps);
    let q_max = SPECTRAL_CUTOFF * eps;
    let dq = q_max / modes as f64;
    let wavenumbers: Vec<f64> = (0..modes).map(|n| (n as f64 + 0.5) * dq).collect();
    let amplitudes: Vec<f64> = wavenumbers
        .iter()
        .map(|&q| (2.0 * correlation.spectral_density(q) * dq).sqrt())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    let phases: Vec<f64> = (0..modes).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let series = FourierSeries::new(amplitudes, wavenumbers, phases, taper, length)?;
    PotentialSpec::new(Family::FourierSeries(series), delta, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadTolerance};

    fn series(spec: &PotentialSpec) -> &FourierSeries {
        match &spec.family {
            Family::FourierSeries(s) => s,
            _ => unreachable!(),
        }
    }

    #[test]
    fn correlation_transform_values() {
        let w = correlation_fourier(&Correlation::gaussian(1.0));
        assert!((w - PI.sqrt() * (-1.0f64).exp()).abs() < 1e-15);
        assert!((w - 0.6520).abs() < 1e-4);
        let w = correlation_fourier(&Correlation::gaussian(0.5));
        assert!((w - 2.0 * PI.sqrt() * (-4.0f64).exp()).abs() < 1e-15);
        // Large eps: w(2) -> sqrt(pi)/eps.
        let w = correlation_fourier(&Correlation::gaussian(1e4));
        assert!((w * 1e4 / PI.sqrt() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn correlation_transform_matches_quadrature() {
        for &eps in &[0.5, 1.0, 2.0] {
            let c = Correlation::gaussian(eps);
            let tol = QuadTolerance {
                rel: 1e-13,
                ..Default::default()
            };
            let x = 7.0 / eps;
            let r = integrate(
                |z| Ok(c.correlation(z) * Complex64::new(0.0, 2.0 * z).exp()),
                -x,
                x,
                &tol,
            )
            .unwrap();
            let w = correlation_fourier(&c);
            assert!((r.value.re / w - 1.0).abs() < 1e-10, "eps {eps}");
        }
    }

    #[test]
    fn same_seed_same_coefficients() {
        let c = Correlation::gaussian(0.5);
        let o = SynthesisOptions::default();
        let a = synthesize_random(&c, 0.3, 200.0, 42, &o).unwrap();
        let b = synthesize_random(&c, 0.3, 200.0, 42, &o).unwrap();
        assert_eq!(series(&a).phases(), series(&b).phases());
        assert_eq!(series(&a).amplitudes(), series(&b).amplitudes());
        let d = synthesize_random(&c, 0.3, 200.0, 43, &o).unwrap();
        assert_ne!(series(&a).phases(), series(&d).phases());
        let e = synthesize_realization(&c, 0.3, 200.0, 42, 1, &o).unwrap();
        assert_ne!(series(&a).phases(), series(&e).phases());
    }

    #[test]
    fn too_few_modes_is_configuration_error() {
        let c = Correlation::gaussian(1.0);
        let o = SynthesisOptions {
            modes: Some(10),
            ..Default::default()
        };
        assert!(matches!(
            synthesize_random(&c, 0.1, 1000.0, 1, &o),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn spectrum_has_unit_variance() {
        let c = Correlation::gaussian(0.7);
        let spec = synthesize_random(&c, 0.1, 500.0, 1, &SynthesisOptions::default()).unwrap();
        let var: f64 = series(&spec).amplitudes().iter().map(|a| a * a / 2.0).sum();
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sample_variance_near_one() {
        let eps = 1.0;
        let length = 4000.0;
        let c = Correlation::gaussian(eps);
        let spec = synthesize_random(&c, 0.1, length, 7, &SynthesisOptions::default()).unwrap();
        let s = series(&spec);
        let (lo, hi) = s.analytic_interval();
        let (_, v) = s.sample(lo, 0.1, hi - lo);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        // Statistical tolerance a few times 1/sqrt(eps L0).
        assert!((var - 1.0).abs() < 4.0 / (eps * length).sqrt() * 3.0, "var {var}");
        assert!(mean.abs() < 4.0 / (eps * length).sqrt() * 3.0);
    }

    #[test]
    fn ensemble_correlation_matches() {
        let eps = 0.5;
        let c = Correlation::gaussian(eps);
        let o = SynthesisOptions::default();
        let lags: Vec<f64> = (0..=6).map(|k| k as f64 * 0.5 / eps).collect();
        let mut acc = vec![0.0; lags.len()];
        let seeds = 120;
        let z0 = 100.0;
        for seed in 0..seeds {
            let spec = synthesize_random(&c, 0.1, 200.0, seed, &o).unwrap();
            let s = series(&spec);
            let u0 = s.raw_series(Complex64::new(z0, 0.0)).0.re;
            for (k, &lag) in lags.iter().enumerate() {
                acc[k] += u0 * s.raw_series(Complex64::new(z0 + lag, 0.0)).0.re;
            }
        }
        for (k, &lag) in lags.iter().enumerate() {
            let est = acc[k] / seeds as f64;
            let se = (2.0 / seeds as f64).sqrt();
            assert!(
                (est - c.correlation(lag)).abs() < 4.0 * se,
                "lag {lag}: {est} vs {}",
                c.correlation(lag)
            );
        }
    }

    #[test]
    fn fft_sampling_matches_direct_sum() {
        let c = Correlation::gaussian(0.8);
        let spec = synthesize_random(&c, 0.2, 300.0, 3, &SynthesisOptions::default()).unwrap();
        let s = series(&spec);
        let (h, v) = s.sample(0.37, 0.05, 300.0);
        for j in (0..v.len()).step_by(97) {
            let z = 0.37 + j as f64 * h;
            let direct = s.eval(Complex64::new(z, 0.0)).unwrap().0.re;
            assert!((v[j] - direct).abs() < 1e-11, "z {z}: {} vs {direct}", v[j]);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let c = Correlation::gaussian(0.5);
        let spec = synthesize_random(&c, 0.2, 100.0, 9, &SynthesisOptions::default()).unwrap();
        let s = series(&spec);
        for &z in &[Complex64::new(40.0, 1.5), Complex64::new(55.0, 0.0), Complex64::new(3.0, 0.0)] {
            let h = 1e-5;
            let fd = (s.eval(z + h).unwrap().0 - s.eval(z - h).unwrap().0) / (2.0 * h);
            let d = s.eval(z).unwrap().1;
            assert!((fd - d).norm() < 1e-7 * d.norm().max(1.0));
        }
        assert!(matches!(
            s.eval(Complex64::new(3.0, 0.5)),
            Err(Error::TaperNotAnalytic { .. })
        ));
        assert_eq!(s.eval(Complex64::new(-1.0, 0.0)).unwrap().0.norm(), 0.0);
    }

    #[test]
    fn document_round_trip() {
        let c = Correlation::gaussian(0.5);
        let spec = synthesize_random(&c, 0.2, 50.0, 5, &SynthesisOptions::default()).unwrap();
        let doc = FourierSeriesDocument::from_spec(&spec).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        for key in ["delta", "eps", "amplitudes", "wavenumbers", "phases", "taper_width", "length"] {
            assert!(text.contains(key));
        }
        let back: FourierSeriesDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_spec().unwrap(), spec);
    }
}
