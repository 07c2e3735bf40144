//! First-order Born reflection `R = (delta^2/4) |int U(eps z) e^{2iz} dz|^2`.
//!
//! Step-like shapes do not decay at both ends, so the amplitude is taken in
//! the integrated-by-parts form `(i/2) int U_z e^{2iz} dz` with the purely
//! oscillating boundary term dropped. For decaying shapes the two forms agree.
//!
//! The transform is exponentially small in `1/eps` for the analytic families,
//! which a real-axis quadrature cannot resolve. Those are evaluated on a line
//! moved into the upper half plane, picking up the residue of the first pole
//! row on the way.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{ln_sinh, LogReflectance};
use crate::model::{Family, PotentialSpec};
use crate::quadrature::{integrate, QuadTolerance};
use crate::random::FourierSeries;
use crate::tabulated::Tabulated;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BornMethod {
    /// Contour shift for the closed-form families, per-mode sums for series,
    /// and exact piecewise-linear integration for tables.
    Auto,
    /// Adaptive quadrature along the real axis.
    RealAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRegularization {
    /// Integrate by parts and drop the oscillating boundary term.
    ByParts,
    /// Refuse shapes whose two tails differ.
    Reject,
}

#[derive(Debug, Clone, Copy)]
pub struct BornOptions {
    /// Half-width of the quadrature window; `None` picks one from the decay rate.
    pub window: Option<f64>,
    pub method: BornMethod,
    pub tails: TailRegularization,
    pub tol: QuadTolerance,
}

impl Default for BornOptions {
    fn default() -> Self {
        BornOptions {
            window: None,
            method: BornMethod::Auto,
            tails: TailRegularization::ByParts,
            tol: QuadTolerance {
                abs: 0.0,
                rel: 1e-13,
                max_intervals: 20_000,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BornStatus {
    Ok,
    /// `R` is below the smallest normal double; only `ln_R` is meaningful.
    FirstOrderUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornResult {
    #[serde(rename = "R")]
    pub reflectance: f64,
    #[serde(rename = "ln_R")]
    pub ln_reflectance: f64,
    /// Phase of the Fourier amplitude.
    pub phase: f64,
    /// Estimated relative error of the amplitude.
    pub rel_error: f64,
    pub method: BornMethod,
    pub status: BornStatus,
}

/// Amplitude `I` held as `e^{ln_scale} * value` so that tiny transforms survive.
#[derive(Debug, Clone, Copy)]
struct Amplitude {
    value: Complex64,
    ln_scale: f64,
    rel_error: f64,
}

impl Amplitude {
    fn plain(value: Complex64, rel_error: f64) -> Self {
        Amplitude {
            value,
            ln_scale: 0.0,
            rel_error,
        }
    }

    fn ln_abs(&self) -> f64 {
        self.value.norm().ln() + self.ln_scale
    }
}

/// Born reflectance by numerical evaluation of the Fourier integral.
pub fn reflectance_born(spec: &PotentialSpec, opts: &BornOptions) -> Result<BornResult> {
    spec.validate()?;
    let tails = spec.tail_values();
    if opts.tails == TailRegularization::Reject && tails.u_minus != tails.u_plus {
        return Err(Error::Configuration(format!(
            "{} shape does not decay on both sides and tail regularization is disabled",
            spec.family.name()
        )));
    }
    let amp = match opts.method {
        BornMethod::RealAxis => real_axis(spec, opts)?,
        BornMethod::Auto => match &spec.family {
            Family::FermiStep | Family::SechSquared => pole_residue(spec, opts)?,
            Family::GaussianBump => gaussian_line(spec, opts)?,
            Family::FourierSeries(s) => Amplitude::plain(series_amplitude(s), 1e-14),
            Family::Tabulated(t) => Amplitude::plain(table_amplitude(t), 1e-14),
        },
    };
    // The amplitude is conjugated by mirroring; |I| is unchanged.
    let phase = if spec.mirrored {
        -amp.value.arg()
    } else {
        amp.value.arg()
    };
    Ok(finish(spec.delta, amp.ln_abs(), phase, amp.rel_error, opts.method))
}

fn finish(delta: f64, ln_abs: f64, phase: f64, rel_error: f64, method: BornMethod) -> BornResult {
    if delta == 0.0 {
        return BornResult {
            reflectance: 0.0,
            ln_reflectance: f64::NEG_INFINITY,
            phase,
            rel_error,
            method,
            status: BornStatus::Ok,
        };
    }
    let ln_r = 2.0 * delta.ln() - 2.0 * std::f64::consts::LN_2 + 2.0 * ln_abs;
    // delta^2 enters as an exact factor so that R scales as delta^2 bit for bit.
    let reflectance = 0.25 * delta * delta * (2.0 * ln_abs).exp();
    BornResult {
        reflectance,
        ln_reflectance: ln_r,
        phase,
        rel_error,
        method,
        status: if ln_r < f64::MIN_POSITIVE.ln() {
            BornStatus::FirstOrderUnderflow
        } else {
            BornStatus::Ok
        },
    }
}

/// Analytic Born reflectance for the three closed-form families.
pub fn born_closed_form(spec: &PotentialSpec) -> Result<LogReflectance> {
    spec.validate()?;
    let (d, e) = (spec.delta, spec.eps);
    if d == 0.0 && spec.is_elementary() {
        return Ok(LogReflectance { r: 0.0, ln_r: f64::NEG_INFINITY });
    }
    let ln_r = match spec.family {
        // (delta^2/4) (pi/eps)^2 / sh^2(2 pi/eps)
        Family::FermiStep => {
            2.0 * d.ln() - 2.0 * std::f64::consts::LN_2 + 2.0 * (PI / e).ln()
                - 2.0 * ln_sinh(2.0 * PI / e)
        }
        // (pi^2 delta^2 / eps^4) / sh^2(pi/eps)
        Family::SechSquared => 2.0 * (PI * d).ln() - 4.0 * e.ln() - 2.0 * ln_sinh(PI / e),
        // (pi/4) (delta/eps)^2 e^{-2/eps^2}
        Family::GaussianBump => (PI / 4.0).ln() + 2.0 * (d / e).ln() - 2.0 / (e * e),
        _ => return Err(Error::UnsupportedFamily(spec.family.name())),
    };
    Ok(LogReflectance::from_ln(ln_r))
}

fn default_window(spec: &PotentialSpec) -> Result<f64> {
    let e = spec.eps;
    match spec.family {
        Family::FermiStep | Family::SechSquared => Ok(40.0 / e),
        Family::GaussianBump => Ok(8.0 / e),
        _ => Err(Error::UnsupportedFamily(spec.family.name())),
    }
}

fn unmirrored(spec: &PotentialSpec) -> PotentialSpec {
    let mut base = spec.clone();
    base.mirrored = false;
    base
}

fn real_axis(spec: &PotentialSpec, opts: &BornOptions) -> Result<Amplitude> {
    let (lo, hi) = match &spec.family {
        Family::Tabulated(t) => t.span(),
        Family::FourierSeries(s) => (0.0, s.length()),
        _ => {
            let x = match opts.window {
                Some(x) => x,
                None => default_window(spec)?,
            };
            (-x, x)
        }
    };
    let base = unmirrored(spec);
    let half_i = Complex64::new(0.0, 0.5);
    let r = integrate(
        |x| {
            let (_, du) = base.shape_and_gradient(Complex64::new(x, 0.0))?;
            Ok(half_i * du * Complex64::new(0.0, 2.0 * x).exp())
        },
        lo,
        hi,
        &opts.tol,
    )?
    .require(&opts.tol)?;
    let rel = r.error / r.value.norm();
    Ok(Amplitude::plain(r.value, rel))
}

/// Shifts the line to between the first and second pole rows and adds the
/// residue of the first pole, `I = residue + line`.
fn pole_residue(spec: &PotentialSpec, opts: &BornOptions) -> Result<Amplitude> {
    let e = spec.eps;
    let base = unmirrored(spec);
    let spacing = match spec.family {
        Family::FermiStep => 2.0 * PI / e,
        _ => PI / e,
    };
    let y1 = spec
        .lowest_pole_height()
        .expect("closed-form step and barrier have poles");
    let y2 = y1 + 0.5 * spacing;
    let z1 = Complex64::new(0.0, y1);
    let half_i = Complex64::new(0.0, 0.5);
    let i = Complex64::new(0.0, 1.0);

    // (i/2) U_z e^{2i(z - z1)}, with e^{-2 y1} pulled out.
    let residue_integrand = |z: Complex64| -> Result<Complex64> {
        let (_, du) = base.shape_and_gradient(z)?;
        Ok(half_i * du * (2.0 * i * (z - z1)).exp())
    };
    let radius = (0.25 * spacing).min(0.5);
    let j_res = circle(&residue_integrand, z1, radius, 128)?;
    let j_coarse = circle(&residue_integrand, z1, radius, 64)?;
    let res_err = (j_res - j_coarse).norm();

    let shift = (-2.0 * (y2 - y1)).exp();
    let x = match opts.window {
        Some(x) => x,
        None => default_window(spec)?,
    };
    let tol = QuadTolerance {
        abs: opts.tol.rel * j_res.norm() / shift,
        rel: 0.0,
        ..opts.tol
    };
    let line = integrate(
        |t| {
            let (_, du) = base.shape_and_gradient(Complex64::new(t, y2))?;
            Ok(half_i * du * Complex64::new(0.0, 2.0 * t).exp())
        },
        -x,
        x,
        &tol,
    )?
    .require(&tol)?;
    let value = j_res + shift * line.value;
    Ok(Amplitude {
        value,
        ln_scale: -2.0 * y1,
        rel_error: (res_err + shift * line.error) / value.norm(),
    })
}

/// Trapezoid rule on a circle, `oint f dz`, spectrally accurate for analytic `f`.
fn circle<F>(f: &F, center: Complex64, radius: f64, n: usize) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let w = Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64);
        // dz = i w dtheta
        sum += f(center + w)? * Complex64::new(0.0, 1.0) * w;
    }
    Ok(sum * (2.0 * PI / n as f64))
}

/// On `Im z = 1/eps^2` the Gaussian integrand `e^{-(eps z)^2 + 2iz}` loses its
/// oscillation; the exponent is written out so that large `e^{1/eps^2}`
/// factors cancel before exponentiation.
fn gaussian_line(spec: &PotentialSpec, opts: &BornOptions) -> Result<Amplitude> {
    let e = spec.eps;
    let y = 1.0 / (e * e);
    let ln_scale = -1.0 / (e * e);
    let x = match opts.window {
        Some(x) => x,
        None => default_window(spec)?,
    };
    let i = Complex64::new(0.0, 1.0);
    let r = integrate(
        |t| {
            let z = Complex64::new(t, y);
            Ok((-(e * z) * (e * z) + 2.0 * i * z - ln_scale).exp())
        },
        -x,
        x,
        &opts.tol,
    )?
    .require(&opts.tol)?;
    Ok(Amplitude {
        value: r.value,
        ln_scale,
        rel_error: r.error / r.value.norm(),
    })
}

/// `int_a^b e^{ikz} dz` without cancellation at small `k (b - a)`.
fn exp_integral(k: f64, a: f64, b: f64) -> Complex64 {
    let h = 0.5 * (b - a);
    let x = k * h;
    let sinc = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    Complex64::from_polar(2.0 * h * sinc, k * 0.5 * (a + b))
}

/// `int_0^L T(z) e^{ikz} dz` for the raised-cosine ramps of width `w`.
fn tapered_transform(k: f64, w: f64, l: f64) -> Complex64 {
    if w == 0.0 {
        return exp_integral(k, 0.0, l);
    }
    let p = PI / w;
    // Rising ramp: 1/2 - (e^{ipz} + e^{-ipz})/4 on [0, w].
    let rise = 0.5 * exp_integral(k, 0.0, w)
        - 0.25 * (exp_integral(k + p, 0.0, w) + exp_integral(k - p, 0.0, w));
    let flat = exp_integral(k, w, l - w);
    // Falling ramp: 1/2 - (e^{ip(L-z)} + e^{-ip(L-z)})/4 on [L - w, L].
    let fall = 0.5 * exp_integral(k, l - w, l)
        - 0.25
            * (Complex64::from_polar(1.0, p * l) * exp_integral(k - p, l - w, l)
                + Complex64::from_polar(1.0, -p * l) * exp_integral(k + p, l - w, l));
    rise + flat + fall
}

/// `U = T(z) Re sum c_n e^{i q_n z}`, transformed mode by mode.
fn series_amplitude(s: &FourierSeries) -> Complex64 {
    let (w, l) = (s.taper_width(), s.length());
    s.coefficients()
        .iter()
        .zip(s.wavenumbers())
        .map(|(&c, &q)| {
            0.5 * (c * tapered_transform(q + 2.0, w, l) + c.conj() * tapered_transform(2.0 - q, w, l))
        })
        .sum()
}

/// By-parts form on the linear interpolant of the samples, exact per cell.
fn table_amplitude(t: &Tabulated) -> Complex64 {
    let (z, u) = (t.grid(), t.values());
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..z.len() - 1 {
        let slope = (u[j + 1] - u[j]) / (z[j + 1] - z[j]);
        sum += slope
            * (Complex64::from_polar(1.0, 2.0 * z[j + 1]) - Complex64::from_polar(1.0, 2.0 * z[j]));
    }
    0.25 * sum
}
