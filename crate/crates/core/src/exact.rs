//! Numerically exact reflection and transmission.
//!
//! The wave equation is integrated from the transmitted side to the incident
//! side along a line `Im z = Y` parallel to the real axis. For analytic
//! potentials this leaves the amplitudes unchanged while lifting the reflected
//! wave by `e^{2 k Y}` relative to the incident one, which keeps exponentially
//! small reflection above round-off.

use std::cell::RefCell;

use num_complex::Complex64;
use ode_solvers::dop_shared::IntegrationError;
use ode_solvers::{Dop853, OutputType, SVector, System};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    TransferMatrix,
    InvariantEmbedding,
    /// Piecewise-constant cells with exact per-cell propagators (real axis only).
    Layered,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    BelowNumericFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourShift {
    /// Half the distance to the nearest singularity or turning point.
    Auto,
    Off,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Symmetric integration half-width; `None` derives it from `tail_tol`.
    pub domain_halfwidth: Option<f64>,
    pub rtol: f64,
    /// Absolute tolerance in units of each state component's natural scale.
    pub atol: f64,
    pub tail_tol: f64,
    pub backend: Backend,
    pub contour: ContourShift,
    pub max_steps: u32,
    /// Cell width for the layered backend.
    pub layer_width: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            domain_halfwidth: None,
            rtol: 1e-12,
            atol: 1e-12,
            tail_tol: 1e-14,
            backend: Backend::InvariantEmbedding,
            contour: ContourShift::Auto,
            max_steps: 2_000_000,
            layer_width: 0.05,
        }
    }
}

impl SolveOptions {
    pub fn with_backend(backend: Backend) -> Self {
        SolveOptions {
            backend,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        positive("tail_tol", self.tail_tol)?;
        positive("layer_width", self.layer_width)?;
        if let Some(z) = self.domain_halfwidth {
            positive("domain_halfwidth", z)?;
        }
        if let ContourShift::Fixed(y) = self.contour {
            if !(y >= 0.0 && y.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "contour shift must be non-negative, got {y}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterResult {
    pub r: Complex64,
    pub t: Complex64,
    #[serde(rename = "R")]
    pub reflectance: f64,
    #[serde(rename = "T")]
    pub transmittance: f64,
    #[serde(rename = "ln_R")]
    pub ln_reflectance: f64,
    #[serde(rename = "ln_T")]
    pub ln_transmittance: f64,
    pub k_minus: f64,
    pub k_plus: f64,
    pub backend: Backend,
    pub status: Status,
    /// Estimated absolute error of `|r|`.
    pub r_floor: f64,
    pub contour_shift: f64,
    pub domain: (f64, f64),
}

/// `R` together with its logarithm, which survives where `R` underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogReflectance {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "ln_R")]
    pub ln_r: f64,
}

impl LogReflectance {
    pub fn from_ln(ln_r: f64) -> Self {
        LogReflectance {
            r: ln_r.exp(),
            ln_r,
        }
    }
}

/// Reflection off the spec by direct integration.
pub fn reflectance_exact(spec: &PotentialSpec, opts: &SolveOptions) -> Result<ScatterResult> {
    spec.validate()?;
    opts.validate()?;
    let (k_minus, k_plus) = spec.asymptotic_wavenumbers()?;
    if opts.backend == Backend::ClosedForm {
        return Err(Error::Configuration(
            "closed-form evaluation goes through reflectance_closed_form".into(),
        ));
    }
    let y = match opts.backend {
        Backend::Layered => 0.0,
        _ => contour_height(spec, opts)?,
    };
    let path = Path { spec, y };
    let (x_l, x_r) = domain(spec, opts, y)?;
    if spec.delta == 0.0 {
        return Ok(ScatterResult {
            r: Complex64::new(0.0, 0.0),
            t: Complex64::new(1.0, 0.0),
            reflectance: 0.0,
            transmittance: 1.0,
            ln_reflectance: f64::NEG_INFINITY,
            ln_transmittance: 0.0,
            k_minus,
            k_plus,
            backend: opts.backend,
            status: Status::Ok,
            r_floor: 0.0,
            contour_shift: y,
            domain: (x_l, x_r),
        });
    }
    let raw = match opts.backend {
        Backend::TransferMatrix => transfer_matrix(&path, x_l, x_r, k_minus, k_plus, opts)?,
        Backend::InvariantEmbedding => {
            invariant_embedding(&path, x_l, x_r, k_minus, k_plus, opts)?
        }
        Backend::Layered => layered(spec, x_l, x_r, k_minus, k_plus, opts.layer_width)?,
        Backend::ClosedForm => unreachable!(),
    };
    let tail_floor = opts.tail_tol * (-2.0 * k_minus.min(k_plus) * y).exp()
        * (1.0f64).max(1.0 / spec.eps)
        / 2.0;
    let r_floor = raw.r_error + tail_floor;
    let certified = raw.ln_abs_r > (100.0 * r_floor).ln();
    let ln_reflectance = 2.0 * raw.ln_abs_r;
    let ln_transmittance = (k_plus / k_minus).ln() + 2.0 * raw.ln_abs_t;
    Ok(ScatterResult {
        r: raw.r,
        t: raw.t,
        reflectance: ln_reflectance.exp(),
        transmittance: ln_transmittance.exp(),
        ln_reflectance,
        ln_transmittance,
        k_minus,
        k_plus,
        backend: opts.backend,
        status: if certified {
            Status::Ok
        } else {
            Status::BelowNumericFloor
        },
        r_floor,
        contour_shift: y,
        domain: (x_l, x_r),
    })
}

/// Closed forms for the Fermi step and sech^2 barrier.
pub fn reflectance_closed_form(spec: &PotentialSpec) -> Result<LogReflectance> {
    spec.validate()?;
    let (delta, eps) = (spec.delta, spec.eps);
    let pi = std::f64::consts::PI;
    match spec.family {
        Family::FermiStep => {
            let s = (1.0 - delta).sqrt();
            // R = [sh(pi (1-s)/eps) / sh(pi (1+s)/eps)]^2; 1 - s without cancellation.
            let a = pi * delta / (1.0 + s) / eps;
            let b = pi * (1.0 + s) / eps;
            Ok(LogReflectance::from_ln(2.0 * (ln_sinh(a) - ln_sinh(b))))
        }
        Family::SechSquared => {
            let x = 4.0 * delta / (eps * eps);
            let ln_sh2 = 2.0 * ln_sinh(pi / eps);
            let ln_num = if x >= 1.0 {
                2.0 * ln_cosh(0.5 * pi * (x - 1.0).sqrt())
            } else {
                // cos(pi mu / 2) = sin(pi (1 - mu) / 2), with 1 - mu = x / (1 + mu).
                let mu = (1.0 - x).sqrt();
                2.0 * (0.5 * pi * x / (1.0 + mu)).sin().ln()
            };
            Ok(LogReflectance::from_ln(ln_num - log_add_exp(ln_sh2, ln_num)))
        }
        _ => Err(Error::UnsupportedFamily(spec.family.name())),
    }
}

pub(crate) fn ln_sinh(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < 1e-3 {
        return x.ln() + x * x / 6.0;
    }
    x + (-(-2.0 * x).exp()).ln_1p() - std::f64::consts::LN_2
}

pub(crate) fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Potential evaluated along `z = x + iY`.
struct Path<'a> {
    spec: &'a PotentialSpec,
    y: f64,
}

impl Path<'_> {
    /// `(k^2, d k^2 / dz)`
    fn k2(&self, x: f64) -> Result<(Complex64, Complex64)> {
        let d = self.spec.delta;
        let (u, du) = if self.y == 0.0 {
            let (u, du) = self.spec.real_shape_and_gradient(x)?;
            (Complex64::new(u, 0.0), Complex64::new(du, 0.0))
        } else {
            self.spec.shape_and_gradient(Complex64::new(x, self.y))?
        };
        Ok((1.0 - d * u, -d * du))
    }
}

fn contour_height(spec: &PotentialSpec, opts: &SolveOptions) -> Result<f64> {
    let requested = match opts.contour {
        ContourShift::Off => return Ok(0.0),
        ContourShift::Fixed(y) => y,
        ContourShift::Auto => {
            let eps = spec.eps;
            let d = spec.delta;
            match spec.family {
                Family::FermiStep => 0.5 * std::f64::consts::PI / eps,
                Family::SechSquared => 0.5 * d.sqrt().acos() / eps,
                Family::GaussianBump => {
                    let depth = if d > 0.0 { (1.0 / d).ln().sqrt() } else { 2.0 };
                    (0.5 * depth).min(1.0) / eps
                }
                _ => 0.0,
            }
        }
    };
    if requested == 0.0 {
        return Ok(0.0);
    }
    if !spec.is_analytic() || !spec.is_elementary() {
        return Err(Error::Configuration(format!(
            "contour shift needs a closed-form family, not {}",
            spec.family.name()
        )));
    }
    // Keep the principal square root continuous along the path.
    let mut y = requested;
    for _ in 0..8 {
        if root_is_continuous(spec, y) {
            return Ok(y);
        }
        if matches!(opts.contour, ContourShift::Fixed(_)) {
            return Err(Error::Configuration(format!(
                "contour at Im z = {y} crosses a branch cut of sqrt(1 - delta U)"
            )));
        }
        y *= 0.5;
    }
    Ok(0.0)
}

fn root_is_continuous(spec: &PotentialSpec, y: f64) -> bool {
    let eps = spec.eps;
    let h = 0.05 / eps;
    let n = (40.0 / eps / h) as i64;
    let mut prev: Option<Complex64> = None;
    for j in -n..=n {
        let z = Complex64::new(j as f64 * h, y);
        let Ok(u) = spec.shape(z) else {
            return false;
        };
        let k2 = 1.0 - spec.delta * u;
        if k2.norm() < 1e-3 {
            return false;
        }
        let k = k2.sqrt();
        if let Some(p) = prev {
            if (k - p).norm() > 0.25 * p.norm() {
                return false;
            }
        }
        prev = Some(k);
    }
    true
}

fn domain(spec: &PotentialSpec, opts: &SolveOptions, y: f64) -> Result<(f64, f64)> {
    let support = match &spec.family {
        Family::FourierSeries(s) => Some((-1.0, s.length() + 1.0)),
        Family::Tabulated(t) => Some(t.span()),
        _ => None,
    };
    if let Some((lo, hi)) = support {
        return Ok(if spec.mirrored { (-hi, -lo) } else { (lo, hi) });
    }
    if let Some(z) = opts.domain_halfwidth {
        return Ok((-z, z));
    }
    let tails = spec.tail_values();
    let step = 0.5 / spec.eps;
    let settled = |x: f64, target: f64| -> Result<bool> {
        for h in [0.0, 0.5 * y, y] {
            let u = spec.shape(Complex64::new(x, h))?;
            if spec.delta * (u - target).norm() >= opts.tail_tol {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let reach = |sign: f64, target: f64| -> Result<f64> {
        for j in 1..=20_000 {
            let x = sign * j as f64 * step;
            if settled(x, target)? {
                return Ok(x);
            }
        }
        Err(Error::Configuration(
            "potential tail does not settle within the search range".into(),
        ))
    };
    let x_l = reach(-1.0, tails.u_minus)?;
    let x_r = reach(1.0, tails.u_plus)?;
    Ok((x_l, x_r))
}

struct RawSolution {
    r: Complex64,
    t: Complex64,
    ln_abs_r: f64,
    ln_abs_t: f64,
    r_error: f64,
}

type State4 = SVector<f64, 4>;
type State6 = SVector<f64, 6>;

struct WaveSystem<'a> {
    path: &'a Path<'a>,
    failure: &'a RefCell<Option<Error>>,
}

impl WaveSystem<'_> {
    fn k2(&self, x: f64) -> (Complex64, Complex64) {
        match self.path.k2(x) {
            Ok(v) => v,
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
            }
        }
    }
}

impl System<f64, State4> for WaveSystem<'_> {
    fn system(&self, x: f64, y: &State4, dy: &mut State4) {
        let (k2, _) = self.k2(x);
        let psi = Complex64::new(y[0], y[1]);
        let d2 = -k2 * psi;
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = d2.re;
        dy[3] = d2.im;
    }
}

struct EmbeddingSystem<'a>(WaveSystem<'a>);

impl System<f64, State6> for EmbeddingSystem<'_> {
    fn system(&self, x: f64, y: &State6, dy: &mut State6) {
        let (k2, dk2) = self.0.k2(x);
        let k = k2.sqrt();
        let g = dk2 / (4.0 * k2);
        let rho = Complex64::new(y[0], y[1]);
        let i = Complex64::new(0.0, 1.0);
        let drho = -2.0 * i * k * rho + g * (1.0 - rho * rho);
        let dlam = g * rho;
        dy[0] = drho.re;
        dy[1] = drho.im;
        dy[2] = dlam.re;
        dy[3] = dlam.im;
        dy[4] = k.re;
        dy[5] = k.im;
    }
}

fn map_integration_error(e: IntegrationError, fallback_x: f64) -> Error {
    let (x, reason) = match e {
        IntegrationError::MaxNumStepReached { x, n_step } => {
            (x, format!("step budget of {n_step} exhausted"))
        }
        IntegrationError::StepSizeUnderflow { x } => (x, "step size underflow".to_string()),
        IntegrationError::StiffnessDetected { x } => (x, "stiffness detected".to_string()),
    };
    Error::StepControl {
        last_z: if x.is_finite() { x } else { fallback_x },
        reason,
    }
}

/// `dy/dx = f(x, y)` rewritten in `s = x_start - x`, integrated forward from
/// `s = 0` (the solver misbehaves on backward or offset starts). Components
/// are divided by their natural scales so one tolerance pair fits all. The
/// last of the `M = N + 1` components carries `s` itself, which keeps the
/// system autonomous: the solver's final stage node is wrong for explicit
/// dependence on the independent variable.
struct Reversed<S, const N: usize> {
    inner: S,
    x_start: f64,
    scales: SVector<f64, N>,
}

impl<const N: usize, const M: usize, S: System<f64, SVector<f64, N>>>
    System<f64, SVector<f64, M>> for Reversed<S, N>
{
    fn system(&self, _s: f64, y: &SVector<f64, M>, dy: &mut SVector<f64, M>) {
        let physical: SVector<f64, N> = y.fixed_rows::<N>(0).component_mul(&self.scales);
        let mut d = SVector::<f64, N>::zeros();
        self.inner.system(self.x_start - y[N], &physical, &mut d);
        dy.fixed_rows_mut::<N>(0)
            .copy_from(&(-d.component_div(&self.scales)));
        dy[N] = 1.0;
    }
}

fn run<const N: usize, const M: usize, S: System<f64, SVector<f64, N>>>(
    system: S,
    x_r: f64,
    x_l: f64,
    y0: SVector<f64, N>,
    scales: SVector<f64, N>,
    opts: &SolveOptions,
) -> std::result::Result<(Vec<SVector<f64, N>>, usize), IntegrationError> {
    assert_eq!(M, N + 1);
    let mut start = SVector::<f64, M>::zeros();
    start
        .fixed_rows_mut::<N>(0)
        .copy_from(&y0.component_div(&scales));
    let mut solver = Dop853::from_param(
        Reversed {
            inner: system,
            x_start: x_r,
            scales,
        },
        0.0,
        x_r - x_l,
        0.0,
        start,
        opts.rtol,
        opts.atol,
        0.9,
        0.0,
        0.333,
        6.0,
        (x_r - x_l).abs(),
        0.0,
        opts.max_steps,
        u32::MAX,
        OutputType::Sparse,
    );
    let stats = solver.integrate().map_err(|e| match e {
        IntegrationError::MaxNumStepReached { x, n_step } => {
            IntegrationError::MaxNumStepReached { x: x_r - x, n_step }
        }
        IntegrationError::StepSizeUnderflow { x } => {
            IntegrationError::StepSizeUnderflow { x: x_r - x }
        }
        IntegrationError::StiffnessDetected { x } => {
            IntegrationError::StiffnessDetected { x: x_r - x }
        }
    })?;
    let trace = solver
        .y_out()
        .iter()
        .map(|y| y.fixed_rows::<N>(0).component_mul(&scales))
        .collect();
    Ok((trace, stats.accepted_steps as usize))
}

fn transfer_matrix(
    path: &Path,
    x_l: f64,
    x_r: f64,
    k_minus: f64,
    k_plus: f64,
    opts: &SolveOptions,
) -> Result<RawSolution> {
    let i = Complex64::new(0.0, 1.0);
    let y = path.y;
    let failure = RefCell::new(None);
    let sys = WaveSystem {
        path,
        failure: &failure,
    };
    // psi = e^{i k_+ (z - z_R)} at the right end.
    let y0 = State4::new(1.0, 0.0, 0.0, k_plus);
    let scales = State4::new(1.0, 1.0, k_plus, k_plus);
    let (trace, steps) =
        run::<4, 5, _>(sys, x_r, x_l, y0, scales, opts).map_err(|e| map_integration_error(e, x_r))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let last = trace.last().expect("solver records the end state");
    let psi = Complex64::new(last[0], last[1]);
    let dpsi = Complex64::new(last[2], last[3]);
    let max_norm = trace
        .iter()
        .map(|s| s[0].hypot(s[1]).max(s[2].hypot(s[3]) / k_minus))
        .fold(0.0, f64::max);
    // Amplitudes of e^{+-i k_- (z - z_L)}.
    let a_tilde = 0.5 * (psi + dpsi / (i * k_minus));
    let b_tilde = 0.5 * (psi - dpsi / (i * k_minus));
    if a_tilde.norm() == 0.0 || !a_tilde.is_finite() {
        return Err(Error::StepControl {
            last_z: x_l,
            reason: "degenerate incident amplitude".into(),
        });
    }
    let z_l = Complex64::new(x_l, y);
    let z_r = Complex64::new(x_r, y);
    // r = (B~/A~) e^{2 i k_- z_L}, t = e^{-i k_+ z_R} e^{i k_- z_L} / A~
    let ratio = b_tilde / a_tilde;
    let r = ratio * (2.0 * i * k_minus * z_l).exp();
    let t = (i * (k_minus * z_l - k_plus * z_r)).exp() / a_tilde;
    let ln_abs_r = ratio.norm().ln() - 2.0 * k_minus * y;
    let ln_abs_t = (-k_minus * y + k_plus * y) - a_tilde.norm().ln();
    let scale = (-2.0 * k_minus * y).exp() / a_tilde.norm();
    let r_error =
        10.0 * scale * (max_norm * (opts.rtol + f64::EPSILON) + opts.atol) * (steps as f64).sqrt();
    Ok(RawSolution {
        r,
        t,
        ln_abs_r,
        ln_abs_t,
        r_error,
    })
}

fn invariant_embedding(
    path: &Path,
    x_l: f64,
    x_r: f64,
    k_minus: f64,
    k_plus: f64,
    opts: &SolveOptions,
) -> Result<RawSolution> {
    let i = Complex64::new(0.0, 1.0);
    let y = path.y;
    let scales = embedding_scales(path, x_l, x_r)?;
    let failure = RefCell::new(None);
    let sys = EmbeddingSystem(WaveSystem {
        path,
        failure: &failure,
    });
    let (trace, steps) = run::<6, 7, _>(sys, x_r, x_l, State6::zeros(), scales, opts)
        .map_err(|e| map_integration_error(e, x_r))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let last = trace.last().expect("solver records the end state");
    let rho = Complex64::new(last[0], last[1]);
    let lam = Complex64::new(last[2], last[3]);
    let phi = Complex64::new(last[4], last[5]);
    if !(rho.is_finite() && lam.is_finite() && phi.is_finite()) {
        return Err(Error::StepControl {
            last_z: x_l,
            reason: "non-finite embedding state".into(),
        });
    }
    let max_rho = trace.iter().map(|s| s[0].hypot(s[1])).fold(0.0, f64::max);
    let z_l = Complex64::new(x_l, y);
    let z_r = Complex64::new(x_r, y);
    let r = rho * (2.0 * i * k_minus * z_l).exp();
    let log_a = 0.5 * (k_plus / k_minus).ln() + lam + i * (k_plus * z_r + phi - k_minus * z_l);
    let t = (-log_a).exp();
    let ln_abs_r = rho.norm().ln() - 2.0 * k_minus * y;
    let ln_abs_t = -log_a.re;
    let r_error = 10.0
        * (max_rho * (opts.rtol + f64::EPSILON) + opts.atol * scales[0])
        * (steps as f64).sqrt()
        * (-2.0 * k_minus * y).exp();
    Ok(RawSolution {
        r,
        t,
        ln_abs_r,
        ln_abs_t,
        r_error,
    })
}

/// Natural magnitudes of `(rho, lambda, Phi)` along the path: the adiabatic
/// reflection amplitude `|k'/(4k^2)|`, its accumulated effect on `lambda`, and
/// the accumulated action. Fails when `k^2` nearly vanishes on the path.
fn embedding_scales(path: &Path, x_l: f64, x_r: f64) -> Result<State6> {
    let n = 4000;
    let dx = (x_r - x_l) / n as f64;
    let mut rho = 0.0f64;
    let mut g_sum = 0.0;
    let mut re_k = 0.0;
    let mut im_k = 0.0;
    for j in 0..=n {
        let x = x_l + j as f64 * dx;
        let (k2, dk2) = path.k2(x)?;
        if k2.norm() < 1e-6 {
            return Err(Error::UnsupportedRegime(format!(
                "k^2 vanishes near z = {x} + {}i (turning point on the path)",
                path.y
            )));
        }
        let k = k2.sqrt();
        let g = (dk2 / (4.0 * k2)).norm();
        rho = rho.max(g / (2.0 * k.norm()));
        g_sum += g * dx;
        re_k += k.re.abs() * dx;
        im_k += k.im.abs() * dx;
    }
    let rho = rho.max(1e-300);
    let lam = (rho * g_sum).max(1e-4 * rho);
    let im_k = im_k.max(1e-4 * re_k);
    Ok(State6::new(rho, rho, lam, lam, re_k, im_k))
}

/// Staircase propagation for real potentials, for long samples.
fn layered(
    spec: &PotentialSpec,
    x_l: f64,
    x_r: f64,
    k_minus: f64,
    k_plus: f64,
    h_target: f64,
) -> Result<RawSolution> {
    let span = x_r - x_l;
    let (h, u) = match &spec.family {
        Family::FourierSeries(s) if !spec.mirrored => {
            let h = s.sample_step(h_target);
            s.sample(x_l + 0.5 * h, h_target, span)
        }
        _ => {
            let n = (span / h_target).ceil().max(1.0) as usize;
            let h = span / n as f64;
            let mut u = Vec::with_capacity(n);
            for j in 0..n {
                u.push(spec.real_shape_and_gradient(x_l + (j as f64 + 0.5) * h)?.0);
            }
            (h, u)
        }
    };
    let n = u.len();
    let x_end = x_l + n as f64 * h;
    let i = Complex64::new(0.0, 1.0);
    let mut psi = Complex64::new(1.0, 0.0);
    let mut dpsi = i * k_plus;
    let mut log_scale = 0.0;
    let delta = spec.delta;
    for j in (0..n).rev() {
        let k2 = 1.0 - delta * u[j];
        let (a, b, c, d) = if k2 > 1e-14 {
            let k = k2.sqrt();
            let (s, co) = (k * h).sin_cos();
            (co, -s / k, k * s, co)
        } else if k2 < -1e-14 {
            let q = (-k2).sqrt();
            let (s, co) = ((q * h).sinh(), (q * h).cosh());
            (co, -s / q, -q * s, co)
        } else {
            (1.0, -h, 0.0, 1.0)
        };
        let p = a * psi + b * dpsi;
        dpsi = c * psi + d * dpsi;
        psi = p;
        let m = psi.norm().max(dpsi.norm());
        if m > 1e100 {
            psi /= m;
            dpsi /= m;
            log_scale += m.ln();
        }
    }
    let a_tilde = 0.5 * (psi + dpsi / (i * k_minus));
    let b_tilde = 0.5 * (psi - dpsi / (i * k_minus));
    let ratio = b_tilde / a_tilde;
    let r = ratio * (2.0 * i * k_minus * x_l).exp();
    let ln_abs_t = -a_tilde.norm().ln() - log_scale;
    let t = (i * (k_minus * x_l - k_plus * x_end)).exp() / a_tilde * (-log_scale).exp();
    let r_error = 10.0 * f64::EPSILON * (n as f64).sqrt();
    Ok(RawSolution {
        r,
        t,
        ln_abs_r: ratio.norm().ln(),
        ln_abs_t,
        r_error,
    })
}
