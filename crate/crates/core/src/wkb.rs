//! Complex turning points and the quasiclassical reflection `R = e^{-4 gamma}`.
//!
//! `gamma = Im int_{z_r}^{z0} sqrt(1 - delta U) dz` runs from a real point to
//! the zero `z0` of `1 - delta U` in the upper half plane. The root is taken
//! positive on the real axis and followed continuously along the path; the
//! square-root behaviour at `z0` is removed by `z = z0 - tau^2 (z0 - a)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, PotentialSpec};
use crate::quadrature::{integrate, QuadTolerance};

/// A point of the complex `z` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexPoint {
    fn from(z: Complex64) -> Self {
        ComplexPoint { re: z.re, im: z.im }
    }
}

impl From<ComplexPoint> for Complex64 {
    fn from(p: ComplexPoint) -> Self {
        Complex64::new(p.re, p.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub z1: ComplexPoint,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub z0: ComplexPoint,
    pub gamma: f64,
    /// `1 / (delta |dU/dz|)` at `z0`.
    pub smoothness: f64,
    pub residual: f64,
    pub nearest_singularity: Option<Singularity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WkbOptions {
    /// `Im z` search range; `None` picks one per family.
    pub strip: Option<(f64, f64)>,
    /// Seed spacing along `Re z`, in units of `1/eps`.
    pub seed_re: f64,
    /// Seed spacing along `Im z`, in units of `1/eps`.
    pub seed_im: f64,
    pub root_tol: f64,
    pub quad_tol: f64,
    /// Real starting point of the action integral; `None` uses `Re z0`.
    pub start: Option<f64>,
}

impl Default for WkbOptions {
    fn default() -> Self {
        WkbOptions {
            strip: None,
            seed_re: 0.5,
            seed_im: 0.2,
            root_tol: 1e-10,
            quad_tol: 1e-12,
            start: None,
        }
    }
}

impl WkbOptions {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("seed_re", self.seed_re),
            ("seed_im", self.seed_im),
            ("root_tol", self.root_tol),
            ("quad_tol", self.quad_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some((lo, hi)) = self.strip {
            if !(lo >= 0.0 && hi > lo) {
                return Err(Error::InvalidParameter(format!("empty search strip ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPointSet {
    /// Sorted by `gamma`, smallest first.
    pub points: Vec<TurningPoint>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WkbResult {
    #[serde(rename = "R")]
    pub reflectance: f64,
    #[serde(rename = "ln_R")]
    pub ln_reflectance: f64,
    pub turning_point: Option<TurningPoint>,
    /// Set when `delta eps / (1 - delta)` is not small.
    pub warning: Option<String>,
}

/// Largest `delta eps / (1 - delta)` accepted without a warning.
pub const NEAR_BARRIER_LIMIT: f64 = 0.1;

fn require_analytic(spec: &PotentialSpec) -> Result<()> {
    spec.validate()?;
    if !spec.is_analytic() {
        return Err(Error::UnsupportedFamily(spec.family.name()));
    }
    Ok(())
}

/// Search window `(re_lo, re_hi, im_lo, im_hi)`.
fn search_window(spec: &PotentialSpec, opts: &WkbOptions) -> (f64, f64, f64, f64) {
    let e = spec.eps;
    let d = spec.delta;
    let pi = std::f64::consts::PI;
    let (re_lo, re_hi, im_hi) = match &spec.family {
        Family::FermiStep => {
            let shift = (1.0 / (1.0 - d)).ln();
            let (a, b) = if spec.mirrored { (-shift, 0.0) } else { (0.0, shift) };
            ((a - 5.0) / e, (b + 5.0) / e, 2.0 * pi / e)
        }
        Family::SechSquared => (-5.0 / e, 5.0 / e, pi / e),
        Family::GaussianBump => {
            let depth = if d > 0.0 { (1.0 / d).ln().sqrt() } else { 0.0 };
            (-3.0 / e, 3.0 / e, (depth + 1.0) / e)
        }
        Family::FourierSeries(s) => {
            let (lo, hi) = s.analytic_interval();
            let (lo, hi) = if spec.mirrored { (-hi, -lo) } else { (lo, hi) };
            (lo, hi, 3.0 / e)
        }
        Family::Tabulated(_) => (0.0, 0.0, 0.0),
    };
    let (im_lo, im_hi) = opts.strip.unwrap_or((0.0, im_hi));
    (re_lo, re_hi, im_lo, im_hi)
}

fn analytic_seeds(spec: &PotentialSpec) -> Vec<Complex64> {
    let (d, e) = (spec.delta, spec.eps);
    let pi = std::f64::consts::PI;
    let sign = if spec.mirrored { -1.0 } else { 1.0 };
    match spec.family {
        Family::FermiStep => vec![Complex64::new(sign * (1.0 / (1.0 - d)).ln() / e, pi / e)],
        Family::SechSquared => vec![
            Complex64::new(0.0, d.sqrt().acos() / e),
            Complex64::new(0.0, (-d.sqrt()).acos() / e),
        ],
        Family::GaussianBump => vec![Complex64::new(0.0, (1.0 / d).ln().sqrt() / e)],
        _ => Vec::new(),
    }
}

/// `(1 - delta U, -delta dU/dz)` at complex `z`.
fn k2_and_slope(spec: &PotentialSpec, z: Complex64) -> Result<(Complex64, Complex64)> {
    let (u, du) = spec.shape_and_gradient(z)?;
    Ok((1.0 - spec.delta * u, -spec.delta * du))
}

fn newton(spec: &PotentialSpec, seed: Complex64, window: (f64, f64, f64, f64)) -> Option<Complex64> {
    let (re_lo, re_hi, im_lo, im_hi) = window;
    let inside = |z: Complex64| z.re >= re_lo && z.re <= re_hi && z.im > im_lo && z.im <= im_hi;
    let mut z = seed;
    let (mut f, mut df) = k2_and_slope(spec, z).ok()?;
    for _ in 0..80 {
        if f.norm() == 0.0 {
            break;
        }
        let step = f / df;
        if !step.is_finite() {
            return None;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = z - lambda * step;
            if inside(trial) {
                if let Ok((ft, dft)) = k2_and_slope(spec, trial) {
                    if ft.norm() < f.norm() {
                        z = trial;
                        f = ft;
                        df = dft;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted || (lambda * step).norm() <= 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    inside(z).then_some(z)
}

/// All simple zeros of `1 - delta U(eps z)` in the search strip, sorted by `gamma`.
pub fn find_turning_points(spec: &PotentialSpec, opts: &WkbOptions) -> Result<TurningPointSet> {
    require_analytic(spec)?;
    opts.validate()?;
    if spec.delta == 0.0 {
        return Ok(TurningPointSet {
            points: Vec::new(),
            diagnostic: Some("delta = 0: the wavenumber has no zeros".into()),
        });
    }
    let window = search_window(spec, opts);
    let (re_lo, re_hi, im_lo, im_hi) = window;
    let e = spec.eps;
    let mut seeds = analytic_seeds(spec);
    let dre = opts.seed_re / e;
    let dim = opts.seed_im / e;
    let nre = ((re_hi - re_lo) / dre).ceil() as usize;
    let nim = ((im_hi - im_lo) / dim).ceil() as usize;
    for a in 0..=nre {
        for b in 1..=nim {
            let re = (re_lo + a as f64 * dre).min(re_hi);
            let im = (im_lo + b as f64 * dim).min(im_hi);
            seeds.push(Complex64::new(re, im));
        }
    }
    let mut roots: Vec<Complex64> = seeds
        .par_iter()
        .filter_map(|&s| newton(spec, s, window))
        .collect();
    // Real-axis zeros belong to classically forbidden stretches, not to the strip.
    let floor = im_lo.max(1e-9 / e);
    roots.retain(|z| z.im > floor);
    roots.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    let mut unique: Vec<Complex64> = Vec::new();
    for z in roots {
        let tol = 1e-7 * z.norm().max(1.0 / e);
        if !unique.iter().any(|u| (u - z).norm() < tol) {
            unique.push(z);
        }
    }
    let mut points = Vec::with_capacity(unique.len());
    let mut rejected = 0;
    for z0 in unique {
        let (k2, _) = k2_and_slope(spec, z0)?;
        if k2.norm() >= opts.root_tol {
            rejected += 1;
            continue;
        }
        points.push(describe(spec, z0, opts)?);
    }
    points.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let diagnostic = if points.is_empty() {
        Some(format!(
            "no turning points with {im_lo} < Im z <= {im_hi}; the strip may be too shallow"
        ))
    } else if rejected > 0 {
        Some(format!("{rejected} candidate(s) failed the residual check"))
    } else {
        None
    };
    Ok(TurningPointSet { points, diagnostic })
}

fn describe(spec: &PotentialSpec, z0: Complex64, opts: &WkbOptions) -> Result<TurningPoint> {
    let (k2, _) = k2_and_slope(spec, z0)?;
    let gamma = wkb_action(spec, z0.into(), opts)?;
    let nearest_singularity = spec
        .poles_upper(2.0 * z0.im + 10.0 / spec.eps)
        .into_iter()
        .map(|p| {
            // Mirroring sends a pole at i y to i y as well.
            Singularity {
                z1: p.into(),
                distance: (p - z0).norm(),
            }
        })
        .min_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(TurningPoint {
        z0: z0.into(),
        gamma,
        smoothness: smoothness_criterion(spec, z0.into())?,
        residual: k2.norm(),
        nearest_singularity,
    })
}

/// `S = 1 / (delta |dU/dz|)` at the turning point.
pub fn smoothness_criterion(spec: &PotentialSpec, z0: ComplexPoint) -> Result<f64> {
    require_analytic(spec)?;
    let (_, du) = spec.shape_and_gradient(z0.into())?;
    Ok(1.0 / (spec.delta * du.norm()))
}

/// A straight leg of the integration path. The final leg ends on the turning
/// point and is parametrized by `tau` with `z = b - tau^2 (b - a)`.
#[derive(Debug, Clone, Copy)]
struct Leg {
    a: Complex64,
    b: Complex64,
    last: bool,
}

impl Leg {
    /// Point at parameter `t` in `[0, 1]` running from `a` to `b`.
    fn point(&self, t: f64) -> Complex64 {
        if self.last {
            let tau = 1.0 - t;
            self.b - tau * tau * (self.b - self.a)
        } else {
            self.a + t * (self.b - self.a)
        }
    }
}

/// Branch-tracked samples of the regular part of the integrand along a leg:
/// `k` itself, or `k / tau` on the final leg.
struct Track {
    t: Vec<f64>,
    h: Vec<Complex64>,
}

impl Track {
    fn reference(&self, t: f64) -> Complex64 {
        let j = self.t.partition_point(|&x| x <= t).clamp(1, self.t.len() - 1);
        let (t0, t1) = (self.t[j - 1], self.t[j]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.h[j - 1] * (1.0 - w) + self.h[j] * w
    }
}

const TRACK_SAMPLES: usize = 512;
const JUMP_LIMIT: f64 = 0.3;

/// Squared regular part at `t`: `k^2`, or `k^2 / tau^2` on the final leg.
fn h_squared(spec: &PotentialSpec, leg: &Leg, t: f64) -> Result<Complex64> {
    let z = leg.point(t);
    let (k2, _) = k2_and_slope(spec, z)?;
    if !leg.last {
        return Ok(k2);
    }
    let tau = 1.0 - t;
    if tau < 1e-5 {
        // k^2 ~ slope (z - z0) = -slope (b - a) tau^2 near the endpoint.
        let (_, s0) = k2_and_slope(spec, leg.b)?;
        return Ok(-s0 * (leg.b - leg.a));
    }
    Ok(k2 / (tau * tau))
}

fn nearest_root(h2: Complex64, reference: Complex64) -> Complex64 {
    let r = h2.sqrt();
    if (r - reference).norm() <= (-r - reference).norm() {
        r
    } else {
        -r
    }
}

fn track_leg(spec: &PotentialSpec, leg: &Leg, start: Complex64) -> Result<Track> {
    let mut t = vec![0.0];
    let mut h = vec![nearest_root(h_squared(spec, leg, 0.0)?, start)];
    let step = 1.0 / TRACK_SAMPLES as f64;
    let mut stack: Vec<f64> = (1..=TRACK_SAMPLES).rev().map(|j| j as f64 * step).collect();
    while let Some(next) = stack.pop() {
        let prev_t = *t.last().unwrap();
        let prev = *h.last().unwrap();
        let cand = nearest_root(h_squared(spec, leg, next)?, prev);
        let scale = prev.norm().max(cand.norm());
        if (cand - prev).norm() <= JUMP_LIMIT * scale || scale == 0.0 {
            t.push(next);
            h.push(cand);
            continue;
        }
        let mid = 0.5 * (prev_t + next);
        if next - prev_t < step / 1024.0 {
            return Err(Error::BranchTracking {
                from: prev_t,
                to: next,
            });
        }
        stack.push(next);
        stack.push(mid);
    }
    Ok(Track { t, h })
}

/// `int k dz` over one leg with the branch pinned to the tracked samples.
fn leg_integral(spec: &PotentialSpec, leg: &Leg, track: &Track, tol: f64) -> Result<Complex64> {
    let d = leg.b - leg.a;
    let qt = QuadTolerance {
        abs: 0.0,
        rel: tol,
        max_intervals: 4000,
    };
    let r = integrate(
        |t| {
            let h = nearest_root(h_squared(spec, leg, t)?, track.reference(t));
            if leg.last {
                // dz = 2 tau (b - a) dtau and k = tau h.
                let tau = 1.0 - t;
                Ok(2.0 * tau * tau * h * d)
            } else {
                Ok(h * d)
            }
        },
        0.0,
        1.0,
        &qt,
    )?;
    if !r.converged {
        // Round-off bound on a result dominated by its real part.
        if r.error > 1e3 * tol * r.value.norm().max(1.0) {
            return Err(Error::Quadrature {
                achieved: r.error,
                requested: tol * r.value.norm(),
            });
        }
    }
    Ok(r.value)
}

fn path_action(spec: &PotentialSpec, vertices: &[Complex64], tol: f64) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    let (k2, _) = k2_and_slope(spec, vertices[0])?;
    // Positive real on the real axis.
    let mut reference = k2.sqrt();
    for (n, w) in vertices.windows(2).enumerate() {
        let leg = Leg {
            a: w[0],
            b: w[1],
            last: n + 2 == vertices.len(),
        };
        let track = track_leg(spec, &leg, reference)?;
        total += leg_integral(spec, &leg, &track, tol)?;
        // Hand the branch over to the next leg as the value of k at its start.
        reference = *track.h.last().unwrap();
    }
    Ok(total)
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let t = ((p - a) * d.conj()).re / d.norm_sqr();
    (p - (a + t.clamp(0.0, 1.0) * d)).norm()
}

/// `gamma = Im int_{z_r}^{z0} sqrt(1 - delta U(eps z)) dz`.
pub fn wkb_action(spec: &PotentialSpec, z0: ComplexPoint, opts: &WkbOptions) -> Result<f64> {
    require_analytic(spec)?;
    opts.validate()?;
    let z0: Complex64 = z0.into();
    let zr = Complex64::new(opts.start.unwrap_or(z0.re), 0.0);
    let e = spec.eps;
    let poles = spec.poles_upper(2.0 * z0.im + 1.0 / e);
    let gap = poles
        .iter()
        .map(|&p| (p - z0).norm())
        .fold(f64::INFINITY, f64::min);
    let margin = (0.05 / e).min(0.25 * gap);
    let clear = |pts: &[Complex64]| {
        pts.windows(2)
            .all(|w| poles.iter().all(|&p| segment_distance(p, w[0], w[1]) > margin))
    };
    let in_domain = |pts: &[Complex64]| match &spec.family {
        Family::FourierSeries(s) => {
            let (lo, hi) = s.analytic_interval();
            let (lo, hi) = if spec.mirrored { (-hi, -lo) } else { (lo, hi) };
            pts.iter().all(|z| z.re >= lo && z.re <= hi)
        }
        _ => true,
    };
    let mut paths = vec![vec![zr, z0]];
    // Doglegs around poles or branch-tracking trouble on the straight path.
    for off in [1.0, -1.0, 2.0, -2.0, 0.5, -0.5] {
        let corner = Complex64::new(z0.re + off / e, z0.im);
        paths.push(vec![zr, corner, z0]);
    }
    let mut last_err = None;
    for path in paths {
        if !clear(&path) || !in_domain(&path) {
            continue;
        }
        match path_action(spec, &path, opts.quad_tol) {
            Ok(v) => return Ok(v.im),
            Err(err) => last_err = Some(err),
        }
    }
    Err(last_err.unwrap_or(Error::BranchTracking { from: 0.0, to: 1.0 }))
}

/// `R = e^{-4 gamma}` from the turning point with the smallest action.
pub fn reflectance_wkb(spec: &PotentialSpec, opts: &WkbOptions) -> Result<WkbResult> {
    require_analytic(spec)?;
    if spec.delta == 0.0 {
        return Ok(WkbResult {
            reflectance: 0.0,
            ln_reflectance: f64::NEG_INFINITY,
            turning_point: None,
            warning: None,
        });
    }
    let set = find_turning_points(spec, opts)?;
    let Some(tp) = set.points.first().copied() else {
        return Err(Error::UnsupportedRegime(
            set.diagnostic
                .unwrap_or_else(|| "no turning point in the search strip".into()),
        ));
    };
    let guard = spec.delta * spec.eps / (1.0 - spec.delta);
    let warning = (guard > NEAR_BARRIER_LIMIT).then(|| {
        format!("delta eps / (1 - delta) = {guard:.3} is not small; WKB is unreliable this close to the barrier top")
    });
    let ln_r = -4.0 * tp.gamma;
    Ok(WkbResult {
        reflectance: ln_r.exp(),
        ln_reflectance: ln_r,
        turning_point: Some(tp),
        warning,
    })
}
