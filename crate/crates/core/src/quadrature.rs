//! Adaptive Gauss-Kronrod (G10/K21) quadrature for complex-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208067960081,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

/// Gauss weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadTolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        QuadTolerance {
            abs: 0.0,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    pub fn require(self, tol: &QuadTolerance) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Quadrature {
                achieved: self.error,
                requested: tol.abs.max(tol.rel * self.value.norm()),
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod panel: (Kronrod value, Gauss value, error estimate).
pub fn gk21<F>(f: &mut F, a: f64, b: f64) -> Result<(Complex64, Complex64, f64)>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut resk = fc * WGK[10];
    let mut resg = Complex64::new(0.0, 0.0);
    let mut resabs = fc.norm() * WGK[10];
    let mut fv1 = [Complex64::new(0.0, 0.0); 10];
    let mut fv2 = [Complex64::new(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        resk += (f1 + f2) * WGK[j];
        resabs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            resg += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = resk * 0.5;
    let mut resasc = (fc - mean).norm() * WGK[10];
    for j in 0..10 {
        resasc += ((fv1[j] - mean).norm() + (fv2[j] - mean).norm()) * WGK[j];
    }
    let resk = resk * half;
    let resg = resg * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = (resk - resg).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((resk, resg, err))
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// Never fails on non-convergence; the result carries `converged = false`
/// and the achieved error so the caller can decide.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: &QuadTolerance) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    if a == b {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evaluations: 0,
            converged: true,
        });
    }
    let (value, _, error) = gk21(&mut f, a, b)?;
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        let target = tol.abs.max(tol.rel * total.norm());
        if total_err <= target {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Ok(QuadResult {
                value: total,
                error: total_err,
                evaluations,
                converged: false,
            });
        }
        let seg = heap.pop().expect("heap never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a.min(seg.b) && mid < seg.a.max(seg.b)) {
            // Interval can no longer be split in floating point.
            heap.push(seg);
            return Ok(QuadResult {
                value: total,
                error: total_err,
                evaluations,
                converged: false,
            });
        }
        let (v1, _, e1) = gk21(&mut f, seg.a, mid)?;
        let (v2, _, e2) = gk21(&mut f, mid, seg.b)?;
        evaluations += 42;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        // Recompute sums now and then to keep cancellation drift out of the totals.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations,
        converged: true,
    })
}

/// Integrates over consecutive panels `[p0, p1], [p1, p2], ...`, each adaptively.
pub fn integrate_panels<F>(mut f: F, points: &[f64], tol: &QuadTolerance) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    let mut out = QuadResult {
        value: Complex64::new(0.0, 0.0),
        error: 0.0,
        evaluations: 0,
        converged: true,
    };
    for w in points.windows(2) {
        let r = integrate(&mut f, w[0], w[1], tol)?;
        out.value += r.value;
        out.error += r.error;
        out.evaluations += r.evaluations;
        out.converged &= r.converged;
    }
    Ok(out)
}
