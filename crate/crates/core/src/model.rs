//! Dimensionless scattering model `psi'' + [1 - delta U(eps z)] psi = 0`.
//!
//! All lengths are measured in units of the free wavelength `1/k0`; the
//! potential is split into an amplitude `delta = V0/E` and a unit shape `U`
//! whose argument is the slow variable `u = eps z`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::FourierSeries;
use crate::tabulated::Tabulated;

/// Guard on `|1 + e^{-u}|` and `|cosh u|` below which a shape is treated as
/// sitting on its pole.
pub const POLE_GUARD: f64 = 1e-8;

/// Dimensional inputs (units hbar = 2m = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScales {
    pub energy: f64,
    pub v0: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `U(u) = 1 / (1 + e^{-u})`
    FermiStep,
    /// `U(u) = 1 / cosh^2 u`
    SechSquared,
    /// `U(u) = e^{-u^2}`
    GaussianBump,
    /// Tapered cosine series in `z` (random realizations).
    FourierSeries(FourierSeries),
    /// Real samples `(z_i, U_i)` joined by a natural cubic spline.
    Tabulated(Tabulated),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::FermiStep => "fermi",
            Family::SechSquared => "sech2",
            Family::GaussianBump => "gauss",
            Family::FourierSeries(_) => "fourier",
            Family::Tabulated(_) => "tabulated",
        }
    }
}

/// A potential family together with its dimensionless amplitude and inverse scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: Family,
    pub delta: f64,
    pub eps: f64,
    /// Evaluate `U(-z)` instead of `U(z)`.
    #[serde(default)]
    pub mirrored: bool,
}

/// Asymptotic shape values `U(-inf)` and `U(+inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailValues {
    pub u_minus: f64,
    pub u_plus: f64,
}

/// Reduces dimensional scales to `(delta, eps)`, with `k0 = sqrt(E)`.
pub fn nondimensionalize(scales: &PhysicalScales, family: Family) -> Result<PotentialSpec> {
    let PhysicalScales { energy, v0, length } = *scales;
    if !(energy > 0.0 && v0 > 0.0 && length > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "E, V0 and L must be positive (E = {energy}, V0 = {v0}, L = {length})"
        )));
    }
    if energy <= v0 {
        return Err(Error::AboveBarrierOnly { delta: v0 / energy });
    }
    PotentialSpec::new(family, v0 / energy, 1.0 / (energy.sqrt() * length))
}

pub fn eval_shape(spec: &PotentialSpec, z: Complex64) -> Result<Complex64> {
    spec.shape(z)
}

pub fn eval_shape_derivative(spec: &PotentialSpec, z: Complex64) -> Result<Complex64> {
    spec.shape_derivative(z)
}

pub fn tail_values(spec: &PotentialSpec) -> TailValues {
    spec.tail_values()
}

impl PotentialSpec {
    pub fn new(family: Family, delta: f64, eps: f64) -> Result<Self> {
        let spec = PotentialSpec {
            family,
            delta,
            eps,
            mirrored: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fermi(delta: f64, eps: f64) -> Result<Self> {
        Self::new(Family::FermiStep, delta, eps)
    }

    pub fn sech2(delta: f64, eps: f64) -> Result<Self> {
        Self::new(Family::SechSquared, delta, eps)
    }

    pub fn gaussian(delta: f64, eps: f64) -> Result<Self> {
        Self::new(Family::GaussianBump, delta, eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || self.delta < 0.0 || self.delta >= 1.0 {
            return Err(Error::AboveBarrierOnly { delta: self.delta });
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive and finite, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.delta = delta;
        out.validate()?;
        Ok(out)
    }

    /// The same potential seen from the other side, `U(-z)`.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.mirrored = !self.mirrored;
        out
    }

    /// True when the shape can be continued off the real axis.
    pub fn is_analytic(&self) -> bool {
        !matches!(self.family, Family::Tabulated(_))
    }

    /// True for the closed-form families defined on the whole line.
    pub fn is_elementary(&self) -> bool {
        matches!(
            self.family,
            Family::FermiStep | Family::SechSquared | Family::GaussianBump
        )
    }

    /// `U(eps z)`.
    pub fn shape(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.shape_and_gradient(z)?.0)
    }

    /// `dU/du` with `u = eps z`.
    pub fn shape_derivative(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.shape_and_gradient(z)?.1 / self.eps)
    }

    /// `(U, dU/dz)` at a point of the complex `z` plane.
    pub fn shape_and_gradient(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let (arg, sign) = if self.mirrored { (-z, -1.0) } else { (z, 1.0) };
        let (value, grad) = match &self.family {
            Family::FermiStep | Family::SechSquared | Family::GaussianBump => {
                let (v, d) = elementary_shape(&self.family, arg * self.eps).map_err(|e| {
                    match e {
                        // Report the pole location in z rather than u.
                        Error::PoleProximity { .. } => Error::PoleProximity { re: z.re, im: z.im },
                        other => other,
                    }
                })?;
                (v, d * self.eps)
            }
            Family::FourierSeries(series) => series.eval(arg)?,
            Family::Tabulated(table) => {
                if arg.im != 0.0 {
                    return Err(Error::ComplexOnTabulated { re: z.re, im: z.im });
                }
                let (v, d) = table.eval(arg.re)?;
                (Complex64::new(v, 0.0), Complex64::new(d, 0.0))
            }
        };
        Ok((value, grad * sign))
    }

    /// Real-axis shape and slope, with tabulated data held constant past its ends.
    pub(crate) fn real_shape_and_gradient(&self, z: f64) -> Result<(f64, f64)> {
        if let Family::Tabulated(table) = &self.family {
            let (arg, sign) = if self.mirrored { (-z, -1.0) } else { (z, 1.0) };
            let (v, d) = table.eval_clamped(arg);
            return Ok((v, d * sign));
        }
        let (v, d) = self.shape_and_gradient(Complex64::new(z, 0.0))?;
        Ok((v.re, d.re))
    }

    pub fn tail_values(&self) -> TailValues {
        let (lo, hi) = match &self.family {
            Family::FermiStep => (0.0, 1.0),
            Family::SechSquared | Family::GaussianBump | Family::FourierSeries(_) => (0.0, 0.0),
            Family::Tabulated(t) => t.end_values(),
        };
        if self.mirrored {
            TailValues {
                u_minus: hi,
                u_plus: lo,
            }
        } else {
            TailValues {
                u_minus: lo,
                u_plus: hi,
            }
        }
    }

    /// Asymptotic wavenumbers `(k_-, k_+)`; errors when a tail is not propagating.
    pub fn asymptotic_wavenumbers(&self) -> Result<(f64, f64)> {
        let tails = self.tail_values();
        let km2 = 1.0 - self.delta * tails.u_minus;
        let kp2 = 1.0 - self.delta * tails.u_plus;
        if km2 <= 0.0 || kp2 <= 0.0 {
            return Err(Error::UnsupportedRegime(format!(
                "non-propagating tail: delta*u = ({}, {}) must stay below 1",
                self.delta * tails.u_minus,
                self.delta * tails.u_plus
            )));
        }
        Ok((km2.sqrt(), kp2.sqrt()))
    }

    /// Poles of the shape in the upper half `z` plane with `Im z <= im_max`.
    pub fn poles_upper(&self, im_max: f64) -> Vec<Complex64> {
        let step = match self.family {
            Family::FermiStep => std::f64::consts::PI,
            Family::SechSquared => std::f64::consts::FRAC_PI_2,
            _ => return Vec::new(),
        };
        // Fermi poles at i pi (2m+1), sech^2 poles at i pi (m + 1/2); both
        // sets are invariant under z -> -conj(z).
        let mut out = Vec::new();
        let mut y = step;
        while y / self.eps <= im_max {
            out.push(Complex64::new(0.0, y / self.eps));
            y += 2.0 * step;
        }
        out
    }

    /// Height of the lowest singularity of the shape above the real axis.
    pub fn lowest_pole_height(&self) -> Option<f64> {
        match self.family {
            Family::FermiStep => Some(std::f64::consts::PI / self.eps),
            Family::SechSquared => Some(std::f64::consts::FRAC_PI_2 / self.eps),
            _ => None,
        }
    }
}

/// `(U(u), dU/du)` for the three closed-form families.
pub(crate) fn elementary_shape(family: &Family, u: Complex64) -> Result<(Complex64, Complex64)> {
    let one = Complex64::new(1.0, 0.0);
    match family {
        Family::FermiStep => {
            // e^{-u}/(1+e^{-u})^2 == e^{u}/(1+e^{u})^2; pick the form that cannot overflow.
            let (e, numerator_is_e) = if u.re >= 0.0 {
                ((-u).exp(), false)
            } else {
                (u.exp(), true)
            };
            let d = one + e;
            if d.norm() < POLE_GUARD {
                return Err(Error::PoleProximity { re: u.re, im: u.im });
            }
            let value = if numerator_is_e { e / d } else { one / d };
            Ok((value, e / (d * d)))
        }
        Family::SechSquared => {
            if u.re.abs() < 20.0 {
                let c = u.cosh();
                if c.norm() < POLE_GUARD {
                    return Err(Error::PoleProximity { re: u.re, im: u.im });
                }
                let s = u.sinh();
                let c2 = c * c;
                Ok((one / c2, -2.0 * s / (c2 * c)))
            } else {
                let sg = u.re.signum();
                let e = (-2.0 * sg * u).exp();
                let sech = 2.0 * (-sg * u).exp() / (one + e);
                let tanh = sg * (one - e) / (one + e);
                let v = sech * sech;
                Ok((v, -2.0 * v * tanh))
            }
        }
        Family::GaussianBump => {
            let v = (-u * u).exp();
            Ok((v, -2.0 * u * v))
        }
        _ => Err(Error::UnsupportedFamily(family.name())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn nondimensionalize_examples() {
        let s = PhysicalScales {
            energy: 4.0,
            v0: 1.0,
            length: 1.0,
        };
        let spec = nondimensionalize(&s, Family::FermiStep).unwrap();
        assert_eq!(spec.delta, 0.25);
        assert_eq!(spec.eps, 0.5);
        assert_eq!(spec.family, Family::FermiStep);

        let s = PhysicalScales {
            energy: 100.0,
            v0: 1.0,
            length: 10.0,
        };
        let spec = nondimensionalize(&s, Family::SechSquared).unwrap();
        assert!((spec.delta - 0.01).abs() < 1e-15);
        assert!((spec.eps - 0.01).abs() < 1e-15);

        let s = PhysicalScales {
            energy: 1.0,
            v0: 1.0,
            length: 1.0,
        };
        let err = nondimensionalize(&s, Family::FermiStep).unwrap_err();
        assert!(err.to_string().contains("above-barrier only"));
    }

    #[test]
    fn shape_values_at_origin() {
        let z0 = c(0.0, 0.0);
        let f = PotentialSpec::fermi(0.5, 1.0).unwrap();
        assert!((eval_shape(&f, z0).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        assert!((eval_shape_derivative(&f, z0).unwrap() - c(0.25, 0.0)).norm() < 1e-15);

        let s = PotentialSpec::sech2(0.5, 0.7).unwrap();
        assert!((eval_shape(&s, z0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(eval_shape_derivative(&s, z0).unwrap().norm() < 1e-15);

        let eps = 0.3;
        let g = PotentialSpec::gaussian(0.5, eps).unwrap();
        let v = eval_shape(&g, c(0.0, 1.0 / eps)).unwrap();
        assert!((v - c(std::f64::consts::E, 0.0)).norm() < 1e-14);
        // u = eps z = 1
        let d = eval_shape_derivative(&g, c(1.0 / eps, 0.0)).unwrap();
        assert!((d - c(-2.0 / std::f64::consts::E, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn tails() {
        let f = PotentialSpec::fermi(0.5, 1.0).unwrap();
        assert_eq!(
            tail_values(&f),
            TailValues {
                u_minus: 0.0,
                u_plus: 1.0
            }
        );
        let m = f.mirrored();
        assert_eq!(m.tail_values().u_minus, 1.0);
        for spec in [
            PotentialSpec::sech2(0.5, 1.0).unwrap(),
            PotentialSpec::gaussian(0.5, 1.0).unwrap(),
        ] {
            assert_eq!(
                spec.tail_values(),
                TailValues {
                    u_minus: 0.0,
                    u_plus: 0.0
                }
            );
        }
    }

    #[test]
    fn poles_are_guarded() {
        let eps = 0.5;
        let f = PotentialSpec::fermi(0.5, eps).unwrap();
        let z1 = c(0.0, std::f64::consts::PI / eps);
        assert!(matches!(f.shape(z1), Err(Error::PoleProximity { .. })));
        let s = PotentialSpec::sech2(0.5, eps).unwrap();
        let z1 = c(0.0, std::f64::consts::FRAC_PI_2 / eps);
        assert!(matches!(s.shape(z1), Err(Error::PoleProximity { .. })));
        // Slightly off the pole is fine.
        assert!(s.shape(z1 + c(1e-3, 0.0)).is_ok());
    }

    #[test]
    fn delta_out_of_range_rejected() {
        assert!(PotentialSpec::fermi(1.0, 1.0).is_err());
        assert!(PotentialSpec::fermi(-0.1, 1.0).is_err());
        assert!(PotentialSpec::fermi(0.5, 0.0).is_err());
    }

    #[test]
    fn real_shapes_bounded_on_dense_grid() {
        for fam in [Family::FermiStep, Family::SechSquared, Family::GaussianBump] {
            for &eps in &[0.05, 0.3, 1.0, 2.0] {
                let spec = PotentialSpec::new(fam.clone(), 0.5, eps).unwrap();
                for i in -4000..=4000 {
                    let z = i as f64 * 0.01 / eps;
                    let v = spec.shape(c(z, 0.0)).unwrap();
                    assert_eq!(v.im, 0.0);
                    assert!(v.re.abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn far_tails_do_not_overflow() {
        let s = PotentialSpec::sech2(0.5, 1.0).unwrap();
        let v = s.shape(c(800.0, 0.3)).unwrap();
        assert!(v.norm() < 1e-300 && v.is_finite());
        let f = PotentialSpec::fermi(0.5, 1.0).unwrap();
        assert!((f.shape(c(-800.0, 0.2)).unwrap()).norm() < 1e-300);
        assert!((f.shape(c(800.0, 0.2)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn central_difference(spec: &PotentialSpec, z: Complex64) -> Complex64 {
            // Complex-step central difference in u = eps z.
            let h = 1e-4 / spec.eps;
            let f = |w: Complex64| spec.shape(w).unwrap();
            let d = (-f(z + 2.0 * h) + 8.0 * f(z + h) - 8.0 * f(z - h) + f(z - 2.0 * h))
                / (12.0 * h);
            d / spec.eps
        }

        proptest! {
            #[test]
            fn derivative_matches_finite_difference(
                fam in 0usize..3,
                ur in -3.0f64..3.0,
                ui in 0.0f64..1.2,
                eps in 0.2f64..2.0,
            ) {
                let family = [Family::FermiStep, Family::SechSquared, Family::GaussianBump][fam].clone();
                let spec = PotentialSpec::new(family, 0.5, eps).unwrap();
                let z = c(ur, ui) / eps;
                let exact = spec.shape_derivative(z).unwrap();
                let fd = central_difference(&spec, z);
                let scale = exact.norm().max(1e-3);
                prop_assert!((exact - fd).norm() / scale < 1e-8,
                    "exact {exact} fd {fd}");
            }

            #[test]
            fn mirror_is_reflection(z in -10.0f64..10.0, fam in 0usize..3) {
                let family = [Family::FermiStep, Family::SechSquared, Family::GaussianBump][fam].clone();
                let spec = PotentialSpec::new(family, 0.5, 0.7).unwrap();
                let m = spec.mirrored();
                let a = spec.shape(c(-z, 0.0)).unwrap();
                let b = m.shape(c(z, 0.0)).unwrap();
                prop_assert!((a - b).norm() < 1e-15);
            }
        }
    }
}
