//! Sampled real potentials joined by a natural cubic spline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableData", into = "TableData")]
pub struct Tabulated {
    z: Vec<f64>,
    u: Vec<f64>,
    /// Spline second derivatives at the knots.
    m: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableData {
    z: Vec<f64>,
    u: Vec<f64>,
}

impl TryFrom<TableData> for Tabulated {
    type Error = Error;
    fn try_from(d: TableData) -> Result<Self> {
        Tabulated::new(d.z, d.u)
    }
}

impl From<Tabulated> for TableData {
    fn from(t: Tabulated) -> Self {
        TableData { z: t.z, u: t.u }
    }
}

impl Tabulated {
    pub fn new(z: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if z.len() != u.len() {
            return Err(Error::InvalidParameter(format!(
                "grid has {} abscissae but {} values",
                z.len(),
                u.len()
            )));
        }
        if z.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated potential needs at least two samples".into(),
            ));
        }
        if z.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        if let Some(i) = z.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "grid not strictly increasing at index {}",
                i + 1
            )));
        }
        let m = natural_spline(&z, &u);
        Ok(Tabulated { z, u, m })
    }

    /// Parses whitespace- or comma-separated `z U` pairs; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut z = Vec::new();
        let mut u = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected two columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: n + 1,
                    msg: format!("{s:?}: {e}"),
                })
            };
            z.push(parse(fields[0])?);
            u.push(parse(fields[1])?);
        }
        Self::new(z, u)
    }

    pub fn grid(&self) -> &[f64] {
        &self.z
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn span(&self) -> (f64, f64) {
        (self.z[0], self.z[self.z.len() - 1])
    }

    pub fn end_values(&self) -> (f64, f64) {
        (self.u[0], self.u[self.u.len() - 1])
    }

    /// Spline value and slope; errors outside the sampled interval.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.span();
        if !(lo..=hi).contains(&x) {
            return Err(Error::OutsideGrid { z: x, lo, hi });
        }
        Ok(self.eval_inside(x))
    }

    /// Like [`eval`](Self::eval) but constant past the ends.
    pub fn eval_clamped(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.span();
        if x <= lo {
            (self.u[0], 0.0)
        } else if x >= hi {
            (self.u[self.u.len() - 1], 0.0)
        } else {
            self.eval_inside(x)
        }
    }

    fn eval_inside(&self, x: f64) -> (f64, f64) {
        let n = self.z.len();
        let i = self.z.partition_point(|&zi| zi <= x).clamp(1, n - 1) - 1;
        let h = self.z[i + 1] - self.z[i];
        let a = (self.z[i + 1] - x) / h;
        let b = (x - self.z[i]) / h;
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let v = a * self.u[i]
            + b * self.u[i + 1]
            + ((a * a * a - a) * mi + (b * b * b - b) * mj) * h * h / 6.0;
        let d = (self.u[i + 1] - self.u[i]) / h
            + (-(3.0 * a * a - 1.0) * mi + (3.0 * b * b - 1.0) * mj) * h / 6.0;
        (v, d)
    }
}

fn natural_spline(z: &[f64], u: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior knots.
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = z[i] - z[i - 1];
        let h1 = z[i + 1] - z[i];
        let lower = h0 / 6.0;
        let mut d = (h0 + h1) / 3.0;
        let mut r = (u[i + 1] - u[i]) / h1 - (u[i] - u[i - 1]) / h0;
        if i > 1 {
            let w = lower / diag[i - 1];
            d -= w * upper[i - 1];
            r -= w * rhs[i - 1];
        }
        diag[i] = d;
        rhs[i] = r;
        upper[i] = h1 / 6.0;
    }
    for i in (1..n - 1).rev() {
        let next = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
        m[i] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_separators() {
        let t = Tabulated::parse("# header\n0 0.0\n1, 1.0 # inline\n\n2\t4.0\n").unwrap();
        assert_eq!(t.grid(), &[0.0, 1.0, 2.0]);
        assert_eq!(t.end_values(), (0.0, 4.0));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(Tabulated::parse("0 1\n0 2\n").is_err());
        assert!(Tabulated::parse("0 1\n1\n").is_err());
        assert!(matches!(
            Tabulated::parse("0 1\n1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(Tabulated::parse("0 1\n").is_err());
    }

    #[test]
    fn reproduces_smooth_function() {
        let z: Vec<f64> = (0..=400).map(|i| -10.0 + 0.05 * i as f64).collect();
        let u: Vec<f64> = z.iter().map(|x| (-x * x / 4.0).exp()).collect();
        let t = Tabulated::new(z, u).unwrap();
        for i in 0..97 {
            let x = -9.0 + 0.187 * i as f64;
            let (v, d) = t.eval(x).unwrap();
            let e = (-x * x / 4.0).exp();
            assert!((v - e).abs() < 1e-6, "x={x} v={v} e={e}");
            assert!((d + x / 2.0 * e).abs() < 1e-4);
        }
        assert!(t.eval(11.0).is_err());
        assert_eq!(t.eval_clamped(11.0).1, 0.0);
    }

    #[test]
    fn spline_interpolates_knots() {
        let z = vec![0.0, 0.3, 1.0, 1.7, 3.0];
        let u = vec![1.0, -2.0, 0.5, 0.0, 3.0];
        let t = Tabulated::new(z.clone(), u.clone()).unwrap();
        for (x, y) in z.iter().zip(&u) {
            assert!((t.eval(*x).unwrap().0 - y).abs() < 1e-14);
        }
    }

    #[test]
    fn serde_round_trip() {
        let t = Tabulated::new(vec![0.0, 1.0, 2.5], vec![0.0, 1.0, 0.0]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: Tabulated = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
