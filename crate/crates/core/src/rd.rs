//! Rate-distortion curves and Bjøntegaard delta rate.
//!
//! Each curve is modelled as `log10(rate) = f(psnr)`. The default model
//! is a least-squares cubic. If either cubic is not monotone over its own
//! PSNR span, both curves fall back to monotone piecewise-cubic Hermite
//! interpolation. The model actually used is reported with the result.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub quant_step: f64,
    pub rate_kbps: f64,
    pub psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    label: String,
    points: Vec<RdPoint>,
}

pub const MIN_POINTS: usize = 4;

impl RdCurve {
    /// Sorts by rate and validates. Points with infinite PSNR must be
    /// dropped by the caller (see [`RdCurve::from_measurements`]).
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        let label = label.into();
        if points.len() < MIN_POINTS {
            return Err(Error::Curve(format!(
                "{label}: {} point(s), at least {MIN_POINTS} required",
                points.len()
            )));
        }
        for p in &points {
            if !(p.rate_kbps > 0.0 && p.rate_kbps.is_finite()) {
                return Err(Error::Curve(format!("{label}: non-positive rate {}", p.rate_kbps)));
            }
            if !(p.psnr_db > 0.0 && p.psnr_db.is_finite()) {
                return Err(Error::Curve(format!("{label}: unusable PSNR {}", p.psnr_db)));
            }
        }
        points.sort_by(|a, b| a.rate_kbps.total_cmp(&b.rate_kbps));
        if points.windows(2).any(|w| w[0].rate_kbps >= w[1].rate_kbps) {
            return Err(Error::Curve(format!("{label}: rates are not strictly increasing")));
        }
        Ok(Self { label, points })
    }

    /// Drops points with infinite PSNR before validating.
    pub fn from_measurements(label: impl Into<String>, points: Vec<RdPoint>) -> Result<Self> {
        Self::new(label, points.into_iter().filter(|p| p.psnr_db.is_finite()).collect())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    /// PSNR rises with rate. Curves that violate this are still usable.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[0].psnr_db <= w[1].psnr_db)
    }

    fn psnr_range(&self) -> (f64, f64) {
        self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.psnr_db), hi.max(p.psnr_db))
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(label: impl Into<String>, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let points = r.deserialize().collect::<std::result::Result<Vec<RdPoint>, _>>()?;
        Self::new(label, points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Cubic,
    Pchip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdRate {
    /// Average rate difference of `test` relative to `anchor`; negative
    /// means the test curve needs less rate for the same quality.
    pub percent: f64,
    pub method: FitMethod,
    pub psnr_low: f64,
    pub psnr_high: f64,
}

/// Least-squares cubic in a centred, scaled variable.
struct Cubic {
    center: f64,
    scale: f64,
    coef: [f64; 4],
}

impl Cubic {
    fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len() as f64;
        let center = x.iter().sum::<f64>() / n;
        let spread = x.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
        if spread == 0.0 {
            return Err(Error::Fit("all PSNR values are equal".into()));
        }
        let scale = spread;
        let a = DMatrix::from_fn(x.len(), 4, |i, j| ((x[i] - center) / scale).powi(j as i32));
        let b = DVector::from_column_slice(y);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Fit(e.to_string()))?;
        Ok(Self {
            center,
            scale,
            coef: [sol[0], sol[1], sol[2], sol[3]],
        })
    }

    fn t(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    fn antiderivative_t(&self, t: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coef;
        t * (a0 + t * (a1 / 2.0 + t * (a2 / 3.0 + t * a3 / 4.0)))
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.scale * (self.antiderivative_t(self.t(hi)) - self.antiderivative_t(self.t(lo)))
    }

    /// True if the derivative keeps a strict sign on `[lo, hi]`.
    fn is_monotone_on(&self, lo: f64, hi: f64) -> bool {
        let [_, a1, a2, a3] = self.coef;
        let d = |t: f64| a1 + 2.0 * a2 * t + 3.0 * a3 * t * t;
        let (tl, th) = (self.t(lo), self.t(hi));
        let mut samples = vec![d(tl), d(th)];
        if a3 != 0.0 {
            let crit = -a2 / (3.0 * a3);
            if crit > tl && crit < th {
                samples.push(d(crit));
            }
        }
        samples.iter().all(|&v| v > 0.0) || samples.iter().all(|&v| v < 0.0)
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Fit("PSNR values must be strictly increasing for interpolation".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (a, b) = (delta[k - 1], delta[k]);
                if a * b > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / a + w2 / b);
                }
            }
            d[0] = Self::edge(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = Self::edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    fn edge(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
        let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if d.signum() != m0.signum() {
            0.0
        } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            d
        }
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let prim = |t: f64| {
            let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
            [
                t - t3 + t4 / 2.0,
                t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0,
                t3 - t4 / 2.0,
                -t3 / 3.0 + t4 / 4.0,
            ]
        };
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let (x0, x1) = (self.x[k], self.x[k + 1]);
            let a = lo.max(x0);
            let b = hi.min(x1);
            if b <= a {
                continue;
            }
            let h = x1 - x0;
            let (pa, pb) = (prim((a - x0) / h), prim((b - x0) / h));
            let diff = |i: usize| pb[i] - pa[i];
            total += h
                * (self.y[k] * diff(0)
                    + h * self.d[k] * diff(1)
                    + self.y[k + 1] * diff(2)
                    + h * self.d[k + 1] * diff(3));
        }
        total
    }
}

fn log_rate_samples(curve: &RdCurve) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.psnr_db, p.rate_kbps.log10()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

/// Bjøntegaard delta rate of `test` against `anchor`, in percent.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<BdRate> {
    let (alo, ahi) = anchor.psnr_range();
    let (tlo, thi) = test.psnr_range();
    let lo = alo.max(tlo);
    let hi = ahi.min(thi);
    if !(hi > lo) {
        return Err(Error::Fit(format!(
            "no PSNR overlap between {} [{alo:.3}, {ahi:.3}] and {} [{tlo:.3}, {thi:.3}]",
            anchor.label, test.label
        )));
    }
    let (ax, ay) = log_rate_samples(anchor);
    let (tx, ty) = log_rate_samples(test);

    let cubic = Cubic::fit(&ax, &ay).and_then(|a| Cubic::fit(&tx, &ty).map(|t| (a, t)));
    let (diff, method) = match cubic {
        Ok((ca, ct)) if ca.is_monotone_on(alo, ahi) && ct.is_monotone_on(tlo, thi) => {
            (ct.integral(lo, hi) - ca.integral(lo, hi), FitMethod::Cubic)
        }
        _ => {
            let pa = Pchip::new(&ax, &ay)?;
            let pt = Pchip::new(&tx, &ty)?;
            (pt.integral(lo, hi) - pa.integral(lo, hi), FitMethod::Pchip)
        }
    };
    let avg = diff / (hi - lo);
    Ok(BdRate {
        percent: 100.0 * (10f64.powf(avg) - 1.0),
        method,
        psnr_low: lo,
        psnr_high: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(label: &str, pts: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(
            label,
            pts.iter()
                .enumerate()
                .map(|(i, &(r, p))| RdPoint {
                    quant_step: (4 << i) as f64,
                    rate_kbps: r,
                    psnr_db: p,
                })
                .collect(),
        )
        .unwrap()
    }

    const ANCHOR: [(f64, f64); 5] = [
        (120.0, 30.1),
        (240.0, 33.0),
        (480.0, 35.8),
        (900.0, 38.2),
        (1700.0, 40.9),
    ];

    #[test]
    fn identical_curves_are_zero() {
        let a = curve("a", &ANCHOR);
        let bd = bd_rate(&a, &a).unwrap();
        assert_eq!(bd.percent, 0.0);
        assert_eq!(bd.method, FitMethod::Cubic);
    }

    #[test]
    fn doubled_rate_is_plus_hundred() {
        let a = curve("a", &ANCHOR);
        let doubled: Vec<_> = ANCHOR.iter().map(|&(r, p)| (2.0 * r, p)).collect();
        let t = curve("t", &doubled);
        let bd = bd_rate(&a, &t).unwrap();
        assert!((bd.percent - 100.0).abs() < 1e-9, "{}", bd.percent);
        let back = bd_rate(&t, &a).unwrap();
        assert!((back.percent + 50.0).abs() < 1e-9);
    }

    #[test]
    fn non_monotone_fit_falls_back_to_pchip() {
        // a flat stretch followed by a jump bends the cubic backwards
        let a = curve("a", &[(100.0, 30.0), (200.0, 30.2), (400.0, 30.4), (800.0, 40.0), (1600.0, 40.1)]);
        let b = curve("b", &[(110.0, 30.0), (220.0, 30.2), (440.0, 30.4), (880.0, 40.0), (1760.0, 40.1)]);
        let bd = bd_rate(&a, &b).unwrap();
        assert_eq!(bd.method, FitMethod::Pchip);
        assert!((bd.percent - 10.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let few = RdCurve::new("x", vec![RdPoint { quant_step: 1.0, rate_kbps: 1.0, psnr_db: 30.0 }]);
        assert!(few.is_err());
        let dup = vec![(100.0, 30.0), (100.0, 31.0), (200.0, 32.0), (300.0, 33.0)];
        assert!(RdCurve::new(
            "d",
            dup.iter().map(|&(r, p)| RdPoint { quant_step: 1.0, rate_kbps: r, psnr_db: p }).collect()
        )
        .is_err());
        let lo = curve("lo", &[(100.0, 20.0), (200.0, 21.0), (300.0, 22.0), (400.0, 23.0)]);
        let hi = curve("hi", &[(100.0, 30.0), (200.0, 31.0), (300.0, 32.0), (400.0, 33.0)]);
        assert!(matches!(bd_rate(&lo, &hi), Err(Error::Fit(_))));
    }

    #[test]
    fn infinite_psnr_points_are_dropped() {
        let mut pts: Vec<RdPoint> = ANCHOR
            .iter()
            .enumerate()
            .map(|(i, &(r, p))| RdPoint { quant_step: i as f64, rate_kbps: r, psnr_db: p })
            .collect();
        pts.push(RdPoint { quant_step: 0.5, rate_kbps: 9000.0, psnr_db: f64::INFINITY });
        assert!(RdCurve::new("x", pts.clone()).is_err());
        assert_eq!(RdCurve::from_measurements("x", pts).unwrap().points().len(), 5);
    }

    proptest! {
        #[test]
        fn csv_round_trip(pts in proptest::collection::vec((1.0f64..1e5, 1.0f64..80.0, 0.5f64..128.0), 4..10)) {
            let mut rate = 0.0;
            let points: Vec<RdPoint> = pts.iter().map(|&(r, p, q)| {
                rate += r;
                RdPoint { quant_step: q, rate_kbps: rate, psnr_db: p }
            }).collect();
            let c = RdCurve::new("c", points).unwrap();
            let back = RdCurve::read_csv("c", c.to_csv_string().as_bytes()).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn sign_flip_on_swap(scale in 0.5f64..2.0) {
            let a = curve("a", &ANCHOR);
            let scaled: Vec<_> = ANCHOR.iter().enumerate().map(|(i, &(r, p))| (r * scale * (1.0 + 0.02 * i as f64), p)).collect();
            let b = curve("b", &scaled);
            let ab = bd_rate(&a, &b).unwrap().percent;
            let ba = bd_rate(&b, &a).unwrap().percent;
            // (1 + ab/100)(1 + ba/100) = 1 when the integrands are exact
            let predicted = -ba / (1.0 + ba / 100.0);
            prop_assert!((ab - predicted).abs() < 1e-6 * (1.0 + ab.abs()));
        }
    }
}
