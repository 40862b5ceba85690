use std::io::{Read, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the values of a driving path are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Ordinary real function.
    Real,
    /// Only `e^{iξ}` is meaningful; values form a continuous lift.
    Circle,
}

/// Sampled driving function, linearly interpolated between samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kappa: f64,
    pub anchor: Anchor,
}

impl DrivingPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kappa: f64, anchor: Anchor) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Parse("driving path needs matching, nonempty times and values".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("driving path times must be strictly increasing".into()));
        }
        if values.iter().chain(times.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parse("driving path values must be finite".into()));
        }
        Ok(DrivingPath { times, values, kappa, anchor })
    }

    /// Samples `f` on the uniform grid `t0, t0 + dt, …` up to `t1`.
    pub fn from_fn(t0: f64, t1: f64, dt: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = ((t1 - t0) / dt).round().max(1.0) as usize;
        let times: Vec<f64> = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        DrivingPath { times, values, kappa: 0.0, anchor: Anchor::Real }
    }

    pub fn constant(t0: f64, t1: f64, c: f64) -> Self {
        DrivingPath { times: vec![t0, t1], values: vec![c, c], kappa: 0.0, anchor: Anchor::Real }
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation, extended as a constant outside the sampled range.
    pub fn eval(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= *ts.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Index of the last sample with time `<= t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Restriction to `[a, b]`, adding interpolated endpoints.
    pub fn window(&self, a: f64, b: f64) -> DrivingPath {
        let mut times = vec![a];
        let mut values = vec![self.eval(a)];
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t > a && t < b {
                times.push(t);
                values.push(v);
            }
        }
        if b > a {
            times.push(b);
            values.push(self.eval(b));
        }
        DrivingPath { times, values, kappa: self.kappa, anchor: self.anchor }
    }

    /// Sup distance between `e^{iξ}` and `e^{iη}` over the sample times of `self`.
    pub fn sup_circle_distance(&self, other: &DrivingPath) -> f64 {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| (C64::from_polar(1.0, v) - C64::from_polar(1.0, other.eval(t))).norm())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "value_re"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            wr.write_record([t.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, kappa: f64, anchor: Anchor) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let p = |k: usize| -> Result<f64> {
                rec.get(k).ok_or_else(|| Error::Parse("short csv row".into()))?.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))
            };
            times.push(p(0)?);
            values.push(p(1)?);
        }
        DrivingPath::new(times, values, kappa, anchor)
    }
}

/// Makes a sequence of angles continuous by choosing, at each step, the branch nearest to the
/// previous value.
pub fn lift_nearest(prev: f64, angle: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    angle + tau * ((prev - angle) / tau).round()
}

/// Points `β(t_i)` of a curve started at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveTrace {
    pub times: Vec<f64>,
    pub points: Vec<C64>,
}

impl CurveTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline vertices including the start point 0.
    pub fn polyline(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.points.len() + 1);
        v.push(C64::new(0.0, 0.0));
        for &p in &self.points {
            if p != *v.last().unwrap() {
                v.push(p);
            }
        }
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "value_re", "value_im"])?;
        for (t, z) in self.times.iter().zip(&self.points) {
            wr.write_record([t.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let p = |k: usize| -> Result<f64> {
                rec.get(k).ok_or_else(|| Error::Parse("short csv row".into()))?.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))
            };
            times.push(p(0)?);
            points.push(C64::new(p(1)?, p(2)?));
        }
        Ok(CurveTrace { times, points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolation() {
        let p = DrivingPath::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0], 2.0, Anchor::Real).unwrap();
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(2.0), 1.0);
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(5.0), 0.0);
        assert!(DrivingPath::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.0, Anchor::Real).is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let times: Vec<f64> = (0..vals.len()).map(|k| -3.0 + k as f64 * 0.1234567891234).collect();
            let p = DrivingPath::new(times, vals, 2.0, Anchor::Circle).unwrap();
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            let q = DrivingPath::read_csv(&buf[..], 2.0, Anchor::Circle).unwrap();
            prop_assert_eq!(&p, &q);
            let js = serde_json::to_string(&p).unwrap();
            let r: DrivingPath = serde_json::from_str(&js).unwrap();
            prop_assert_eq!(p, r);
        }

        #[test]
        fn trace_roundtrip(pts in proptest::collection::vec((-10f64..10.0, -10f64..10.0), 1..30)) {
            let tr = CurveTrace {
                times: (0..pts.len()).map(|k| k as f64 / 7.0).collect(),
                points: pts.iter().map(|&(a, b)| C64::new(a, b)).collect(),
            };
            let mut buf = Vec::new();
            tr.write_csv(&mut buf).unwrap();
            prop_assert_eq!(CurveTrace::read_csv(&buf[..]).unwrap(), tr);
        }

        #[test]
        fn lift_is_nearest(prev in -100f64..100.0, a in -3.2f64..3.2) {
            let l = lift_nearest(prev, a);
            prop_assert!((l - prev).abs() <= std::f64::consts::PI + 1e-9);
            prop_assert!(((l - a) / std::f64::consts::TAU - ((l - a) / std::f64::consts::TAU).round()).abs() < 1e-9);
        }
    }
}
