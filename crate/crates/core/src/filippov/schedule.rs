use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `k(t) = δ`.
    Constant,
    /// `k(t) = δ̄ / (t + 1) + δ`.
    #[default]
    Hyperbolic,
}

/// Gain on the l1 descent term of the distributed flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSchedule {
    kind: ScheduleKind,
    delta_bar: f64,
    delta: f64,
}

impl KSchedule {
    pub fn new(kind: ScheduleKind, delta_bar: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("delta_bar", delta_bar), ("delta", delta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self {
            kind,
            delta_bar,
            delta,
        })
    }

    pub fn hyperbolic(delta_bar: f64, delta: f64) -> Result<Self> {
        Self::new(ScheduleKind::Hyperbolic, delta_bar, delta)
    }

    pub fn constant(delta: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, 0.0, delta)
    }

    /// `k ≡ 0`.
    pub fn zero() -> Self {
        Self {
            kind: ScheduleKind::Constant,
            delta_bar: 0.0,
            delta: 0.0,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn delta_bar(&self) -> f64 {
        self.delta_bar
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "schedule time must be nonnegative, got {t}"
            )));
        }
        Ok(match self.kind {
            ScheduleKind::Constant => self.delta,
            ScheduleKind::Hyperbolic => self.delta_bar / (t + 1.0) + self.delta,
        })
    }

    /// `∫₀ᵗ k(s) ds` in closed form.
    pub fn integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "schedule time must be nonnegative, got {t}"
            )));
        }
        Ok(match self.kind {
            ScheduleKind::Constant => self.delta * t,
            ScheduleKind::Hyperbolic => self.delta_bar * t.ln_1p() + self.delta * t,
        })
    }
}

pub fn k_schedule(s: &KSchedule, t: f64) -> Result<f64> {
    s.value(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = KSchedule::hyperbolic(0.1, 0.01).unwrap();
        assert!((k_schedule(&s, 0.0).unwrap() - 0.11).abs() < 1e-15);

        let s = KSchedule::hyperbolic(1.0, 0.0).unwrap();
        assert!(k_schedule(&s, 1e12).unwrap() < 1e-11);

        let s = KSchedule::hyperbolic(0.0, 0.05).unwrap();
        for t in [0.0, 1.0, 1e3] {
            assert_eq!(k_schedule(&s, t).unwrap(), 0.05);
        }
        assert_eq!(KSchedule::constant(0.05).unwrap().value(7.0).unwrap(), 0.05);
    }

    #[test]
    fn rejects_negative_inputs() {
        assert!(KSchedule::hyperbolic(-0.1, 0.0).is_err());
        assert!(KSchedule::hyperbolic(0.1, f64::NAN).is_err());
        assert!(KSchedule::hyperbolic(0.1, 0.0)
            .unwrap()
            .value(-1.0)
            .is_err());
    }

    #[test]
    fn hyperbolic_is_decreasing_with_diverging_integral() {
        let s = KSchedule::hyperbolic(0.3, 0.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = s.value(i as f64 * 0.5).unwrap();
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
        // trapezoid quadrature against the closed form
        let t_end = 50.0;
        let steps = 200_000;
        let dt = t_end / steps as f64;
        let mut quad = 0.0;
        for i in 0..steps {
            let a = s.value(i as f64 * dt).unwrap();
            let b = s.value((i + 1) as f64 * dt).unwrap();
            quad += 0.5 * (a + b) * dt;
        }
        assert!((quad - s.integral(t_end).unwrap()).abs() < 1e-8);
        assert!(s.integral(1e12).unwrap() > 8.0);
    }
}
