use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used throughout the numerical modules.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + serde::Serialize
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Running sum with Kahan–Babuška compensation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> KahanSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// Streaming `ln Σ exp(x_i)` with a moving shift and compensated summation.
#[derive(Clone, Debug)]
pub struct LogSumExp<T> {
    shift: Option<T>,
    acc: KahanSum<T>,
}

impl<T: Real> Default for LogSumExp<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LogSumExp<T> {
    pub fn new() -> Self {
        Self {
            shift: None,
            acc: KahanSum::new(),
        }
    }

    pub fn add(&mut self, log_w: T) {
        if log_w == T::neg_infinity() {
            return;
        }
        match self.shift {
            None => {
                self.shift = Some(log_w);
                self.acc.add(T::one());
            }
            Some(s) if log_w > s + T::of(30.0) => {
                let scaled = self.acc.value() * (s - log_w).exp();
                self.acc = KahanSum::new();
                self.acc.add(scaled);
                self.acc.add(T::one());
                self.shift = Some(log_w);
            }
            Some(s) => self.acc.add((log_w - s).exp()),
        }
    }

    pub fn value(&self) -> T {
        match self.shift {
            None => T::neg_infinity(),
            Some(s) => s + self.acc.value().ln(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::<f64>::new();
        k.add(1.0);
        for _ in 0..10_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_wide_range() {
        let mut l = LogSumExp::<f64>::new();
        l.add(0.0);
        l.add(800.0);
        l.add(800.0);
        assert!((l.value() - (800.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(LogSumExp::<f64>::new().value(), f64::NEG_INFINITY);
    }
}
