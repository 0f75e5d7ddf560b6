//! Small numeric primitives shared across the pipeline, generic over the
//! scalar type.

use crate::num::Real;

/// Two-sided moving average with symmetric truncation at the ends.
///
/// At index `i` the window covers `i - h ..= i + h` with
/// `h = min((window-1)/2, i, n-1-i)`, so the window shrinks symmetrically
/// near the boundaries instead of padding with phantom values.
pub fn moving_average<T: Real>(values: &[T], window: usize) -> Vec<T> {
    assert!(window >= 1 && window % 2 == 1, "window must be odd and >= 1");
    let n = values.len();
    let half = (window - 1) / 2;
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let lo = i - h;
            let hi = i + h;
            let sum: T = values[lo..=hi].iter().copied().sum();
            sum / T::from_usize_lossy(hi - lo + 1)
        })
        .collect()
}

/// Least-squares fit of a line `y = intercept + slope * x` through
/// `(x_i, y_i) = (i, values[i])`.
///
/// With fewer than two points the slope is zero and the intercept is the
/// value itself (or zero for an empty slice).
pub fn linear_fit<T: Real>(values: &[T]) -> LineFit<T> {
    let n = values.len();
    if n == 0 {
        return LineFit {
            intercept: T::zero(),
            slope: T::zero(),
        };
    }
    if n == 1 {
        return LineFit {
            intercept: values[0],
            slope: T::zero(),
        };
    }
    let nf = T::from_usize_lossy(n);
    let mean_x = (nf - T::one()) / T::from_f64_lossy(2.0);
    let mean_y = values.iter().copied().sum::<T>() / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (i, &y) in values.iter().enumerate() {
        let dx = T::from_usize_lossy(i) - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    let slope = sxy / sxx;
    LineFit {
        intercept: mean_y - slope * mean_x,
        slope,
    }
}

/// Result of [`linear_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub intercept: T,
    pub slope: T,
}

impl<T: Real> LineFit<T> {
    pub fn eval(&self, x: T) -> T {
        self.intercept + self.slope * x
    }
}

pub fn mean<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len())
}

/// Population variance (divides by n).
pub fn variance<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let m = mean(values);
    values
        .iter()
        .map(|&v| {
            let d = v - m;
            d * d
        })
        .sum::<T>()
        / T::from_usize_lossy(values.len())
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
