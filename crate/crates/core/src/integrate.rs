//! Classical fixed-step fourth-order Runge-Kutta on flat state vectors.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("integration blow-up: non-finite state at t = {time} s")]
    Blowup { time: f64 },
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
}

/// One RK4 step of `x' = f(t, x)`. `f` writes the derivative into its
/// output slice.
pub fn rk4_step<T: Real>(t: T, x: &[T], dt: T, mut f: impl FnMut(T, &[T], &mut [T])) -> Vec<T> {
    let n = x.len();
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];

    f(t, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + half * dt * k1[i];
    }
    f(t + half * dt, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + half * dt * k2[i];
    }
    f(t + half * dt, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(t + dt, &tmp, &mut k4);
    (0..n)
        .map(|i| x[i] + sixth * dt * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect()
}

pub fn all_finite<T: Real>(x: &[T]) -> bool {
    x.iter().all(|v| v.is_finite())
}
