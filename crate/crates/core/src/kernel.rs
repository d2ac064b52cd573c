//! Double-exponential current kernels and the square-law branch
//! nonlinearity.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Amplitude that normalizes the peak of `e^{-t/τs} - e^{-t/τf}` to 1 when
/// `τf = τs / 10`.
pub const NORMALIZED_I0: f64 = 1.4351;

/// Ratio `τs / τf` used for every kernel in the network.
pub const FAST_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub i0: f64,
    pub tau_s: f64,
    pub tau_f: f64,
}

impl KernelParams {
    pub fn new(i0: f64, tau_s: f64, tau_f: f64) -> Result<Self> {
        let k = Self { i0, tau_s, tau_f };
        k.validate()?;
        Ok(k)
    }

    /// Unit-peak kernel with `τf = τs / 10`.
    pub fn normalized(tau_s: f64) -> Self {
        Self {
            i0: NORMALIZED_I0,
            tau_s,
            tau_f: tau_s / FAST_RATIO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(param(format!("kernel amplitude {} must be > 0", self.i0)));
        }
        if !(self.tau_f > 0.0 && self.tau_s > self.tau_f && self.tau_s.is_finite()) {
            return Err(param(format!(
                "kernel needs tau_s > tau_f > 0 (got tau_s={}, tau_f={})",
                self.tau_s, self.tau_f
            )));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        kernel_value(self, t)
    }

    /// Location of the kernel maximum, `τs τf ln(τs/τf) / (τs - τf)`.
    pub fn peak_time(&self) -> f64 {
        self.tau_s * self.tau_f * (self.tau_s / self.tau_f).ln() / (self.tau_s - self.tau_f)
    }
}

/// Inhibitory kernel parameters; same functional form as [`KernelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhibitionParams {
    pub i0: f64,
    pub tau_s: f64,
    pub tau_f: f64,
}

impl InhibitionParams {
    pub fn new(i0: f64, tau_s: f64, tau_f: f64) -> Result<Self> {
        KernelParams::new(i0, tau_s, tau_f).map(|_| Self { i0, tau_s, tau_f })
    }

    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            i0: self.i0,
            tau_s: self.tau_s,
            tau_f: self.tau_f,
        }
    }
}

/// `I0 (e^{-t/τs} - e^{-t/τf})` for `t >= 0`, zero before.
pub fn kernel_value(p: &KernelParams, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    p.i0 * ((-t / p.tau_s).exp() - (-t / p.tau_f).exp())
}

/// `b(z) = z² / x_thr`.
#[inline]
pub fn branch_nonlinearity(z: f64, x_thr: f64) -> f64 {
    z * z / x_thr
}

/// `b'(z) = 2z / x_thr`.
#[inline]
pub fn branch_nonlinearity_derivative(z: f64, x_thr: f64) -> f64 {
    2.0 * z / x_thr
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_causal_and_starts_at_zero() {
        let k = KernelParams::normalized(0.02);
        assert_eq!(k.value(0.0), 0.0);
        assert_eq!(k.value(-1e-3), 0.0);
    }

    #[test]
    fn normalized_peak_is_unity() {
        let k = KernelParams::normalized(0.023315);
        // closed-form argmax for τf = τs/10
        let t_star = k.tau_s * 10f64.ln() / 9.0;
        assert!((k.peak_time() - t_star).abs() < 1e-15);
        // dense scan as an independent check on the maximum
        let scan_max = (0..200_000)
            .map(|i| k.value(i as f64 * 1e-6))
            .fold(f64::MIN, f64::max);
        assert!((scan_max - 1.0).abs() <= 1e-3, "{scan_max}");
        assert!((k.value(t_star) - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn nonlinearity_values() {
        let x = 2.5;
        assert_eq!(branch_nonlinearity(x, x), x);
        assert_eq!(branch_nonlinearity(0.0, x), 0.0);
        assert_eq!(branch_nonlinearity_derivative(0.0, x), 0.0);
        assert_eq!(branch_nonlinearity(2.0 * x, x), 4.0 * x);
        assert_eq!(branch_nonlinearity_derivative(x, x), 2.0);
    }

    #[test]
    fn rejects_inverted_time_constants() {
        assert!(KernelParams::new(1.0, 0.001, 0.01).is_err());
        assert!(KernelParams::new(0.0, 0.01, 0.001).is_err());
        assert!(InhibitionParams::new(1.0, 0.01, 0.01).is_err());
    }
}
