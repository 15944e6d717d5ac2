//! Magnetic field seen by the atoms while the trap coils discharge.
//!
//! Each coil set contributes a y and a z component that decays
//! exponentially with its own 1/e time. The Ioffe and quadrupole
//! z-contributions point in opposite directions, so when the Ioffe coil is
//! switched off faster its contribution can fall below the quadrupole one
//! and `B_z` changes sign. Near that instant the field is well described by
//! a constant transverse part `A_y` and a linear ramp `A_z − C_z·t`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spin::SpinSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldMode {
    /// Both coils decay as `e^{-t/τ}` from `t = 0`; before that the field
    /// is static at its initial value.
    ExactExponential,
    /// `B_y = A_y`, `B_z = A_z − C_z·t` for all real `t`.
    Linearized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldModel {
    b_yi: f64,
    b_yq: f64,
    b_zi: f64,
    b_zq: f64,
    tau_i: f64,
    tau_q: f64,
    mode: FieldMode,
}

/// Field value and slope at the zero crossing of `B_z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reversal {
    pub time: f64,
    /// `B_y` at the crossing.
    pub transverse: f64,
    /// `|dB_z/dt|` at the crossing.
    pub slope: f64,
}

impl FieldModel {
    pub fn new(
        b_yi: f64,
        b_yq: f64,
        b_zi: f64,
        b_zq: f64,
        tau_i: f64,
        tau_q: f64,
        mode: FieldMode,
    ) -> Result<Self> {
        for (name, value) in [("b_yi", b_yi), ("b_yq", b_yq), ("b_zi", b_zi), ("b_zq", b_zq)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(name, format!("must be a non-negative field, got {value}")));
            }
        }
        for (name, value) in [("tau_i", tau_i), ("tau_q", tau_q)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be a positive time, got {value}")));
            }
        }
        if b_yi + b_yq <= 0.0 {
            return Err(Error::invalid(
                "b_yi",
                "transverse field A_y = b_yi + b_yq must be positive",
            ));
        }
        Ok(FieldModel {
            b_yi,
            b_yq,
            b_zi,
            b_zq,
            tau_i,
            tau_q,
            mode,
        })
    }

    /// A linearized ramp with the given `A_y`, `A_z` and `C_z`.
    ///
    /// The coil parameters are chosen so that the exponential model also
    /// reverses: `B_zI = 2A_z`, `B_zQ = A_z`, the transverse field comes from
    /// the quadrupole coils, and `τ_q` is 10⁶ reversal times.
    pub fn from_linear(a_y: f64, a_z: f64, c_z: f64) -> Result<Self> {
        if !(a_z.is_finite() && a_z > 0.0) {
            return Err(Error::invalid("a_z", format!("must be positive, got {a_z}")));
        }
        if !(c_z.is_finite() && c_z > 0.0) {
            return Err(Error::invalid("c_z", format!("must be positive, got {c_z}")));
        }
        let tau_q = 1e6 * a_z / c_z;
        let tau_i = 2.0 * a_z / (c_z + a_z / tau_q);
        Self::new(0.0, a_y, 2.0 * a_z, a_z, tau_i, tau_q, FieldMode::Linearized)
    }

    pub fn b_yi(&self) -> f64 {
        self.b_yi
    }

    pub fn b_yq(&self) -> f64 {
        self.b_yq
    }

    pub fn b_zi(&self) -> f64 {
        self.b_zi
    }

    pub fn b_zq(&self) -> f64 {
        self.b_zq
    }

    pub fn tau_i(&self) -> f64 {
        self.tau_i
    }

    pub fn tau_q(&self) -> f64 {
        self.tau_q
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: FieldMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tau_i(self, tau_i: f64) -> Result<Self> {
        Self::new(self.b_yi, self.b_yq, self.b_zi, self.b_zq, tau_i, self.tau_q, self.mode)
    }

    pub fn a_y(&self) -> f64 {
        self.b_yi + self.b_yq
    }

    pub fn a_z(&self) -> f64 {
        self.b_zi - self.b_zq
    }

    pub fn c_z(&self) -> f64 {
        self.b_zi / self.tau_i - self.b_zq / self.tau_q
    }

    /// `(B_x, B_y, B_z)` in tesla.
    pub fn field_at(&self, t: f64) -> [f64; 3] {
        match self.mode {
            FieldMode::Linearized => [0.0, self.a_y(), self.a_z() - self.c_z() * t],
            FieldMode::ExactExponential => {
                let (ei, eq) = self.decay_factors(t);
                [
                    0.0,
                    self.b_yi * ei + self.b_yq * eq,
                    self.b_zi * ei - self.b_zq * eq,
                ]
            }
        }
    }

    /// Time derivative of [`field_at`](Self::field_at), T/s. For the
    /// exponential model the right derivative is returned at `t = 0`.
    pub fn field_rate(&self, t: f64) -> [f64; 3] {
        match self.mode {
            FieldMode::Linearized => [0.0, 0.0, -self.c_z()],
            FieldMode::ExactExponential => {
                if t < 0.0 {
                    return [0.0; 3];
                }
                let (ei, eq) = self.decay_factors(t);
                [
                    0.0,
                    -(self.b_yi / self.tau_i) * ei - (self.b_yq / self.tau_q) * eq,
                    -(self.b_zi / self.tau_i) * ei + (self.b_zq / self.tau_q) * eq,
                ]
            }
        }
    }

    fn decay_factors(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            (1.0, 1.0)
        } else {
            ((-t / self.tau_i).exp(), (-t / self.tau_q).exp())
        }
    }

    pub fn magnitude_at(&self, t: f64) -> f64 {
        let [bx, by, bz] = self.field_at(t);
        (bx * bx + by * by + bz * bz).sqrt()
    }

    /// Time at which `B_z` crosses zero.
    pub fn reversal_time(&self) -> Result<f64> {
        match self.mode {
            FieldMode::Linearized => {
                let (a_z, c_z) = (self.a_z(), self.c_z());
                if !(c_z > 0.0) {
                    return Err(Error::NoReversal(format!("C_z = {c_z:e} T/s is not positive")));
                }
                if !(a_z > 0.0) {
                    return Err(Error::NoReversal(format!("A_z = {a_z:e} T is not positive")));
                }
                Ok(a_z / c_z)
            }
            FieldMode::ExactExponential => {
                if !(self.b_zi > self.b_zq && self.b_zq > 0.0) {
                    return Err(Error::NoReversal(format!(
                        "need B_zI > B_zQ > 0, got B_zI = {:e} T, B_zQ = {:e} T",
                        self.b_zi, self.b_zq
                    )));
                }
                if !(self.tau_i < self.tau_q) {
                    return Err(Error::NoReversal(format!(
                        "need tau_i < tau_q, got tau_i = {:e} s, tau_q = {:e} s",
                        self.tau_i, self.tau_q
                    )));
                }
                Ok((self.b_zi / self.b_zq).ln() / (1.0 / self.tau_i - 1.0 / self.tau_q))
            }
        }
    }

    /// Whether the discharging coils actually reverse `B_z`. This is decided
    /// by the exponential model whatever the mode: a linear ramp always
    /// crosses zero when `C_z > 0`, even for `τ_i = τ_q` where the real
    /// field only decays towards zero.
    pub fn reverses(&self) -> bool {
        self.with_mode(FieldMode::ExactExponential).reversal_time().is_ok()
    }

    pub fn reversal(&self) -> Result<Reversal> {
        let time = self.reversal_time()?;
        let [_, transverse, _] = self.field_at(time);
        let [_, _, rate] = self.field_rate(time);
        Ok(Reversal {
            time,
            transverse,
            slope: rate.abs(),
        })
    }

    /// Angular rate of the field direction in the y-z plane, divided by 2π.
    pub fn rotation_frequency(&self, t: f64) -> Result<f64> {
        let [_, by, bz] = self.field_at(t);
        let [_, dby, dbz] = self.field_rate(t);
        let mag2 = by * by + bz * bz;
        if mag2 == 0.0 {
            return Err(Error::ZeroField { t });
        }
        Ok((by * dbz - bz * dby).abs() / mag2 / (2.0 * PI))
    }

    /// Spin precession frequency `gμ_B|B|/(2πħ)`.
    pub fn larmor_frequency(&self, sys: &SpinSystem, t: f64) -> Result<f64> {
        let mag = self.magnitude_at(t);
        if mag == 0.0 {
            return Err(Error::ZeroField { t });
        }
        Ok(sys.gyromagnetic_ratio() * mag / (2.0 * PI))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const GAUSS: f64 = 1e-4;
    const US: f64 = 1e-6;

    fn linear(a_y: f64, a_z: f64, c_z: f64) -> FieldModel {
        FieldModel::from_linear(a_y, a_z, c_z).unwrap()
    }

    #[test]
    fn linearized_values_at_origin_and_crossing() {
        let m = linear(0.5 * GAUSS, 1.0 * GAUSS, 3.0);
        assert_eq!(m.field_at(0.0), [0.0, m.a_y(), m.a_z()]);
        let t_star = m.a_z() / m.c_z();
        let [bx, by, bz] = m.field_at(t_star);
        assert_eq!(bx, 0.0);
        assert_eq!(by, m.a_y());
        assert!(bz.abs() < 1e-20);
    }

    #[test]
    fn exponential_field_by_hand() {
        let (bzq, tau_q) = (0.7 * GAUSS, 100.0 * US);
        let m = FieldModel::new(0.1 * GAUSS, 0.2 * GAUSS, 2.0 * bzq, bzq, tau_q / 2.0, tau_q, FieldMode::ExactExponential)
            .unwrap();
        let t = tau_q * 2f64.ln();
        // e^{-t/τ_i} = e^{-2 ln 2} = 1/4, e^{-t/τ_q} = 1/2
        let expected_bz = 2.0 * bzq * 0.25 - bzq * 0.5;
        let expected_by = 0.1 * GAUSS * 0.25 + 0.2 * GAUSS * 0.5;
        let [bx, by, bz] = m.field_at(t);
        assert_eq!(bx, 0.0);
        assert_relative_eq!(by, expected_by, max_relative = 1e-14);
        assert!((bz - expected_bz).abs() < 1e-14 * bzq);
    }

    #[test]
    fn exponential_is_static_before_switch_off() {
        let m = FieldModel::new(0.1, 0.2, 2.0, 1.0, 1.0, 2.0, FieldMode::ExactExponential).unwrap();
        assert_eq!(m.field_at(-3.0), m.field_at(0.0));
        assert_eq!(m.field_rate(-1.0), [0.0; 3]);
    }

    #[test]
    fn linear_and_exponential_agree_at_switch_off() {
        let exact = FieldModel::new(0.3 * GAUSS, 0.4 * GAUSS, 1.3 * GAUSS, 0.9 * GAUSS, 7.0 * US, 117.7 * US, FieldMode::ExactExponential)
            .unwrap();
        let lin = exact.with_mode(FieldMode::Linearized);
        assert_eq!(exact.field_at(0.0)[1], lin.a_y());
        assert_eq!(exact.field_at(0.0)[2], lin.a_z());
        assert_eq!(exact.field_rate(0.0)[2], -lin.c_z());
    }

    #[test]
    fn reversal_times() {
        let m = linear(0.5 * GAUSS, 1e-4, 1.0);
        assert_relative_eq!(m.reversal_time().unwrap(), 1e-4);

        let exact = FieldModel::new(0.0, 0.5 * GAUSS, 2.0 * GAUSS, 1.0 * GAUSS, 10.0 * US, 100.0 * US, FieldMode::ExactExponential)
            .unwrap();
        let t_star = exact.reversal_time().unwrap();
        let by_hand = 2f64.ln() / (1e5 - 1e4);
        assert_relative_eq!(t_star, by_hand, max_relative = 1e-14);
        assert!((t_star - 7.70e-6).abs() < 0.01e-6);
        assert!(exact.field_at(t_star)[2].abs() < 1e-15 * exact.b_zi());

        let same_tau = exact.with_tau_i(100.0 * US).unwrap();
        assert!(matches!(same_tau.reversal_time(), Err(Error::NoReversal(_))));
        assert!(!same_tau.reverses());
        // the linear ramp still has C_z > 0 here, but the coils never reverse
        assert!(same_tau.with_mode(FieldMode::Linearized).reversal_time().is_ok());
        assert!(!same_tau.with_mode(FieldMode::Linearized).reverses());
    }

    #[test]
    fn rotation_frequency_at_reversal() {
        let m = linear(0.3 * GAUSS, 1.0 * GAUSS, 20.0);
        let t_star = m.reversal_time().unwrap();
        assert_relative_eq!(
            m.rotation_frequency(t_star).unwrap(),
            m.c_z() / (2.0 * PI * m.a_y()),
            max_relative = 1e-14
        );
        for dt in [-3e-6, -1e-7, 1e-8, 2e-6] {
            assert!(m.rotation_frequency(t_star + dt).unwrap() < m.rotation_frequency(t_star).unwrap());
        }
    }

    #[test]
    fn constant_field_does_not_rotate() {
        // C_z = 0: B_zI/τ_i = B_zQ/τ_q
        let m = FieldModel::new(0.3 * GAUSS, 0.0, 2.0 * GAUSS, 1.0 * GAUSS, 50.0 * US, 25.0 * US, FieldMode::Linearized).unwrap();
        assert_eq!(m.c_z(), 0.0);
        assert_eq!(m.rotation_frequency(3.0 * US).unwrap(), 0.0);
    }

    #[test]
    fn larmor_frequency_by_hand() {
        let sys = SpinSystem::new(4).unwrap();
        let m = FieldModel::new(1e-4, 0.0, 0.0, 0.0, 1.0, 1.0, FieldMode::Linearized).unwrap();
        let by_hand = 0.5 * 9.2740100783e-24 * 1e-4 / (2.0 * PI * 1.054571817e-34);
        let f = m.larmor_frequency(&sys, 0.0).unwrap();
        assert_relative_eq!(f, by_hand, max_relative = 1e-14);
        assert!((f - 0.70e6).abs() < 0.01e6);
    }

    #[test]
    fn from_linear_reproduces_parameters() {
        let m = linear(0.3 * GAUSS, 1.5 * GAUSS, 42.0);
        assert_eq!(m.a_y(), 0.3 * GAUSS);
        assert_relative_eq!(m.a_z(), 1.5 * GAUSS, max_relative = 1e-15);
        assert_relative_eq!(m.c_z(), 42.0, max_relative = 1e-12);
        assert!(m.reverses());
    }

    #[test]
    fn zero_field_is_reported() {
        let m = FieldModel::new(1e-4, 0.0, 2e-4, 1e-4, 1e-6, 2e-6, FieldMode::ExactExponential).unwrap();
        let sys = SpinSystem::new(1).unwrap();
        assert!(matches!(m.rotation_frequency(1.0), Err(Error::ZeroField { .. })));
        assert!(matches!(m.larmor_frequency(&sys, 1.0), Err(Error::ZeroField { .. })));
    }

    #[test]
    fn validation() {
        assert!(FieldModel::new(0.0, 0.0, 1.0, 0.5, 1.0, 1.0, FieldMode::Linearized).is_err());
        assert!(FieldModel::new(1.0, 0.0, -1.0, 0.5, 1.0, 1.0, FieldMode::Linearized).is_err());
        assert!(FieldModel::new(1.0, 0.0, 1.0, 0.5, 0.0, 1.0, FieldMode::Linearized).is_err());
        assert!(FieldModel::from_linear(1.0, 1.0, -2.0).is_err());
    }
}
