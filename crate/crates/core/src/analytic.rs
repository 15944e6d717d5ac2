//! Closed-form Majorana transition probabilities.
//!
//! A linear sweep of `B_z` through zero under a constant transverse field
//! `A_y` is a Landau-Zener crossing. For spin 1/2 the probability that the
//! spin keeps its lab-frame direction (and so ends anti-aligned with the
//! reversed field) is `exp(−K·A_y²/C_z)` with `K = π·g·μ_B/(2ħ)`. Because
//! the spin Hamiltonian is linear in `F`, the spin-J evolution is the
//! spin-J representation of the same SU(2) rotation, and the full
//! transition matrix is `|d^J_{m'm}(θ)|²` with `sin²(θ/2)` equal to the
//! spin-1/2 flip probability.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::spin::{Projection, SpinSystem, TransitionMatrix};

/// Largest `2J` the log-factorial table covers.
pub const MAX_TWO_J: u32 = 40;

/// Rotation angle of the equivalent spin rotation, with its spin-1/2 flip
/// probability `sin²(θ/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaParam {
    theta: f64,
    p_half: f64,
}

impl ThetaParam {
    pub fn from_theta(theta: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::Domain(format!("theta = {theta} is outside [0, π]")));
        }
        let s = (theta / 2.0).sin();
        Ok(ThetaParam {
            theta,
            p_half: s * s,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p_half(&self) -> f64 {
        self.p_half
    }
}

/// `exp(−f_Lar/f_Rot)`: the spin-1/2 flip probability quoted in terms of
/// the Larmor and field-rotation frequencies.
///
/// Note that this differs from [`flip_probability`] with the default
/// constant by a factor of π/2 in the exponent when both frequencies are
/// taken at the reversal.
pub fn majorana_two_level(f_lar: f64, f_rot: f64) -> Result<f64> {
    if !(f_rot > 0.0) {
        return Err(Error::Domain(format!("f_rot = {f_rot} must be positive")));
    }
    if !(f_lar >= 0.0) {
        return Err(Error::Domain(format!("f_lar = {f_lar} must be non-negative")));
    }
    Ok((-f_lar / f_rot).exp())
}

/// `π·g·μ_B/(2ħ)`, which makes [`flip_probability`] the Landau-Zener
/// probability of the spin-1/2 dynamics. Units T⁻¹ s⁻¹.
pub fn landau_zener_constant(sys: &SpinSystem) -> f64 {
    PI * sys.gyromagnetic_ratio() / 2.0
}

/// `exp(−K·A_y²/(B_zI/τ_i − B_zQ/τ_q))`.
pub fn flip_probability(model: &FieldModel, k: f64) -> Result<f64> {
    let c_z = model.c_z();
    if !(c_z > 0.0) {
        return Err(Error::NoReversal(format!("C_z = {c_z:e} T/s is not positive")));
    }
    let a_y = model.a_y();
    Ok((-k * a_y * a_y / c_z).exp())
}

pub fn theta_from_p(p_half: f64) -> Result<ThetaParam> {
    if !(0.0..=1.0).contains(&p_half) {
        return Err(Error::Domain(format!("probability {p_half} is outside [0, 1]")));
    }
    Ok(ThetaParam {
        theta: 2.0 * p_half.sqrt().asin(),
        p_half,
    })
}

fn ln_factorial(n: i32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(2 * MAX_TWO_J as usize + 2);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..=(2 * MAX_TWO_J as usize + 1) {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    table[n as usize]
}

/// One entry of the transition matrix, `P(m → m')`.
///
/// Each term of the alternating sum is `cos^a(θ/2)·sin^b(θ/2)` times a
/// ratio of factorials, with `a = 2J + m − m' − 2ν` and `b = 2ν − m + m'`,
/// both non-negative over the admissible range of `ν`. Terms with a
/// negative factorial argument vanish.
fn transition_probability(two_j: i32, two_m: i32, two_mp: i32, cos_half: f64, sin_half: f64) -> f64 {
    let j_plus_m = (two_j + two_m) / 2;
    let j_minus_m = (two_j - two_m) / 2;
    let j_plus_mp = (two_j + two_mp) / 2;
    let j_minus_mp = (two_j - two_mp) / 2;
    let shift = (two_mp - two_m) / 2;

    let ln_norm = 0.5
        * (ln_factorial(j_plus_m)
            + ln_factorial(j_minus_m)
            + ln_factorial(j_plus_mp)
            + ln_factorial(j_minus_mp));
    let ln_cos = cos_half.ln();
    let ln_sin = sin_half.ln();

    let lo = 0.max(-shift);
    let hi = j_plus_m.min(j_minus_mp);
    let mut sum = 0.0;
    for nu in lo..=hi {
        let cos_pow = two_j - 2 * nu - shift;
        let sin_pow = 2 * nu + shift;
        let mut ln_term = ln_norm
            - ln_factorial(nu)
            - ln_factorial(nu + shift)
            - ln_factorial(j_plus_m - nu)
            - ln_factorial(j_minus_mp - nu);
        if cos_pow > 0 {
            if cos_half == 0.0 {
                continue;
            }
            ln_term += f64::from(cos_pow) * ln_cos;
        }
        if sin_pow > 0 {
            if sin_half == 0.0 {
                continue;
            }
            ln_term += f64::from(sin_pow) * ln_sin;
        }
        let sign = if nu % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * ln_term.exp();
    }
    sum * sum
}

/// Transition probabilities between all pairs of projections for spin `J`.
pub fn multilevel_matrix(sys: &SpinSystem, theta: ThetaParam) -> Result<TransitionMatrix> {
    let two_j = sys.two_j();
    if two_j > MAX_TWO_J {
        return Err(Error::invalid(
            "two_j",
            format!("2J = {two_j} exceeds the supported maximum {MAX_TWO_J}"),
        ));
    }
    let half = theta.theta() / 2.0;
    let (sin_half, cos_half) = half.sin_cos();
    let n = sys.dim();
    let two_j = two_j as i32;
    let entries = DMatrix::from_fn(n, n, |row, col| {
        let two_m = sys.projection_at(row).twice();
        let two_mp = sys.projection_at(col).twice();
        transition_probability(two_j, two_m, two_mp, cos_half, sin_half)
    });
    TransitionMatrix::from_entries(sys.two_j(), entries)
}

/// Duration over which the field direction rotates faster than the spin
/// precesses, for the linearized ramp. Zero when rotation never overtakes
/// precession.
pub fn transition_window(sys: &SpinSystem, model: &FieldModel) -> Result<f64> {
    let c_z = model.c_z();
    if !(c_z > 0.0) {
        return Err(Error::NoReversal(format!("C_z = {c_z:e} T/s is not positive")));
    }
    let a_y = model.a_y();
    // (A_y ħ/gμ_B)^{2/3} C_z^{-4/3} − A_y² C_z^{-2}, factored as
    // (A_y/C_z)²·((C_z/(γ A_y²))^{2/3} − 1)
    let rate_ratio = c_z / (sys.gyromagnetic_ratio() * a_y * a_y);
    let excess = rate_ratio.powf(2.0 / 3.0) - 1.0;
    if excess <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * (a_y / c_z) * excess.sqrt())
}

/// Final distribution over `m'` for atoms starting in `m0`, from the
/// closed-form flip probability lifted to spin J. When the coils do not
/// reverse the field the atoms stay in `m0`.
pub fn analytic_distribution(
    sys: &SpinSystem,
    model: &FieldModel,
    m0: Projection,
    k: f64,
) -> Result<Vec<f64>> {
    let start = sys.index_of(m0)?;
    if !model.reverses() {
        let mut delta = vec![0.0; sys.dim()];
        delta[start] = 1.0;
        return Ok(delta);
    }
    let p = flip_probability(model, k)?;
    let matrix = multilevel_matrix(sys, theta_from_p(p)?)?;
    Ok(matrix.row(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldMode;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const GAUSS: f64 = 1e-4;
    const US: f64 = 1e-6;

    fn matrix(two_j: u32, theta: f64) -> TransitionMatrix {
        let sys = SpinSystem::new(two_j).unwrap();
        multilevel_matrix(&sys, ThetaParam::from_theta(theta).unwrap()).unwrap()
    }

    #[test]
    fn two_level_values() {
        assert_eq!(majorana_two_level(0.0, 1e6).unwrap(), 1.0);
        assert_relative_eq!(majorana_two_level(1e6, 1e6).unwrap(), (-1f64).exp());
        assert_relative_eq!(majorana_two_level(2e6, 1e6).unwrap(), 0.1353352832366127, max_relative = 1e-15);
        assert!(matches!(majorana_two_level(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta_from_p(0.0).unwrap().theta(), 0.0);
        assert_relative_eq!(theta_from_p(1.0).unwrap().theta(), PI);
        assert_relative_eq!(theta_from_p(0.5).unwrap().theta(), PI / 2.0, max_relative = 1e-15);
        assert!(theta_from_p(1.5).is_err());
        assert!(theta_from_p(-0.1).is_err());
    }

    #[test]
    fn identity_at_zero_angle() {
        let m = matrix(4, 0.0);
        assert_eq!(m.entries(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn spin_half_quarter_turn() {
        let m = matrix(1, PI / 2.0);
        for p in m.entries().iter() {
            assert_relative_eq!(*p, 0.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn spin_one_quarter_turn() {
        // |d¹₀₀| = |cos θ| = 0, |d¹_{0,±1}|² = sin²θ/2, |d¹_{1,1}|² = ((1+cos θ)/2)²
        let m = matrix(2, PI / 2.0);
        let expected = [[0.25, 0.5, 0.25], [0.5, 0.0, 0.5], [0.25, 0.5, 0.25]];
        for (r, row) in expected.iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                assert!((m.get(r, c) - p).abs() < 1e-15, "({r},{c}) = {}", m.get(r, c));
            }
        }
    }

    #[test]
    fn full_reversal_is_antidiagonal() {
        let m = matrix(4, PI);
        for r in 0..5 {
            for c in 0..5 {
                let expected = if r + c == 4 { 1.0 } else { 0.0 };
                assert!((m.get(r, c) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stretched_state_reversal_is_power_of_p() {
        // P(J → −J) = sin^{4J}(θ/2) = p^{2J}
        for two_j in 1..=8u32 {
            let p = 0.37;
            let sys = SpinSystem::new(two_j).unwrap();
            let m = multilevel_matrix(&sys, theta_from_p(p).unwrap()).unwrap();
            assert_relative_eq!(m.get(0, two_j as usize), p.powi(two_j as i32), max_relative = 1e-12);
        }
    }

    #[test]
    fn large_spin_stays_finite() {
        let m = matrix(MAX_TWO_J, 1.3);
        assert!(m.stochastic_error() < 1e-9);
        let sys = SpinSystem::new(MAX_TWO_J + 1).unwrap();
        assert!(multilevel_matrix(&sys, ThetaParam::from_theta(1.0).unwrap()).is_err());
    }

    fn reversing_model(tau_i: f64) -> FieldModel {
        FieldModel::new(0.04 * GAUSS, 0.045 * GAUSS, 1.0 * GAUSS, 0.5 * GAUSS, tau_i, 117.7 * US, FieldMode::Linearized)
            .unwrap()
    }

    #[test]
    fn flip_probability_limits() {
        let sys = SpinSystem::new(4).unwrap();
        let k = landau_zener_constant(&sys);
        assert!(flip_probability(&reversing_model(1e-12), k).unwrap() > 1.0 - 1e-6);
        // τ_i = τ_q·B_zI/B_zQ makes C_z vanish
        let flat = reversing_model(2.0 * 117.7 * US);
        assert!(flat.c_z().abs() < 1e-9);
        let flat = FieldModel::new(0.04 * GAUSS, 0.0, 1.0 * GAUSS, 0.5 * GAUSS, 2.0, 1.0, FieldMode::Linearized).unwrap();
        assert_eq!(flat.c_z(), 0.0);
        assert!(matches!(flip_probability(&flat, k), Err(Error::NoReversal(_))));
    }

    #[test]
    fn default_constant_value() {
        let sys = SpinSystem::new(1).unwrap();
        let by_hand = PI * 0.5 * 9.2740100783e-24 / (2.0 * 1.054571817e-34);
        assert_relative_eq!(landau_zener_constant(&sys), by_hand, max_relative = 1e-15);
    }

    #[test]
    fn window_literal_formula() {
        let sys = SpinSystem::new(1).unwrap();
        let gamma = sys.gyromagnetic_ratio();
        let a_y = 0.2 * GAUSS;
        let boundary = gamma * a_y * a_y;
        for c_z in [0.5 * boundary, 1.5 * boundary, 10.0 * boundary, 1e3 * boundary] {
            let model = FieldModel::from_linear(a_y, 1.0 * GAUSS, c_z).unwrap();
            let radicand = (a_y / gamma).powf(2.0 / 3.0) * c_z.powf(-4.0 / 3.0) - a_y * a_y * c_z.powi(-2);
            let literal = if radicand > 0.0 { 2.0 * radicand.sqrt() } else { 0.0 };
            let dt = transition_window(&sys, &model).unwrap();
            assert!((dt - literal).abs() <= 1e-9 * literal.max(1e-12), "{dt} vs {literal}");
        }
    }

    #[test]
    fn window_is_empty_for_slow_ramps() {
        let sys = SpinSystem::new(4).unwrap();
        let model = FieldModel::from_linear(1.0 * GAUSS, 1.0 * GAUSS, 1e-3).unwrap();
        assert_eq!(transition_window(&sys, &model).unwrap(), 0.0);
        let flat = FieldModel::new(0.04 * GAUSS, 0.0, 1.0 * GAUSS, 0.5 * GAUSS, 2.0, 1.0, FieldMode::Linearized).unwrap();
        assert!(matches!(transition_window(&sys, &flat), Err(Error::NoReversal(_))));
    }

    #[test]
    fn distribution_without_reversal_is_delta() {
        let sys = SpinSystem::new(4).unwrap();
        let k = landau_zener_constant(&sys);
        let d = analytic_distribution(&sys, &reversing_model(117.7 * US), Projection::from_twice(4), k).unwrap();
        assert_eq!(d, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn distribution_fast_switch_off_reaches_opposite_state() {
        let sys = SpinSystem::new(4).unwrap();
        let k = landau_zener_constant(&sys);
        let d = analytic_distribution(&sys, &reversing_model(1e-12), Projection::from_twice(4), k).unwrap();
        assert!(d[4] > 1.0 - 1e-5);
    }

    proptest! {
        #[test]
        fn matrix_is_doubly_stochastic_and_symmetric(two_j in 1u32..=8, theta in 0.0..=PI) {
            let m = matrix(two_j, theta);
            prop_assert!(m.stochastic_error() < 1e-12);
            prop_assert!(m.symmetry_error() < 1e-12);
            prop_assert!(m.entries().iter().all(|&p| (-1e-15..=1.0 + 1e-12).contains(&p)));
        }

        #[test]
        fn spin_half_reduces_to_sin_squared(theta in 0.0..=PI) {
            let m = matrix(1, theta);
            let s = (theta / 2.0).sin();
            prop_assert!((m.get(0, 1) - s * s).abs() < 1e-15);
        }

        #[test]
        fn theta_round_trip(p in 0.0..=1.0f64) {
            let t = theta_from_p(p).unwrap();
            let s = (t.theta() / 2.0).sin();
            prop_assert!((s * s - p).abs() <= 1e-15);
            prop_assert!((0.0..=PI).contains(&t.theta()));
        }

        #[test]
        fn flip_probability_grows_as_ioffe_switches_faster(tau_a in 1.0e-6..58.0e-6, frac in 0.05..0.95f64) {
            let sys = SpinSystem::new(4).unwrap();
            let k = landau_zener_constant(&sys);
            let slow = flip_probability(&reversing_model(tau_a), k).unwrap();
            let fast = flip_probability(&reversing_model(tau_a * frac), k).unwrap();
            prop_assert!(fast >= slow);
        }

        #[test]
        fn window_shrinks_with_ramp_rate(scale in 1.01..1e4f64, factor in 1.01..10.0f64) {
            let sys = SpinSystem::new(4).unwrap();
            let a_y = 0.1 * GAUSS;
            let boundary = sys.gyromagnetic_ratio() * a_y * a_y;
            // past the maximum of Δt(C_z), which sits at C_z = boundary·(3/2)^{3/2}
            let c1 = boundary * 1.8371173070873836 * scale;
            let w1 = transition_window(&sys, &FieldModel::from_linear(a_y, GAUSS, c1).unwrap()).unwrap();
            let w2 = transition_window(&sys, &FieldModel::from_linear(a_y, GAUSS, c1 * factor).unwrap()).unwrap();
            prop_assert!(w1 > 0.0);
            prop_assert!(w2 < w1);
        }

        #[test]
        fn symmetric_start_gives_symmetric_distribution(tau_i in 0.5e-6..117.7e-6) {
            let sys = SpinSystem::new(4).unwrap();
            let k = landau_zener_constant(&sys);
            let d = analytic_distribution(&sys, &reversing_model(tau_i), Projection::from_twice(0), k).unwrap();
            for i in 0..5 {
                prop_assert!((d[i] - d[4 - i]).abs() < 1e-12);
            }
        }
    }
}
