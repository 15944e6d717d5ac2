//! Turn-off-time sweeps through both engines, engine comparison, and an
//! independent Wigner small-d oracle.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::analytic::{self, landau_zener_constant};
use crate::error::{Error, Result};
use crate::field::{FieldMode, FieldModel};
use crate::propagator::{self, Basis, Diagnostics, PropagationSettings};
use crate::spin::{Projection, SpinSystem, TransitionMatrix};

const GAUSS: f64 = 1e-4;
const MICROSECOND: f64 = 1e-6;

/// Quadrupole-coil turn-off time of the reference experiment.
pub const REFERENCE_TAU_Q: f64 = 117.7 * MICROSECOND;

/// Ioffe turn-off times of the sweep starting from `m = +2`, in µs.
pub const STRETCHED_SWEEP_TAU_I_US: [f64; 7] = [117.7, 30.3, 16.1, 11.4, 7.7, 5.8, 4.4];

/// Ioffe turn-off times of the sweep starting from `m = 0`, in µs.
pub const CENTRAL_SWEEP_TAU_I_US: [f64; 7] = [157.6, 31.3, 19.5, 16.6, 8.8, 7.9, 4.3];

/// Field-rotation frequencies of the reference time traces, Hz.
pub const TRACE_F_ROT_HZ: [f64; 3] = [0.6e6, 1.2e6, 2.8e6];

/// Larmor frequency at the reversal used with [`TRACE_F_ROT_HZ`], Hz.
pub const TRACE_F_LAR_HZ: f64 = 0.1e6;

/// Discrepancy above which [`compare_engines`] flags a point.
pub const DISCREPANCY_FLAG: f64 = 1e-2;

/// Calibration of the coil fields at the atoms. With `τ_q = 117.7 µs` the
/// reference τ_i grid moves the spin-1/2 flip probability from about 0.09
/// at 30.3 µs to 0.73 at 4.4 µs.
pub fn reference_field_model() -> FieldModel {
    FieldModel::new(
        0.05 * GAUSS,
        0.05 * GAUSS,
        1.0 * GAUSS,
        0.5 * GAUSS,
        REFERENCE_TAU_Q,
        REFERENCE_TAU_Q,
        FieldMode::Linearized,
    )
    .expect("reference field parameters are valid")
}

/// A linearized ramp with the given Larmor and field-rotation frequencies
/// at the reversal.
pub fn ramp_from_frequencies(sys: &SpinSystem, f_lar: f64, f_rot: f64) -> Result<FieldModel> {
    if !(f_lar > 0.0) {
        return Err(Error::invalid("f_lar", format!("must be positive, got {f_lar}")));
    }
    if !(f_rot > 0.0) {
        return Err(Error::invalid("f_rot", format!("must be positive, got {f_rot}")));
    }
    let a_y = 2.0 * PI * f_lar / sys.gyromagnetic_ratio();
    let c_z = 2.0 * PI * a_y * f_rot;
    // The crossing sits well away from t = 0 so the default window fits.
    FieldModel::from_linear(a_y, 1e3 * a_y, c_z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engines {
    AnalyticOnly,
    NumericOnly,
    Both,
}

impl Engines {
    pub fn analytic(self) -> bool {
        matches!(self, Engines::AnalyticOnly | Engines::Both)
    }

    pub fn numeric(self) -> bool {
        matches!(self, Engines::NumericOnly | Engines::Both)
    }
}

/// Numeric settings applied at every sweep point; the integration window
/// is placed around each point's own reversal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Required `f_Lar/f_Rot` at both ends of the window.
    pub adiabaticity: f64,
    pub larmor_resolution: f64,
    pub max_step: f64,
    pub basis_out: Basis,
}

impl Default for NumericSettings {
    fn default() -> Self {
        NumericSettings {
            rel_tol: propagator::DEFAULT_REL_TOL,
            abs_tol: propagator::DEFAULT_ABS_TOL,
            adiabaticity: propagator::DEFAULT_ADIABATICITY,
            larmor_resolution: propagator::DEFAULT_LARMOR_RESOLUTION,
            max_step: f64::INFINITY,
            basis_out: Basis::FieldAligned,
        }
    }
}

impl NumericSettings {
    pub fn window_for(&self, sys: &SpinSystem, model: &FieldModel) -> Result<PropagationSettings> {
        let (t_start, t_end) = propagator::adiabatic_window(sys, model, self.adiabaticity)?;
        Ok(PropagationSettings {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            t_start,
            t_end,
            max_step: self.max_step,
            larmor_resolution: self.larmor_resolution,
            basis_out: self.basis_out,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub sys: SpinSystem,
    pub base_model: FieldModel,
    pub m0: Projection,
    pub tau_i_values: Vec<f64>,
    /// Constant of the closed-form flip probability; `None` uses
    /// [`landau_zener_constant`].
    pub k: Option<f64>,
    pub numeric: NumericSettings,
    pub engines: Engines,
}

impl SweepConfig {
    pub fn new(sys: SpinSystem, base_model: FieldModel, m0: Projection, tau_i_values: Vec<f64>) -> Self {
        SweepConfig {
            sys,
            base_model,
            m0,
            tau_i_values,
            k: None,
            numeric: NumericSettings::default(),
            engines: Engines::Both,
        }
    }

    pub fn k(&self) -> f64 {
        self.k.unwrap_or_else(|| landau_zener_constant(&self.sys))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_i_values.is_empty() {
            return Err(Error::invalid("tau_i", "at least one value is required"));
        }
        if let Some(bad) = self.tau_i_values.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::invalid("tau_i", format!("turn-off times must be positive, got {bad}")));
        }
        if let Some(k) = self.k {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::invalid("k", format!("must be positive, got {k}")));
            }
        }
        self.sys.index_of(self.m0)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub tau_i: f64,
    /// Whether the discharging coils reverse `B_z` at this τ_i.
    pub reverses: bool,
    pub analytic: Option<Vec<f64>>,
    pub numeric: Option<Vec<f64>>,
    pub f_rot_at_reversal: Option<f64>,
    pub flip_p: Option<f64>,
    pub theta: Option<f64>,
    pub window: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
    /// Failure of this point; the other points are unaffected.
    pub error: Option<String>,
}

impl SweepRecord {
    /// Largest entrywise `|analytic − numeric|`, when both are present.
    pub fn discrepancy(&self) -> Option<f64> {
        match (&self.analytic, &self.numeric) {
            (Some(a), Some(n)) => Some(a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub config: SweepConfig,
}

impl SweepResult {
    pub fn all_degenerate(&self) -> bool {
        self.records.iter().all(|r| !r.reverses || r.error.is_some())
    }

    pub fn worst_norm_drift(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.diagnostics.map(|d| d.worst_norm_drift))
            .fold(0.0, f64::max)
    }
}

fn delta(sys: &SpinSystem, m0: Projection) -> Result<Vec<f64>> {
    let mut d = vec![0.0; sys.dim()];
    d[sys.index_of(m0)?] = 1.0;
    Ok(d)
}

fn sweep_point(config: &SweepConfig, tau_i: f64) -> SweepRecord {
    let mut record = SweepRecord {
        tau_i,
        reverses: false,
        analytic: None,
        numeric: None,
        f_rot_at_reversal: None,
        flip_p: None,
        theta: None,
        window: None,
        diagnostics: None,
        error: None,
    };
    if let Err(e) = fill_point(config, &mut record) {
        record.error = Some(e.to_string());
    }
    record
}

fn fill_point(config: &SweepConfig, record: &mut SweepRecord) -> Result<()> {
    let sys = &config.sys;
    let model = config.base_model.with_tau_i(record.tau_i)?;
    record.reverses = model.reverses();
    if !record.reverses {
        let d = delta(sys, config.m0)?;
        if config.engines.analytic() {
            record.analytic = Some(d.clone());
        }
        if config.engines.numeric() {
            record.numeric = Some(d);
        }
        record.window = Some(0.0);
        return Ok(());
    }

    let rev = model.reversal()?;
    record.f_rot_at_reversal = Some(model.rotation_frequency(rev.time)?);
    let p = analytic::flip_probability(&model, config.k())?;
    let theta = analytic::theta_from_p(p)?;
    record.flip_p = Some(p);
    record.theta = Some(theta.theta());
    record.window = Some(analytic::transition_window(sys, &model)?);

    if config.engines.analytic() {
        let matrix = analytic::multilevel_matrix(sys, theta)?;
        record.analytic = Some(matrix.row(sys.index_of(config.m0)?));
    }
    if config.engines.numeric() {
        let settings = config.numeric.window_for(sys, &model)?;
        let out = propagator::final_populations(sys, &model, config.m0, &settings)?;
        record.numeric = Some(out.populations);
        record.diagnostics = Some(out.diagnostics);
    }
    Ok(())
}

/// Runs every τ_i independently (in parallel) and returns the records in
/// input order. A failing point is recorded and does not stop the sweep.
pub fn sweep_tau_i(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let records = config
        .tau_i_values
        .par_iter()
        .map(|&tau_i| sweep_point(config, tau_i))
        .collect();
    Ok(SweepResult {
        records,
        config: config.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointComparison {
    pub tau_i: f64,
    pub max_abs_diff: Option<f64>,
    pub flagged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub points: Vec<PointComparison>,
    pub sweep: SweepResult,
}

impl ComparisonReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| p.max_abs_diff)
            .fold(0.0, f64::max)
    }

    pub fn any_flagged(&self) -> bool {
        self.points.iter().any(|p| p.flagged)
    }
}

/// Sweeps with both engines and reports the entrywise discrepancy per τ_i.
/// Points above [`DISCREPANCY_FLAG`] or with an engine failure are flagged.
pub fn compare_engines(config: &SweepConfig) -> Result<ComparisonReport> {
    if config.engines != Engines::Both {
        return Err(Error::invalid("engines", "comparison needs both engines"));
    }
    let sweep = sweep_tau_i(config)?;
    let points = sweep
        .records
        .iter()
        .map(|r| {
            let diff = r.discrepancy();
            PointComparison {
                tau_i: r.tau_i,
                max_abs_diff: diff,
                flagged: r.error.is_some() || diff.is_some_and(|d| d > DISCREPANCY_FLAG),
                error: r.error.clone(),
            }
        })
        .collect();
    Ok(ComparisonReport { points, sweep })
}

/// `|d^J_{m'm}(θ)|²` from the rotation operator `exp(−iθF_y)`, evaluated
/// through the eigendecomposition of `F_y`. Entry `(m, m')` is the
/// probability of `m → m'`.
pub fn wigner_d_oracle(two_j: u32, theta: f64) -> Result<TransitionMatrix> {
    let sys = SpinSystem::new(two_j)?;
    let fy = sys.angular_momentum_ops().fy;
    let eig = fy.symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|lambda| C64::from_polar(1.0, -theta * lambda)));
    let rotation = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
    let n = sys.dim();
    // rotation[(m', m)] = ⟨m'|R|m⟩
    let probs = DMatrix::from_fn(n, n, |m, mp| rotation[(mp, m)].norm_sqr());
    TransitionMatrix::from_entries(two_j, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{multilevel_matrix, ThetaParam};

    #[test]
    fn oracle_spin_half() {
        for theta in [0.0, 0.3, 1.0, 2.5, PI] {
            let m = wigner_d_oracle(1, theta).unwrap();
            let (c, s) = ((theta / 2.0).cos().powi(2), (theta / 2.0).sin().powi(2));
            assert!((m.get(0, 0) - c).abs() < 1e-14);
            assert!((m.get(0, 1) - s).abs() < 1e-14);
            assert!((m.get(1, 0) - s).abs() < 1e-14);
            assert!((m.get(1, 1) - c).abs() < 1e-14);
        }
    }

    #[test]
    fn oracle_spin_one_quarter_turn() {
        let m = wigner_d_oracle(2, PI / 2.0).unwrap();
        for (c, expected) in [0.5, 0.0, 0.5].iter().enumerate() {
            assert!((m.get(1, c) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn oracle_identity_at_zero() {
        for two_j in 1..=8 {
            let m = wigner_d_oracle(two_j, 0.0).unwrap();
            let n = two_j as usize + 1;
            assert!(m.max_abs_diff(&TransitionMatrix::from_entries(two_j, DMatrix::identity(n, n)).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn oracle_matches_closed_form_on_a_grid() {
        for two_j in 1..=8 {
            let sys = SpinSystem::new(two_j).unwrap();
            for k in 0..=20 {
                let theta = PI * k as f64 / 20.0;
                let closed = multilevel_matrix(&sys, ThetaParam::from_theta(theta).unwrap()).unwrap();
                let oracle = wigner_d_oracle(two_j, theta).unwrap();
                assert!(closed.max_abs_diff(&oracle) < 1e-12, "2J={two_j} θ={theta}");
            }
        }
    }

    fn stretched_config(values_us: &[f64], engines: Engines) -> SweepConfig {
        let sys = SpinSystem::new(4).unwrap();
        let mut config = SweepConfig::new(
            sys,
            reference_field_model(),
            Projection::from_twice(4),
            values_us.iter().map(|t| t * MICROSECOND).collect(),
        );
        config.engines = engines;
        config
    }

    #[test]
    fn single_point_without_reversal() {
        let result = sweep_tau_i(&stretched_config(&[117.7], Engines::Both)).unwrap();
        assert_eq!(result.records.len(), 1);
        let r = &result.records[0];
        assert!(!r.reverses);
        assert_eq!(r.analytic.as_deref(), Some(&[1.0, 0.0, 0.0, 0.0, 0.0][..]));
        assert_eq!(r.discrepancy(), Some(0.0));
        assert!(result.all_degenerate());
    }

    #[test]
    fn analytic_sweep_transfers_population_monotonically() {
        let result = sweep_tau_i(&stretched_config(&STRETCHED_SWEEP_TAU_I_US, Engines::AnalyticOnly)).unwrap();
        let lowest: Vec<f64> = result.records.iter().map(|r| r.analytic.as_ref().unwrap()[4]).collect();
        let highest: Vec<f64> = result.records.iter().map(|r| r.analytic.as_ref().unwrap()[0]).collect();
        assert_eq!(highest[0], 1.0);
        for k in 1..lowest.len() {
            assert!(lowest[k] >= lowest[k - 1]);
            assert!(highest[k] <= highest[k - 1]);
        }
        assert!(result.records.iter().all(|r| r.numeric.is_none()));
    }

    #[test]
    fn reference_calibration_spans_the_crossover() {
        let result = sweep_tau_i(&stretched_config(&STRETCHED_SWEEP_TAU_I_US, Engines::AnalyticOnly)).unwrap();
        let p: Vec<f64> = result.records.iter().filter_map(|r| r.flip_p).collect();
        assert_eq!(p.len(), 6);
        assert!(p[0] < 0.15 && p[5] > 0.65, "{p:?}");
    }

    #[test]
    fn invalid_sweeps_are_rejected() {
        assert!(sweep_tau_i(&stretched_config(&[], Engines::Both)).is_err());
        assert!(sweep_tau_i(&stretched_config(&[-1.0], Engines::Both)).is_err());
        let mut c = stretched_config(&[10.0], Engines::Both);
        c.m0 = Projection::from_twice(1);
        assert!(sweep_tau_i(&c).is_err());
        assert!(compare_engines(&stretched_config(&[10.0], Engines::AnalyticOnly)).is_err());
    }

    #[test]
    fn failing_point_is_isolated() {
        let mut c = stretched_config(&[117.7, 10.0], Engines::Both);
        // a step cap far below the floating-point resolution of t
        c.numeric.max_step = 1e-30;
        let result = sweep_tau_i(&c).unwrap();
        assert!(result.records[0].error.is_none());
        assert!(result.records[1].error.is_some());
        assert!(result.records[1].numeric.is_none());
    }

    #[test]
    fn frequencies_define_the_ramp() {
        let sys = SpinSystem::new(1).unwrap();
        let model = ramp_from_frequencies(&sys, 0.1e6, 1.2e6).unwrap();
        let t = model.reversal_time().unwrap();
        assert!((model.rotation_frequency(t).unwrap() / 1.2e6 - 1.0).abs() < 1e-12);
        assert!((model.larmor_frequency(&sys, t).unwrap() / 0.1e6 - 1.0).abs() < 1e-12);
    }
}
