//! Spin systems, angular-momentum algebra, states and transition matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.2740100783e-24;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;
/// Landé g-factor of the ⁸⁷Rb F=2 hyperfine manifold.
pub const RB87_F2_G_FACTOR: f64 = 0.5;

/// Tolerance on the norm of a freshly constructed [`SpinState`].
pub const NORM_TOLERANCE: f64 = 1e-9;

/// A magnetic quantum number, stored as `2m` so half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Projection(i32);

impl Projection {
    pub const fn from_twice(two_m: i32) -> Self {
        Projection(two_m)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub const fn flipped(self) -> Self {
        Projection(-self.0)
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for Projection {
    type Err = String;

    /// Accepts integers (`2`, `-1`) and halves (`1/2`, `-3/2`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('/') {
            Some((num, "2")) => {
                let n: i32 = num
                    .trim()
                    .parse()
                    .map_err(|_| format!("`{s}` is not a spin projection"))?;
                if n % 2 == 0 {
                    Err(format!("`{s}` should be written as an integer"))
                } else {
                    Ok(Projection(n))
                }
            }
            Some(_) => Err(format!("`{s}` is not a spin projection")),
            None => s
                .parse::<i32>()
                .map(|n| Projection(2 * n))
                .map_err(|_| format!("`{s}` is not a spin projection")),
        }
    }
}

/// A spin-J particle with magnetic moment `g·μ_B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinSystem {
    two_j: u32,
    g_factor: f64,
    mu_b: f64,
    hbar: f64,
}

impl SpinSystem {
    /// Spin `two_j / 2` with the ⁸⁷Rb F=2 g-factor and CODATA constants.
    pub fn new(two_j: u32) -> Result<Self> {
        Self::with_constants(two_j, RB87_F2_G_FACTOR, BOHR_MAGNETON, HBAR)
    }

    pub fn with_g_factor(two_j: u32, g_factor: f64) -> Result<Self> {
        Self::with_constants(two_j, g_factor, BOHR_MAGNETON, HBAR)
    }

    pub fn with_constants(two_j: u32, g_factor: f64, mu_b: f64, hbar: f64) -> Result<Self> {
        if two_j == 0 {
            return Err(Error::invalid("two_j", "spin must be at least 1/2"));
        }
        if !(g_factor.is_finite() && g_factor > 0.0) {
            return Err(Error::invalid("g_factor", format!("must be positive, got {g_factor}")));
        }
        if !(mu_b.is_finite() && mu_b > 0.0) {
            return Err(Error::invalid("mu_b", format!("must be positive, got {mu_b}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::invalid("hbar", format!("must be positive, got {hbar}")));
        }
        Ok(SpinSystem {
            two_j,
            g_factor,
            mu_b,
            hbar,
        })
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        f64::from(self.two_j) / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn g_factor(&self) -> f64 {
        self.g_factor
    }

    pub fn mu_b(&self) -> f64 {
        self.mu_b
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `g·μ_B/ħ` in rad s⁻¹ T⁻¹.
    pub fn gyromagnetic_ratio(&self) -> f64 {
        self.g_factor * self.mu_b / self.hbar
    }

    /// Basis projections in storage order, `m = J` first.
    pub fn projections(&self) -> impl Iterator<Item = Projection> + '_ {
        let two_j = self.two_j as i32;
        (0..=two_j).map(move |k| Projection(two_j - 2 * k))
    }

    pub fn projection_at(&self, index: usize) -> Projection {
        Projection(self.two_j as i32 - 2 * index as i32)
    }

    pub fn index_of(&self, m: Projection) -> Result<usize> {
        let two_j = self.two_j as i32;
        let two_m = m.twice();
        if two_m.abs() > two_j || (two_j - two_m) % 2 != 0 {
            return Err(Error::invalid(
                "m",
                format!("m = {m} is not a projection of spin {}", Projection(two_j)),
            ));
        }
        Ok(((two_j - two_m) / 2) as usize)
    }

    /// Angular-momentum matrices in units of ħ.
    pub fn angular_momentum_ops(&self) -> AngularMomentum {
        let n = self.dim();
        let j = self.j();
        let mut raise = DMatrix::<C64>::zeros(n, n);
        for col in 1..n {
            // F₊|m⟩ = √(J(J+1) − m(m+1)) |m+1⟩, and |m+1⟩ sits one row up.
            let m = self.projection_at(col).value();
            raise[(col - 1, col)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
        let lower = raise.adjoint();
        let fx = (&raise + &lower) * C64::new(0.5, 0.0);
        let fy = (&raise - &lower) * C64::new(0.0, -0.5);
        let fz = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            self.projections().map(|m| C64::new(m.value(), 0.0)),
        ));
        AngularMomentum { fx, fy, fz }
    }
}

/// Cartesian angular-momentum operators `F_x, F_y, F_z` in units of ħ.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularMomentum {
    pub fx: DMatrix<C64>,
    pub fy: DMatrix<C64>,
    pub fz: DMatrix<C64>,
}

impl AngularMomentum {
    /// `F·v` for a real vector `v`.
    pub fn dot(&self, v: [f64; 3]) -> DMatrix<C64> {
        &self.fx * C64::from(v[0]) + &self.fy * C64::from(v[1]) + &self.fz * C64::from(v[2])
    }
}

/// Complex amplitudes over the descending-m basis at a given time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    amplitudes: DVector<C64>,
    time: f64,
}

impl SpinState {
    pub fn new(amplitudes: DVector<C64>, time: f64) -> Result<Self> {
        let norm = amplitudes.norm_squared();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid(
                "amplitudes",
                format!("state is not normalized (|c|² = {norm})"),
            ));
        }
        Ok(SpinState { amplitudes, time })
    }

    /// The lab-frame eigenstate `|m⟩` of `F_z`.
    pub fn basis(sys: &SpinSystem, m: Projection, time: f64) -> Result<Self> {
        let mut amplitudes = DVector::zeros(sys.dim());
        amplitudes[sys.index_of(m)?] = C64::new(1.0, 0.0);
        Ok(SpinState { amplitudes, time })
    }

    /// Skips the norm check; the propagator reports drift separately.
    pub(crate) fn from_raw(amplitudes: DVector<C64>, time: f64) -> Self {
        SpinState { amplitudes, time }
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub(crate) fn normalize(&mut self) {
        let norm = self.amplitudes.norm();
        if norm > 0.0 {
            self.amplitudes /= C64::from(norm);
        }
    }
}

/// Probabilities `P(m → m')`; rows are indexed by initial m, columns by
/// final m', both in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    two_j: u32,
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn from_entries(two_j: u32, entries: DMatrix<f64>) -> Result<Self> {
        let n = two_j as usize + 1;
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::invalid(
                "entries",
                format!("expected a {n}x{n} matrix, got {}x{}", entries.nrows(), entries.ncols()),
            ));
        }
        Ok(TransitionMatrix { two_j, entries })
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, initial: usize, final_: usize) -> f64 {
        self.entries[(initial, final_)]
    }

    pub fn row(&self, initial: usize) -> Vec<f64> {
        self.entries.row(initial).iter().copied().collect()
    }

    /// Largest deviation of any row or column sum from one.
    pub fn stochastic_error(&self) -> f64 {
        let rows = self.entries.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.entries.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Largest violation of `P(m,m') = P(m',m)` and `P(m,m') = P(-m,-m')`.
    pub fn symmetry_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let p = self.entries[(a, b)];
                worst = worst
                    .max((p - self.entries[(b, a)]).abs())
                    .max((p - self.entries[(n - 1 - a, n - 1 - b)]).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
