//! Shifted benchmark families and transfer-instance generation.
//!
//! Candidates live in the common space `[0,1]^d`; each family maps them
//! affinely onto its native box before evaluation.

mod stop;

use std::f64::consts::{E, PI};
use std::fmt;

use rand::{Rng, RngCore};

pub use stop::{
    make_stop_instance, sample_similarity, stop_suite, Dist, Scenario, StopInstance, StopSpec,
    SUITE_SIZE,
};

use crate::error::{Error, Result};
use crate::gradengine::Tensor2;

/// Something the evolution loop can minimize over `[0,1]^d`.
pub trait Objective {
    fn dim(&self) -> usize;

    /// One fitness value per row of `x`; lower is better.
    fn evaluate(&self, x: &Tensor2, rng: &mut dyn RngCore) -> Result<Tensor2>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Sphere,
    Ellipsoid,
    Schwefel22,
    QuarticNoise,
    Ackley,
    Rastrigin,
    Griewank,
    Levy,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Sphere,
        Family::Ellipsoid,
        Family::Schwefel22,
        Family::QuarticNoise,
        Family::Ackley,
        Family::Rastrigin,
        Family::Griewank,
        Family::Levy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sphere => "sphere",
            Family::Ellipsoid => "ellipsoid",
            Family::Schwefel22 => "schwefel22",
            Family::QuarticNoise => "quartic_noise",
            Family::Ackley => "ackley",
            Family::Rastrigin => "rastrigin",
            Family::Griewank => "griewank",
            Family::Levy => "levy",
        }
    }

    /// Short capitalized name used in suite labels.
    pub fn label(self) -> &'static str {
        match self {
            Family::Sphere => "Sphere",
            Family::Ellipsoid => "Ellipsoid",
            Family::Schwefel22 => "Schwefel",
            Family::QuarticNoise => "Quartic",
            Family::Ackley => "Ackley",
            Family::Rastrigin => "Rastrigin",
            Family::Griewank => "Griewank",
            Family::Levy => "Levy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.name() == lower || f.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Parameter(format!("unknown task family {s:?}")))
    }

    /// Native box `[-b, b]` shared by every coordinate.
    pub fn bounds(self) -> (f64, f64) {
        let b = match self {
            Family::Sphere => 100.0,
            Family::Ellipsoid => 50.0,
            Family::Schwefel22 => 30.0,
            Family::QuarticNoise => 5.0,
            Family::Ackley => 32.0,
            Family::Rastrigin => 10.0,
            Family::Griewank => 200.0,
            Family::Levy => 20.0,
        };
        (-b, b)
    }

    pub fn is_noisy(self) -> bool {
        self == Family::QuarticNoise
    }

    /// Noise-free value at offset `z = x - o` from the optimum.
    pub fn value(self, z: &[f64]) -> f64 {
        let d = z.len();
        match self {
            Family::Sphere => z.iter().map(|v| v * v).sum(),
            Family::Ellipsoid => z
                .iter()
                .enumerate()
                .map(|(i, v)| (d - i) as f64 * v * v)
                .sum(),
            Family::Schwefel22 => {
                z.iter().map(|v| v.abs()).sum::<f64>() + z.iter().map(|v| v.abs()).product::<f64>()
            }
            Family::QuarticNoise => z
                .iter()
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * v.powi(4))
                .sum(),
            Family::Ackley => {
                let n = d as f64;
                let a = (-0.2 * (z.iter().map(|v| v * v).sum::<f64>() / n).sqrt()).exp();
                let b = (z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n).exp();
                20.0 * (1.0 - a) + (E - b)
            }
            Family::Rastrigin => z
                .iter()
                .map(|v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0)
                .sum(),
            Family::Griewank => {
                let s: f64 = z.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let p: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                s + (1.0 - p)
            }
            Family::Levy => {
                // w_i = 1 + z_i / 4; sin(pi w) = -sin(pi z / 4).
                let w = |v: f64| 1.0 + v / 4.0;
                let first = (PI * z[0] / 4.0).sin().powi(2);
                let middle: f64 = z[..d - 1]
                    .iter()
                    .map(|&v| {
                        let wi = w(v);
                        (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))
                    })
                    .sum();
                let wd = w(z[d - 1]);
                let last = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
                first + middle + last
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A shifted family instance at a fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    family: Family,
    /// Optimum in native coordinates.
    shift: Vec<f64>,
    /// Optimum in common coordinates.
    shift_common: Vec<f64>,
}

impl Problem {
    /// `shift` is the optimum in native coordinates.
    pub fn new(family: Family, shift: Vec<f64>) -> Result<Self> {
        if shift.is_empty() {
            return Err(Error::Parameter(
                "problem dimension must be positive".into(),
            ));
        }
        let (lo, hi) = family.bounds();
        if let Some(v) = shift.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::Parameter(format!(
                "optimum coordinate {v} outside the {family} box [{lo}, {hi}]"
            )));
        }
        let shift_common = shift.iter().map(|v| (v - lo) / (hi - lo)).collect();
        Ok(Self {
            family,
            shift,
            shift_common,
        })
    }

    /// Optimum given in common coordinates.
    pub fn from_common(family: Family, optimum: &[f64]) -> Result<Self> {
        if let Some(v) = optimum.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!(
                "common coordinate {v} outside [0, 1]"
            )));
        }
        let (lo, hi) = family.bounds();
        let shift = optimum
            .iter()
            .map(|v| (lo + v * (hi - lo)).clamp(lo, hi))
            .collect();
        Ok(Self {
            family,
            shift,
            shift_common: optimum.to_vec(),
        })
    }

    /// Optimum at the centre of the box.
    pub fn centered(family: Family, dim: usize) -> Result<Self> {
        Self::new(family, vec![0.0; dim])
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn optimum_common(&self) -> &[f64] {
        &self.shift_common
    }

    pub fn to_native(&self, x: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.family.bounds();
        x.iter().map(|v| lo + v * (hi - lo)).collect()
    }

    /// Noise-free value at a common-space point.
    pub fn value_common(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.family.bounds();
        let z: Vec<f64> = x
            .iter()
            .zip(&self.shift_common)
            .map(|(v, o)| (v - o) * (hi - lo))
            .collect();
        self.family.value(&z)
    }

    /// One value per row; quartic adds fresh `U(0,1)` noise per row.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &Tensor2, rng: &mut R) -> Result<Tensor2> {
        if x.cols() != self.dim() {
            return Err(Error::shape(
                "Problem::evaluate",
                format!(
                    "{} columns for a {}-dimensional problem",
                    x.cols(),
                    self.dim()
                ),
            ));
        }
        let mut out = Vec::with_capacity(x.rows());
        for (row, xi) in x.row_iter().enumerate() {
            if xi.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Parameter(format!(
                    "row {row} leaves the common space"
                )));
            }
            let mut f = self.value_common(xi);
            if self.family.is_noisy() {
                f += rng.gen::<f64>();
            }
            if !f.is_finite() {
                return Err(Error::Evaluation { row, value: f });
            }
            out.push(f);
        }
        Tensor2::new(out.len(), 1, out)
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn evaluate(&self, x: &Tensor2, rng: &mut dyn RngCore) -> Result<Tensor2> {
        Problem::evaluate(self, x, rng)
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }
}
