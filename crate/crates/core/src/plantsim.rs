//! Closed-loop plant simulation in IEEE double precision with additive
//! sensor attacks.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STABILITY_TOLERANCE: f64 = 1e-9;

/// Discrete-time LTI plant `x+ = Ax + Bu`, `y = Cx + a` under `u = Kx`.
#[derive(Clone, Debug)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub x_ini: DVector<f64>,
    pub ts: f64,
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        k: DMatrix<f64>,
        x_ini: DVector<f64>,
        ts: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidModel(format!("A must be square, got {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::InvalidModel(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::InvalidModel(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if k.nrows() != b.ncols() || k.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "K is {}x{}, expected {}x{n}",
                k.nrows(),
                k.ncols(),
                b.ncols()
            )));
        }
        if x_ini.len() != n {
            return Err(Error::InvalidModel(format!("x_ini has length {}, expected {n}", x_ini.len())));
        }
        if !(ts > 0.0) {
            return Err(Error::InvalidModel(format!("sampling time must be positive, got {ts}")));
        }
        let rho = spectral_radius(&(&a + &b * &k));
        if rho >= 1.0 - STABILITY_TOLERANCE {
            return Err(Error::UnstableClosedLoop { spectral_radius: rho });
        }
        Ok(Self { a, b, c, k, x_ini, ts })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// `A x + B u`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context: "step_plant",
                expected: (self.n(), self.m()),
                found: (x.len(), u.len()),
            });
        }
        Ok(&self.a * x + &self.b * u)
    }
}

/// Source of the additive sensor attack `a(t)`.
pub trait AttackSignal {
    /// Attack on `sensor` (0-based) at `step`.
    fn value(&self, sensor: usize, step: usize) -> f64;
}

impl<F: Fn(usize, usize) -> f64> AttackSignal for F {
    fn value(&self, sensor: usize, step: usize) -> f64 {
        self(sensor, step)
    }
}

/// Constant attack on one sensor over an inclusive step window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSegment {
    /// 1-based sensor index.
    pub sensor: usize,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub segments: Vec<AttackSegment>,
    /// Claimed bound on simultaneously compromised sensors.
    pub k_max: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub k_max: usize,
    pub max_attacked: usize,
    /// Steps at which more than `k_max` sensors were attacked.
    pub violations: Vec<usize>,
}

impl SparsityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

impl AttackScenario {
    pub fn none(k_max: usize) -> Self {
        Self { segments: Vec::new(), k_max }
    }

    pub fn attacked_sensors(&self, step: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .segments
            .iter()
            .filter(|seg| seg.start <= step && step <= seg.end && seg.value != 0.0)
            .map(|seg| seg.sensor - 1)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Every sensor attacked at any step (0-based).
    pub fn compromised_sensors(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .segments
            .iter()
            .filter(|seg| seg.value != 0.0)
            .map(|seg| seg.sensor - 1)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Sparsity check over `steps`; advisory, never rejects.
    pub fn sparsity_report(&self, steps: usize) -> SparsityReport {
        let mut max_attacked = 0;
        let mut violations = Vec::new();
        for t in 0..steps {
            let count = self.attacked_sensors(t).len();
            max_attacked = max_attacked.max(count);
            if count > self.k_max {
                violations.push(t);
            }
        }
        // the set of ever-compromised sensors is what the sparsity bound limits
        let total = self.compromised_sensors().len();
        if total > self.k_max && violations.is_empty() {
            violations.push(steps.saturating_sub(1));
        }
        SparsityReport {
            k_max: self.k_max,
            max_attacked,
            violations,
        }
    }

    /// Steps `t` whose observer state has been touched by an attack in the
    /// previous `depth[i]` samples of sensor `i`.
    ///
    /// A sample `y_i(tau)` enters the deadbeat partial observer at `tau + 1`
    /// and is flushed after `l_i` further steps.
    pub fn affected_steps(&self, depth: &[usize], steps: usize) -> Vec<bool> {
        let mut out = vec![false; steps];
        for seg in self.segments.iter().filter(|s| s.value != 0.0) {
            let li = depth[seg.sensor - 1];
            for tau in seg.start..=seg.end {
                for t in tau + 1..=tau + li {
                    if t < steps {
                        out[t] = true;
                    }
                }
            }
        }
        out
    }
}

impl AttackSignal for AttackScenario {
    fn value(&self, sensor: usize, step: usize) -> f64 {
        self.segments
            .iter()
            .filter(|seg| seg.sensor == sensor + 1 && seg.start <= step && step <= seg.end)
            .map(|seg| seg.value)
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryStep {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub a: DVector<f64>,
}

pub type Trajectory = Vec<TrajectoryStep>;

/// Iterates `u = Kx`, `y = Cx + a`, `x+ = Ax + Bu` for `steps` samples.
pub fn run_closed_loop(model: &PlantModel, attack: &dyn AttackSignal, steps: usize) -> Trajectory {
    let p = model.p();
    let mut x = model.x_ini.clone();
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let u = &model.k * &x;
        let a = DVector::from_fn(p, |i, _| attack.value(i, t));
        let y = &model.c * &x + &a;
        let next = &model.a * &x + &model.b * &u;
        out.push(TrajectoryStep { x, u, y, a });
        x = next;
    }
    out
}

/// On-disk scenario description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub x_ini: Vec<f64>,
    #[serde(rename = "Ts")]
    pub ts: f64,
    #[serde(default)]
    pub attacks: Vec<AttackSegment>,
    #[serde(rename = "k")]
    pub k_max: usize,
}

fn dense(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidModel(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_parts(self) -> Result<(PlantModel, AttackScenario)> {
        let model = PlantModel::new(
            dense(&self.a, "A")?,
            dense(&self.b, "B")?,
            dense(&self.c, "C")?,
            dense(&self.k, "K")?,
            DVector::from_vec(self.x_ini),
            self.ts,
        )?;
        let p = model.p();
        if let Some(bad) = self.attacks.iter().find(|s| s.sensor == 0 || s.sensor > p || s.end < s.start) {
            return Err(Error::InvalidModel(format!("malformed attack segment {bad:?}")));
        }
        Ok((
            model,
            AttackScenario {
                segments: self.attacks,
                k_max: self.k_max,
            },
        ))
    }
}

/// The three-inertia benchmark with its two-pulse attack on sensor 3.
pub const THREE_INERTIA_JSON: &str = include_str!("../../../scenarios/three_inertia.json");

pub fn three_inertia() -> (PlantModel, AttackScenario) {
    let file: ScenarioFile = serde_json::from_str(THREE_INERTIA_JSON).expect("bundled scenario parses");
    file.into_parts().expect("bundled scenario is valid")
}
