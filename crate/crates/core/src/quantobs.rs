//! The observer quantized onto Z_q.
//!
//! `z̄(t+1) = F̄ z̄(t) + Ḡ v̄(t) mod q`, `r̄(t) = H̄ z̄(t) mod q`. An attack is
//! flagged when `‖s1² s2 · r̄(t)‖ > 2κ z̃_ini 1{t < l_max} + ε`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::modring::{ModMatrix, Modulus};
use crate::obsdesign::{quantize_scalar, IntMatrix, ObserverBank, ResidueMap, ShiftBlocks};

/// Scales, modulus and encryption sizes plus the design constants the
/// bounds depend on.
#[derive(Clone, Debug)]
pub struct QuantParams {
    pub s1: f64,
    pub s2: f64,
    /// Plaintext scale `L` applied before encryption.
    pub lfac: BigInt,
    pub modulus: Arc<Modulus>,
    pub lwe_dim: usize,
    pub delta: f64,
    pub eps: f64,
    pub kappa: f64,
    pub ztilde_ini: f64,
    pub m_bound: f64,
    pub l_max: usize,
    pub l: usize,
}

impl QuantParams {
    /// `s1² s2`, the factor mapping `Z_q` estimates back to plant units.
    pub fn output_scale(&self) -> f64 {
        self.s1 * self.s1 * self.s2
    }
}

#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub name: &'static str,
    /// Left-hand side (the quantity that must be larger).
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub passed: bool,
}

impl BoundCheck {
    fn new(name: &'static str, lhs: BigRational, rhs: BigRational) -> Self {
        let passed = lhs > rhs;
        Self { name, lhs, rhs, passed }
    }

    /// `lhs / rhs`; above 1 means the bound holds.
    pub fn margin(&self) -> f64 {
        if self.rhs.is_zero() {
            return f64::INFINITY;
        }
        ratio_to_f64(&(&self.lhs / &self.rhs))
    }

    /// `log2(rhs)`, the number of bits the left side must exceed.
    pub fn required_bits(&self) -> f64 {
        ratio_to_f64(&self.rhs).log2()
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    // scale into f64 range via bit lengths
    let num = r.numer();
    let den = r.denom();
    let shift = num.bits() as i64 - den.bits() as i64;
    let (n, d) = if shift > 0 {
        (num.clone(), den << (shift as usize))
    } else {
        (num << ((-shift) as usize), den.clone())
    };
    let scaled = BigRational::new(n, d);
    let base = scaled.numer().to_f64().unwrap_or(f64::NAN) / scaled.denom().to_f64().unwrap_or(f64::NAN);
    base * 2f64.powi(shift as i32)
}

#[derive(Clone, Debug)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for BoundsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            if c.name.starts_with("gcd") {
                writeln!(f, "{:<30} {verdict}", c.name)?;
                continue;
            }
            writeln!(
                f,
                "{:<30} {verdict}  margin {:.4e}  (needs > 2^{:.2})",
                c.name,
                c.margin(),
                c.required_bits()
            )?;
        }
        Ok(())
    }
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite parameter")
}

/// Evaluates the modulus bound, the scale bound, the combined modulus
/// bound and `gcd(L, q) = 1`, all in exact rational arithmetic.
pub fn validate_params(params: &QuantParams, gbar: &IntMatrix) -> BoundsReport {
    let one = BigRational::one();
    let two = BigRational::from_integer(2.into());
    let q = BigRational::from_integer(params.modulus.q().clone());
    let lfac = BigRational::from_integer(params.lfac.clone());
    let (s1, s2) = (exact(params.s1), exact(params.s2));
    let kappa = exact(params.kappa);
    let eps = exact(params.eps);
    let delta = exact(params.delta);
    let scaled = &s1 * &s1 * &s2;

    // 2 (κ(M + 2 z̃) + 2ε) / (s1² s2)
    let core = &two * (&kappa * (exact(params.m_bound) + &two * exact(params.ztilde_ini)) + &two * &eps) / &scaled;
    let modulus_bound = BoundCheck::new("q > modulus bound", q.clone(), core.clone());

    let l_half = BigRational::new(BigInt::from(params.l), BigInt::from(2));
    let gnorm = BigRational::from_integer(gbar.inf_norm());
    let lmax = BigRational::from_integer(BigInt::from(params.l_max));
    let scale_rhs = &two * (&kappa / &s1 + l_half) * (&one + lmax * gnorm) * delta;
    let scale_bound = BoundCheck::new("L > error-budget bound", lfac.clone(), scale_rhs);

    let half = BigRational::new(1.into(), 2.into());
    let combined = BoundCheck::new("q > L * (modulus bound + 1/2)", q, &lfac * (core + half));

    let coprime = params.lfac.gcd(params.modulus.q()).is_one();
    let gcd_check = BoundCheck::new(
        "gcd(L, q) = 1",
        BigRational::from_integer(if coprime { 2.into() } else { 0.into() }),
        one,
    );
    BoundsReport {
        checks: vec![modulus_bound, scale_bound, combined, gcd_check],
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantState {
    pub zbar: ModMatrix,
    pub step: usize,
}

/// `cmod(round(ẑ_ini / (s1 s2)))`.
pub fn quantize_initial(zhat_ini: &DVector<f64>, params: &QuantParams) -> ModMatrix {
    let scale = params.s1 * params.s2;
    let v = zhat_ini.iter().map(|z| quantize_scalar(*z, scale)).collect();
    ModMatrix::column_vector(v, &params.modulus)
}

/// `cmod(round([u; y] / s2))`.
pub fn quantize_input(u: &DVector<f64>, y: &DVector<f64>, params: &QuantParams) -> ModMatrix {
    let v = u.iter().chain(y.iter()).map(|x| quantize_scalar(*x, params.s2)).collect();
    ModMatrix::column_vector(v, &params.modulus)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub flag: bool,
    pub lhs: f64,
    pub threshold: f64,
}

/// Flags an attack when `s1² s2 ‖r̄‖` strictly exceeds the threshold.
pub fn detect(rbar: &ModMatrix, t: usize, params: &QuantParams) -> Detection {
    let norm = rbar.max_abs().to_f64().unwrap_or(f64::INFINITY);
    let lhs = params.output_scale() * norm;
    let transient = if t < params.l_max { 1.0 } else { 0.0 };
    let threshold = 2.0 * params.kappa * params.ztilde_ini * transient + params.eps;
    Detection {
        flag: lhs > threshold,
        lhs,
        threshold,
    }
}

/// Observer matrices lifted into Z_q.
#[derive(Clone, Debug)]
pub struct QuantizedObserver {
    pub params: QuantParams,
    pub fbar: ShiftBlocks,
    pub gbar: ModMatrix,
    pub hbar: ModMatrix,
    pub phi_pinv_bar: ModMatrix,
    pub phi_lambda_pinv_bar: Vec<ModMatrix>,
    pub selectors: Vec<Vec<usize>>,
}

impl QuantizedObserver {
    pub fn new(bank: &ObserverBank, map: &ResidueMap, params: QuantParams) -> Self {
        let q = &params.modulus;
        Self {
            fbar: bank.fbar.clone(),
            gbar: map.gbar.to_mod(q),
            hbar: map.hbar.to_mod(q),
            phi_pinv_bar: map.phi_pinv_bar.to_mod(q),
            phi_lambda_pinv_bar: map.phi_lambda_pinv_bar.iter().map(|m| m.to_mod(q)).collect(),
            selectors: (0..bank.subsets.len()).map(|s| bank.selector(s)).collect(),
            params,
        }
    }

    pub fn initial_state(&self, zhat_ini: &DVector<f64>) -> QuantState {
        QuantState {
            zbar: quantize_initial(zhat_ini, &self.params),
            step: 0,
        }
    }

    /// `cmod(F̄ z̄ + Ḡ v̄)`.
    pub fn step(&self, state: &QuantState, vbar: &ModMatrix) -> Result<QuantState> {
        step_quantized(state, vbar, &self.fbar, &self.gbar)
    }

    pub fn residue(&self, state: &QuantState) -> ModMatrix {
        residue_quantized(state, &self.hbar)
    }

    /// `cmod(Φ̄† z̄)`.
    pub fn xbar(&self, state: &QuantState) -> ModMatrix {
        self.phi_pinv_bar.mul(&state.zbar).expect("observer dimensions")
    }

    pub fn xbar_subset(&self, state: &QuantState, subset: usize) -> ModMatrix {
        let zl = state.zbar.select_rows(&self.selectors[subset]);
        self.phi_lambda_pinv_bar[subset].mul(&zl).expect("observer dimensions")
    }

    pub fn recover_plain_estimate(&self, state: &QuantState) -> DVector<f64> {
        recover_plain_estimate(state, &self.phi_pinv_bar, &self.params)
    }
}

pub fn step_quantized(
    state: &QuantState,
    vbar: &ModMatrix,
    fbar: &ShiftBlocks,
    gbar: &ModMatrix,
) -> Result<QuantState> {
    let next = fbar.apply_mod(&state.zbar).add(&gbar.mul(vbar)?)?;
    Ok(QuantState {
        zbar: next,
        step: state.step + 1,
    })
}

pub fn residue_quantized(state: &QuantState, hbar: &ModMatrix) -> ModMatrix {
    hbar.mul(&state.zbar).expect("residue dimensions")
}

/// `s1² s2 · cmod(Φ̄† z̄)`.
pub fn recover_plain_estimate(state: &QuantState, phi_pinv_bar: &ModMatrix, params: &QuantParams) -> DVector<f64> {
    let xbar = phi_pinv_bar.mul(&state.zbar).expect("observer dimensions");
    scale_to_real(&xbar, params.output_scale())
}

pub fn scale_to_real(v: &ModMatrix, scale: f64) -> DVector<f64> {
    DVector::from_iterator(v.rows(), v.entries().iter().map(|e| scale * e.to_f64().unwrap_or(f64::NAN)))
}

/// Outcome of the attack-free agreement check between the quantized and
/// the real observer.
#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub max_residue_dev: f64,
    pub max_estimate_dev: f64,
    pub eps: f64,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        self.max_residue_dev <= self.eps && self.max_estimate_dev <= self.eps
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::Calibration(format!(
                "quantized observer deviates from the real one by {:.3e} (residue) / {:.3e} (estimates), \
                 above eps = {}; decrease s1 or s2",
                self.max_residue_dev, self.max_estimate_dev, self.eps
            )))
        }
    }
}

/// Runs both observers attack-free over `trajectory` and measures
/// `‖s1² s2 r̄ − r̂‖` and `‖s1² s2 x̄_Λ − x̂_Λ‖` (full set included).
pub fn calibrate_quantization(
    bank: &ObserverBank,
    qobs: &QuantizedObserver,
    trajectory: &crate::plantsim::Trajectory,
    zhat_ini: &DVector<f64>,
) -> Result<CalibrationReport> {
    let reference = crate::obsdesign::run_reference_observer(bank, trajectory, zhat_ini);
    let scale = qobs.params.output_scale();
    let mut state = qobs.initial_state(zhat_ini);
    let (mut rdev, mut xdev) = (0.0f64, 0.0f64);
    for (step, refs) in trajectory.iter().zip(&reference) {
        let r = scale_to_real(&qobs.residue(&state), scale);
        rdev = rdev.max((r - &refs.rhat).amax());
        xdev = xdev.max((qobs.recover_plain_estimate(&state) - &refs.xhat).amax());
        for (s, xl) in refs.x_lambda.iter().enumerate() {
            xdev = xdev.max((scale_to_real(&qobs.xbar_subset(&state, s), scale) - xl).amax());
        }
        let v = quantize_input(&step.u, &step.y, &qobs.params);
        state = qobs.step(&state, &v)?;
    }
    Ok(CalibrationReport {
        max_residue_dev: rdev,
        max_estimate_dev: xdev,
        eps: qobs.params.eps,
    })
}

/// Integer part of an exact `x / scale` rounded half up; exposed for tests
/// that cross-check the real path.
pub fn exact_round_ratio(x: f64, scale: f64) -> BigInt {
    let r = exact(x) / exact(scale);
    let two = BigInt::from(2);
    // floor(r + 1/2) = floor((2 num + den) / (2 den))
    (r.numer() * &two + r.denom()).div_floor(&(r.denom() * &two))
}

/// Convenience: centered magnitude bound check used by the overflow test.
pub fn fits_centered(v: &BigInt, modulus: &Modulus) -> bool {
    v.abs() * 2 < *modulus.q()
}
