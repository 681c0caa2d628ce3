//! End-to-end runs: design from a scenario, then the real, quantized or
//! encrypted observer over a simulated trajectory with per-step records.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::encobs::{disclose_residue, recover_encrypted_state, EncObserver, EncSetup, EncryptorSession};
use crate::error::{Error, Result};
use crate::lwe::{decrypt, LweRng};
use crate::modring::{ModMatrix, Modulus};
use crate::obsdesign::{build_bank, calibrate_m, residue_map, ObserverBank, ResidueMap};
use crate::plantsim::{run_closed_loop, AttackScenario, PlantModel, Trajectory};
use crate::quantobs::{
    calibrate_quantization, detect, quantize_input, scale_to_real, validate_params, BoundsReport, CalibrationReport,
    QuantParams, QuantizedObserver,
};
use crate::secviews::{View1, View2};

/// Scales, modulus and encryption sizes. Integers are decimal strings so
/// values above 2^64 survive JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemParams {
    pub s1: f64,
    pub s2: f64,
    #[serde(rename = "L")]
    pub lfac: String,
    pub q: String,
    #[serde(rename = "N")]
    pub lwe_dim: usize,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub eps: f64,
    /// Attack-free horizon used to calibrate `M`.
    #[serde(default = "default_m_horizon")]
    pub m_horizon: usize,
}

fn default_m_horizon() -> usize {
    400
}

fn parse_int(s: &str, name: &str) -> Result<BigInt> {
    let t = s.trim();
    let v = if let Some((base, exp)) = t.split_once('^') {
        let (exp, offset) = match exp.split_once('-') {
            Some((e, o)) => (e, -parse_int(o, name)?),
            None => match exp.split_once('+') {
                Some((e, o)) => (e, parse_int(o, name)?),
                None => (exp, BigInt::default()),
            },
        };
        let base: BigInt = base.trim().parse().map_err(|_| Error::InvalidModel(format!("{name}: bad integer {s:?}")))?;
        let exp: u32 = exp.trim().parse().map_err(|_| Error::InvalidModel(format!("{name}: bad exponent {s:?}")))?;
        num_traits::pow(base, exp as usize) + offset
    } else {
        t.parse().map_err(|_| Error::InvalidModel(format!("{name}: bad integer {s:?}")))?
    };
    Ok(v)
}

impl SystemParams {
    /// Benchmark values with the given LWE dimension.
    pub fn benchmark(lwe_dim: usize) -> Self {
        Self {
            s1: 1e-5,
            s2: 1e-5,
            lfac: "2^44".into(),
            q: "2^109-31".into(),
            lwe_dim,
            delta: 19.2,
            eps: 0.3,
            m_horizon: default_m_horizon(),
        }
    }

    /// Accepts plain decimals or `b^e`, `b^e-c`, `b^e+c`.
    pub fn lfac_int(&self) -> Result<BigInt> {
        let v = parse_int(&self.lfac, "L")?;
        if !v.is_positive() {
            return Err(Error::InvalidModel("L must be positive".into()));
        }
        Ok(v)
    }

    pub fn modulus(&self) -> Result<Arc<Modulus>> {
        Modulus::new(parse_int(&self.q, "q")?)
    }
}

/// Everything derived from a scenario and its parameters.
#[derive(Clone, Debug)]
pub struct Design {
    pub model: PlantModel,
    pub attacks: AttackScenario,
    pub bank: ObserverBank,
    pub map: ResidueMap,
    pub qobs: QuantizedObserver,
    pub bounds: BoundsReport,
    pub zhat_ini: DVector<f64>,
}

impl Design {
    pub fn params(&self) -> &QuantParams {
        &self.qobs.params
    }

    pub fn simulate(&self, steps: usize) -> Trajectory {
        run_closed_loop(&self.model, &self.attacks, steps)
    }

    pub fn simulate_attack_free(&self, steps: usize) -> Trajectory {
        run_closed_loop(&self.model, &AttackScenario::none(self.attacks.k_max), steps)
    }

    pub fn calibrate(&self, steps: usize) -> Result<CalibrationReport> {
        calibrate_quantization(&self.bank, &self.qobs, &self.simulate_attack_free(steps), &self.zhat_ini)
    }

    pub fn enc_setup(&self) -> Result<Arc<EncSetup>> {
        Ok(Arc::new(EncSetup::new(self.qobs.clone())?))
    }

    /// Steps whose residue can see an attack: sensor `i` attacked at `τ`
    /// reaches the residue at `τ+1, …, τ+l_i`.
    pub fn affected_steps(&self, steps: usize) -> Vec<bool> {
        self.attacks.affected_steps(&self.bank.observability_indices(), steps)
    }
}

pub fn build_design(model: PlantModel, attacks: AttackScenario, sys: &SystemParams) -> Result<Design> {
    let bank = build_bank(&model, attacks.k_max)?;
    let zhat_ini = DVector::zeros(bank.l());
    let map = residue_map(&bank, sys.s1);
    let params = QuantParams {
        s1: sys.s1,
        s2: sys.s2,
        lfac: sys.lfac_int()?,
        modulus: sys.modulus()?,
        lwe_dim: sys.lwe_dim,
        delta: sys.delta,
        eps: sys.eps,
        kappa: bank.kappa,
        ztilde_ini: bank.ztilde_ini(&model.x_ini, &zhat_ini),
        m_bound: calibrate_m(&bank, &model, sys.m_horizon, &zhat_ini)?,
        l_max: bank.l_max(),
        l: bank.l(),
    };
    let bounds = validate_params(&params, &map.gbar);
    let qobs = QuantizedObserver::new(&bank, &map, params);
    Ok(Design {
        model,
        attacks,
        bank,
        map,
        qobs,
        bounds,
        zhat_ini,
    })
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time_s: f64,
    pub residue_norm: f64,
    pub threshold: f64,
    pub detected: bool,
    pub est_error_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reference,
    Quantized,
    Encrypted,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reference => "reference",
            Mode::Quantized => "quantized",
            Mode::Encrypted => "encrypted",
        }
    }
}

pub const CSV_HEADER: &str = "step,time_s,residue_norm,threshold,detected,est_error_norm,mode";

pub fn write_csv<W: Write>(w: &mut W, records: &[StepRecord], mode: Mode) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.1},{:.9e},{:.9e},{},{:.9e},{}",
            r.step,
            r.time_s,
            r.residue_norm,
            r.threshold,
            r.detected,
            r.est_error_norm,
            mode.as_str()
        )?;
    }
    Ok(())
}

fn threshold(params: &QuantParams, t: usize) -> f64 {
    let transient = if t < params.l_max { 1.0 } else { 0.0 };
    2.0 * params.kappa * params.ztilde_ini * transient + params.eps
}

/// Real-arithmetic observer with the same detection rule.
pub fn run_reference(design: &Design, traj: &Trajectory) -> Vec<StepRecord> {
    let refs = crate::obsdesign::run_reference_observer(&design.bank, traj, &design.zhat_ini);
    let ts = design.model.ts;
    traj.iter()
        .zip(&refs)
        .enumerate()
        .map(|(t, (s, r))| {
            let lhs = r.rhat.amax();
            let thr = threshold(design.params(), t);
            StepRecord {
                step: t,
                time_s: t as f64 * ts,
                residue_norm: lhs,
                threshold: thr,
                detected: lhs > thr,
                est_error_norm: (&s.x - &r.xhat).amax(),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct QuantStep {
    pub record: StepRecord,
    pub zbar: ModMatrix,
    pub rbar: ModMatrix,
    pub xbar: ModMatrix,
}

pub fn run_quantized(design: &Design, traj: &Trajectory) -> Result<Vec<QuantStep>> {
    let qobs = &design.qobs;
    let p = &qobs.params;
    let mut state = qobs.initial_state(&design.zhat_ini);
    let mut out = Vec::with_capacity(traj.len());
    for (t, s) in traj.iter().enumerate() {
        let rbar = qobs.residue(&state);
        let d = detect(&rbar, t, p);
        let xbar = qobs.xbar(&state);
        let est = (&s.x - scale_to_real(&xbar, p.output_scale())).amax();
        out.push(QuantStep {
            record: StepRecord {
                step: t,
                time_s: t as f64 * design.model.ts,
                residue_norm: d.lhs,
                threshold: d.threshold,
                detected: d.flag,
                est_error_norm: est,
            },
            zbar: state.zbar.clone(),
            rbar,
            xbar,
        });
        state = qobs.step(&state, &quantize_input(&s.u, &s.y, p))?;
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct EncOptions {
    /// Seeds the insecure-test generator; `None` draws from OS entropy.
    pub seed: Option<u64>,
    /// Track the accumulated LWE error and check decryptions against it.
    pub white_box: bool,
    /// Compare the recovered state on every channel, not only the first.
    pub all_channels: bool,
    /// Keep both adversary transcripts.
    pub record_views: bool,
}

#[derive(Clone, Debug)]
pub struct EncStep {
    pub record: StepRecord,
    /// First residue column equals `L r̄(t)` of the plaintext observer.
    pub disclosure_exact: bool,
    pub disclosed: ModMatrix,
    pub recovered: ModMatrix,
    pub recovery_valid: bool,
    /// Recovered states equal the plaintext `x̄(t)` on every checked channel.
    pub recovery_exact: bool,
    /// White-box: `Dec′(z^(j)) = L z̄ + e_z` on every channel.
    pub decryption_consistent: Option<bool>,
    /// White-box: `‖Φ̄† e_z‖` and whether it stays below `L/2`.
    pub error_budget: Option<(BigInt, bool)>,
}

#[derive(Clone, Debug)]
pub struct EncryptedRun {
    pub steps: Vec<EncStep>,
    pub plain: Vec<QuantStep>,
    pub views: Option<(View1, View2)>,
}

impl EncryptedRun {
    pub fn records(&self) -> Vec<StepRecord> {
        self.steps.iter().map(|s| s.record.clone()).collect()
    }
}

/// Runs the encryptor, the encrypted observer and the plaintext quantized
/// observer side by side.
pub fn run_encrypted(design: &Design, setup: &Arc<EncSetup>, traj: &Trajectory, opts: &EncOptions) -> Result<EncryptedRun> {
    let qobs = &design.qobs;
    let p = &qobs.params;
    let plain = run_quantized(design, traj)?;
    let rng = match opts.seed {
        Some(s) => LweRng::insecure_test(s),
        None => LweRng::from_entropy(),
    };
    let mut session = EncryptorSession::new(setup.clone(), rng);
    let observer = EncObserver::new(setup.clone());

    let zbar_ini = qobs.initial_state(&design.zhat_ini).zbar;
    let init = session.enc_initial(&zbar_ini)?;
    let mut state = observer.init(&init.modified)?;
    let mut e_z = session.last_witness().map(|w| w.e.clone()).expect("witness after encryption");
    let (mut v1_inputs, mut v2_inputs, mut residues) = (Vec::new(), Vec::new(), Vec::new());
    let channels: Vec<usize> = if opts.all_channels { (0..setup.channels()).collect() } else { vec![0] };
    let half_l = &p.lfac / 2u32 + (&p.lfac % 2u32);

    let mut out = Vec::with_capacity(traj.len());
    for (t, (s, pq)) in traj.iter().zip(&plain).enumerate() {
        let (_, r1) = observer.residue(&state);
        let disclosed = disclose_residue(&r1, setup);
        let disclosure_exact = r1 == pq.rbar.scale(&setup.lfac) && disclosed == pq.rbar;
        if opts.record_views {
            residues.push(disclosed.clone());
        }
        let d = detect(&disclosed, t, p);
        let sk = session.secret_key();
        let mut recovered = None;
        let mut recovery_exact = true;
        for &j in &channels {
            let rec = recover_encrypted_state(setup, &state, j, sk, !d.flag)?;
            recovery_exact &= rec.xbar == pq.xbar;
            recovered.get_or_insert(rec);
        }
        let recovered = recovered.expect("at least one channel");
        let (mut consistent, mut budget) = (None, None);
        if opts.white_box {
            let expected = pq.zbar.scale(&setup.lfac).add(&e_z)?;
            let mut ok = true;
            for zj in &state.z {
                ok &= decrypt(zj, sk)? == expected;
            }
            consistent = Some(ok);
            let pe = qobs.phi_pinv_bar.mul(&e_z)?.max_abs();
            let within = pe < half_l;
            budget = Some((pe, within));
        }
        let est = (&s.x - scale_to_real(&recovered.xbar, p.output_scale())).amax();
        out.push(EncStep {
            record: StepRecord {
                step: t,
                time_s: t as f64 * design.model.ts,
                residue_norm: d.lhs,
                threshold: d.threshold,
                detected: d.flag,
                est_error_norm: est,
            },
            disclosure_exact,
            disclosed,
            recovery_valid: recovered.valid,
            recovered: recovered.xbar,
            recovery_exact,
            decryption_consistent: consistent,
            error_budget: budget,
        });

        let v = quantize_input(&s.u, &s.y, p);
        let batch = session.enc_input(&v)?;
        state = observer.step(&state, &batch.modified)?;
        if opts.white_box {
            let e_v = &session.last_witness().expect("witness after encryption").e;
            e_z = qobs.fbar.apply_mod(&e_z).add(&qobs.gbar.mul(e_v)?)?;
        }
        if opts.record_views {
            v1_inputs.push(batch.standard);
            v2_inputs.push(batch.modified);
        }
    }
    let views = opts.record_views.then(|| {
        (
            View1 {
                initial: init.standard.clone(),
                inputs: v1_inputs,
                residues,
            },
            View2 {
                initial: init.modified.clone(),
                inputs: v2_inputs,
            },
        )
    });
    Ok(EncryptedRun { steps: out, plain, views })
}

/// First step flagged by the detector, if any.
pub fn first_detection(records: &[StepRecord]) -> Option<usize> {
    records.iter().find(|r| r.detected).map(|r| r.step)
}

/// `‖v‖_∞` of a centered vector as `f64`.
pub fn max_abs_f64(v: &ModMatrix) -> f64 {
    v.max_abs().to_f64().unwrap_or(f64::INFINITY)
}
