//! Encrypted observer with per-channel mask cancellation.
//!
//! The encryptor draws one randomness tuple per step and emits one
//! modified ciphertext per residue channel. Channel `j` moves the part of
//! the mask that would reach residue `j` into the extra column, so the
//! first column of `H̄^(j) z^(j)(t)` is exactly `L r̄_j(t)` and can be
//! disclosed without the key.

use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lwe::{decrypt, Ciphertext, CtKind, EncryptionWitness, LweRng, LweScheme, NoiseParams, SecretKey};
use crate::modring::ModMatrix;
use crate::quantobs::QuantizedObserver;
use crate::zerodyn::{CancellationState, ChannelTransform};

/// Public material shared by the encryptor, the observer and anyone
/// transforming transcripts.
#[derive(Clone, Debug)]
pub struct EncSetup {
    pub qobs: QuantizedObserver,
    pub transforms: Vec<ChannelTransform>,
    pub scheme: LweScheme,
    /// `L mod q`.
    pub lfac: BigInt,
    pub lfac_inv: BigInt,
}

impl EncSetup {
    /// Precomputes the normal form of every residue channel.
    pub fn new(qobs: QuantizedObserver) -> Result<Self> {
        let params = &qobs.params;
        let q = params.modulus.clone();
        let lfac = q.reduce(&params.lfac);
        let lfac_inv = q.inverse(&lfac).ok_or(Error::NonInvertibleScale)?;
        let f = qobs.fbar.to_mod(&q);
        let cap = qobs.fbar.nilpotency_order();
        let transforms = (0..qobs.hbar.rows())
            .into_par_iter()
            .map(|j| ChannelTransform::build(&qobs.hbar.row(j), &f, &qobs.gbar, cap, j))
            .collect::<Result<Vec<_>>>()?;
        let scheme = LweScheme::new(q, params.lwe_dim, NoiseParams::new(params.delta));
        Ok(Self {
            qobs,
            transforms,
            scheme,
            lfac,
            lfac_inv,
        })
    }

    pub fn channels(&self) -> usize {
        self.transforms.len()
    }

    pub fn l(&self) -> usize {
        self.qobs.fbar.dim()
    }

    pub fn nu_max(&self) -> usize {
        self.transforms.iter().map(|t| t.nu).max().unwrap_or(0)
    }

    pub fn lwe_dim(&self) -> usize {
        self.scheme.lwe_dim
    }

    fn scale(&self, m: &ModMatrix) -> ModMatrix {
        m.scale(&self.lfac)
    }
}

/// Modified ciphertexts for one encryption event, plus the standard
/// ciphertext they all fold back to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedBatch {
    pub standard: Ciphertext,
    pub modified: Vec<Ciphertext>,
}

/// `[c − x, A, x]` from a standard ciphertext and a correction `x`.
pub fn modify(standard: &Ciphertext, correction: &ModMatrix) -> Ciphertext {
    let first = standard.first_column().sub(correction).expect("matching heights");
    let body = first
        .hstack(&standard.random_block())
        .and_then(|b| b.hstack(correction))
        .expect("matching heights");
    Ciphertext::new(body, CtKind::Modified, standard.lwe_dim()).expect("width n + 2")
}

#[derive(Clone, Debug)]
pub struct SessionCheckpoint {
    cancel: Vec<CancellationState>,
    step: Option<usize>,
    rng: LweRng,
}

/// The stateful encryptor holding the key and the per-channel
/// zero-dynamics of the mask stream.
pub struct EncryptorSession {
    setup: Arc<EncSetup>,
    sk: SecretKey,
    rng: LweRng,
    cancel: Vec<CancellationState>,
    // None before the initial ciphertexts, then the number of inputs sent
    step: Option<usize>,
    last: Option<EncryptionWitness>,
}

impl EncryptorSession {
    pub fn new(setup: Arc<EncSetup>, mut rng: LweRng) -> Self {
        let sk = setup.scheme.keygen(&mut rng);
        Self::with_key(setup, sk, rng)
    }

    pub fn with_key(setup: Arc<EncSetup>, sk: SecretKey, rng: LweRng) -> Self {
        Self {
            setup,
            sk,
            rng,
            cancel: Vec::new(),
            step: None,
            last: None,
        }
    }

    pub fn setup(&self) -> &Arc<EncSetup> {
        &self.setup
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }

    /// Randomness of the most recent encryption.
    pub fn last_witness(&self) -> Option<&EncryptionWitness> {
        self.last.as_ref()
    }

    pub fn step(&self) -> Option<usize> {
        self.step
    }

    pub fn checkpoint(&self) -> SessionCheckpoint {
        SessionCheckpoint {
            cancel: self.cancel.clone(),
            step: self.step,
            rng: self.rng.clone(),
        }
    }

    pub fn restore(&mut self, cp: SessionCheckpoint) {
        self.cancel = cp.cancel;
        self.step = cp.step;
        self.rng = cp.rng;
        self.last = None;
    }

    pub fn enc_initial(&mut self, zbar_ini: &ModMatrix) -> Result<EncryptedBatch> {
        let w = self.setup.scheme.sample_witness(zbar_ini.rows(), &self.sk, &mut self.rng);
        self.enc_initial_with(zbar_ini, w)
    }

    /// Initial encryption under a caller-chosen witness.
    pub fn enc_initial_with(&mut self, zbar_ini: &ModMatrix, w: EncryptionWitness) -> Result<EncryptedBatch> {
        if self.step.is_some() {
            return Err(Error::SessionNotFresh);
        }
        let setup = self.setup.clone();
        let standard = setup.scheme.encrypt_with(&setup.scale(zbar_ini), &w)?;
        let (modified, cancel): (Vec<_>, Vec<_>) = setup
            .transforms
            .par_iter()
            .map(|t| {
                let (tilde, st) = t.cancellation_init(&w.b);
                let corr = t.v2.mul(&tilde).expect("ν-vector");
                (modify(&standard, &corr), st)
            })
            .unzip();
        self.cancel = cancel;
        self.step = Some(0);
        self.last = Some(w);
        Ok(EncryptedBatch { standard, modified })
    }

    pub fn enc_input(&mut self, vbar: &ModMatrix) -> Result<EncryptedBatch> {
        if self.step.is_none() {
            return Err(Error::SessionNotInitialized);
        }
        let w = self.setup.scheme.sample_witness(vbar.rows(), &self.sk, &mut self.rng);
        self.enc_input_with(vbar, w)
    }

    pub fn enc_input_with(&mut self, vbar: &ModMatrix, w: EncryptionWitness) -> Result<EncryptedBatch> {
        let step = self.step.ok_or(Error::SessionNotInitialized)?;
        let setup = self.setup.clone();
        let standard = setup.scheme.encrypt_with(&setup.scale(vbar), &w)?;
        let modified = setup
            .transforms
            .par_iter()
            .zip(self.cancel.par_iter_mut())
            .map(|(t, st)| {
                let tilde = t.cancellation_step(st, &w.b);
                let corr = t.sigma_dag.mul(&tilde).expect("scalar");
                modify(&standard, &corr)
            })
            .collect();
        self.step = Some(step + 1);
        self.last = Some(w);
        Ok(EncryptedBatch { standard, modified })
    }
}

/// Per-channel encrypted observer states `z^(j)(t)`, each `l × (N+2)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncObserverState {
    pub z: Vec<Ciphertext>,
    pub step: usize,
}

/// The untrusted observer: only public matrices and ciphertexts.
#[derive(Clone, Debug)]
pub struct EncObserver {
    setup: Arc<EncSetup>,
}

impl EncObserver {
    pub fn new(setup: Arc<EncSetup>) -> Self {
        Self { setup }
    }

    pub fn init(&self, initial: &[Ciphertext]) -> Result<EncObserverState> {
        self.check_channels(initial.len())?;
        Ok(EncObserverState {
            z: initial.to_vec(),
            step: 0,
        })
    }

    /// `z^(j) ← F̄ z^(j) + Ḡ c_v^(j)` for every channel in parallel.
    pub fn step(&self, state: &EncObserverState, inputs: &[Ciphertext]) -> Result<EncObserverState> {
        self.check_channels(inputs.len())?;
        let qobs = &self.setup.qobs;
        let z = state
            .z
            .par_iter()
            .zip(inputs.par_iter())
            .map(|(zj, cj)| step_channel(qobs, zj, cj))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncObserverState {
            z,
            step: state.step + 1,
        })
    }

    /// Rows `H̄^(j) z^(j)` and their first column.
    pub fn residue(&self, state: &EncObserverState) -> (Vec<ModMatrix>, ModMatrix) {
        encrypted_residue(&self.setup, state)
    }

    fn check_channels(&self, found: usize) -> Result<()> {
        if found != self.setup.channels() {
            return Err(Error::DimensionMismatch {
                context: "encrypted observer channels",
                expected: (self.setup.channels(), 1),
                found: (found, 1),
            });
        }
        Ok(())
    }
}

/// One channel update; the row shift keeps `F̄` free of multiplications.
pub fn step_channel(qobs: &QuantizedObserver, z: &Ciphertext, c: &Ciphertext) -> Result<Ciphertext> {
    if z.kind() != c.kind() {
        return Err(Error::KindMismatch);
    }
    let body = qobs.fbar.apply_mod(z.body()).add(&qobs.gbar.mul(c.body())?)?;
    Ciphertext::new(body, z.kind(), z.lwe_dim())
}

pub fn encrypted_residue(setup: &EncSetup, state: &EncObserverState) -> (Vec<ModMatrix>, ModMatrix) {
    let rows: Vec<ModMatrix> = state
        .z
        .par_iter()
        .enumerate()
        .map(|(j, zj)| setup.transforms[j].h.mul(zj.body()).expect("residue row"))
        .collect();
    let r1 = rows.iter().map(|r| r.get(0, 0).clone()).collect();
    (rows, ModMatrix::column_vector(r1, &setup.scheme.modulus))
}

/// `L⁻¹ r1 mod q`.
pub fn disclose_residue(r1: &ModMatrix, setup: &EncSetup) -> ModMatrix {
    r1.scale(&setup.lfac_inv)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recovery {
    pub xbar: ModMatrix,
    /// Whether the detection criterion held at this step, which is what
    /// makes the value trustworthy.
    pub valid: bool,
}

/// `round(cmod(Φ̄† Dec′(z^(j))) / L)` for channel `j`.
pub fn recover_encrypted_state(
    setup: &EncSetup,
    state: &EncObserverState,
    channel: usize,
    sk: &SecretKey,
    criterion_held: bool,
) -> Result<Recovery> {
    let dec = decrypt(&state.z[channel], sk)?;
    let y = setup.qobs.phi_pinv_bar.mul(&dec)?;
    let lfac = &setup.qobs.params.lfac;
    let two = BigInt::from(2);
    let den = lfac * &two;
    let vals = y
        .entries()
        .iter()
        .map(|v| (v * &two + lfac).div_floor(&den))
        .collect();
    Ok(Recovery {
        xbar: ModMatrix::column_vector(vals, &setup.scheme.modulus),
        valid: criterion_held,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modring::Modulus;
    use crate::obsdesign::{build_bank, residue_map, ShiftBlocks};
    use crate::plantsim::{run_closed_loop, AttackScenario, PlantModel};
    use crate::quantobs::{quantize_input, QuantParams};
    use nalgebra::{DMatrix, DVector};
    use num_traits::One;

    fn toy_setup(lwe_dim: usize) -> (Arc<EncSetup>, PlantModel) {
        let model = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[-0.1, -0.2]),
            DVector::from_vec(vec![0.5, -0.5]),
            0.1,
        )
        .unwrap();
        let bank = build_bank(&model, 1).unwrap();
        let s = 1e-4;
        let map = residue_map(&bank, s);
        let params = QuantParams {
            s1: s,
            s2: s,
            lfac: BigInt::one() << 40,
            modulus: Modulus::new(Modulus::benchmark_prime()).unwrap(),
            lwe_dim,
            delta: 19.2,
            eps: 0.3,
            kappa: bank.kappa,
            ztilde_ini: 1.0,
            m_bound: 5.0,
            l_max: bank.l_max(),
            l: bank.l(),
        };
        let qobs = QuantizedObserver::new(&bank, &map, params);
        (Arc::new(EncSetup::new(qobs).unwrap()), model)
    }

    #[test]
    fn modify_folds_back() {
        let q = Modulus::from_u64(101).unwrap();
        let std = Ciphertext::new(ModMatrix::from_i64_rows(&[&[5, 1, 2], &[7, 3, 4]], &q), CtKind::Standard, 2).unwrap();
        let corr = ModMatrix::from_i64_rows(&[&[9], &[-1]], &q);
        let m = modify(&std, &corr);
        assert_eq!(m.body(), &ModMatrix::from_i64_rows(&[&[-4, 1, 2, 9], &[8, 3, 4, -1]], &q));
        assert_eq!(m.to_standard(), std);
    }

    #[test]
    fn session_lifecycle_errors() {
        let (setup, _) = toy_setup(8);
        let mut s = EncryptorSession::new(setup.clone(), LweRng::insecure_test(1));
        let v = ModMatrix::zeros(4, 1, &setup.scheme.modulus);
        assert!(matches!(s.enc_input(&v), Err(Error::SessionNotInitialized)));
        let z = ModMatrix::zeros(setup.l(), 1, &setup.scheme.modulus);
        s.enc_initial(&z).unwrap();
        assert!(matches!(s.enc_initial(&z), Err(Error::SessionNotFresh)));
    }

    #[test]
    fn zero_masks_reproduce_scaled_plain_observer() {
        let (setup, model) = toy_setup(6);
        let q = setup.scheme.modulus.clone();
        let mut s = EncryptorSession::new(setup.clone(), LweRng::insecure_test(2));
        let zero_w = |h: usize| EncryptionWitness {
            a: ModMatrix::zeros(h, 6, &q),
            e: ModMatrix::zeros(h, 1, &q),
            b: ModMatrix::zeros(h, 1, &q),
        };
        let qobs = &setup.qobs;
        let mut plain = qobs.initial_state(&DVector::zeros(setup.l()));
        let init = s.enc_initial_with(&plain.zbar, zero_w(setup.l())).unwrap();
        assert!(init.modified.iter().all(|c| c.last_column().unwrap().is_zero()));
        let obs = EncObserver::new(setup.clone());
        let mut st = obs.init(&init.modified).unwrap();
        for step in run_closed_loop(&model, &AttackScenario::none(1), 12) {
            let v = quantize_input(&step.u, &step.y, &qobs.params);
            for zj in &st.z {
                assert_eq!(zj.first_column(), plain.zbar.scale(&setup.lfac));
            }
            let batch = s.enc_input_with(&v, zero_w(v.rows())).unwrap();
            st = obs.step(&st, &batch.modified).unwrap();
            plain = qobs.step(&plain, &v).unwrap();
        }
    }

    #[test]
    fn checkpoint_restores_stream() {
        let (setup, _) = toy_setup(4);
        let q = setup.scheme.modulus.clone();
        let mut s = EncryptorSession::new(setup.clone(), LweRng::insecure_test(3));
        s.enc_initial(&ModMatrix::zeros(setup.l(), 1, &q)).unwrap();
        let v = ModMatrix::from_i64_rows(&[&[1], &[2], &[3], &[4]], &q);
        let cp = s.checkpoint();
        let a = s.enc_input(&v).unwrap();
        s.restore(cp);
        let b = s.enc_input(&v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shift_structure_moves_rows() {
        let (setup, _) = toy_setup(3);
        let q = setup.scheme.modulus.clone();
        let fb: &ShiftBlocks = &setup.qobs.fbar;
        let l = fb.dim();
        let z = Ciphertext::new(
            ModMatrix::from_fn(l, 5, &q, |r, c| BigInt::from((r * 5 + c + 1) as i64)),
            CtKind::Modified,
            3,
        )
        .unwrap();
        let zero_in = Ciphertext::zero(setup.qobs.gbar.cols(), 3, CtKind::Modified, &q);
        let next = step_channel(&setup.qobs, &z, &zero_in).unwrap();
        for b in 0..fb.sizes().len() {
            let r = fb.block_range(b);
            assert!(next.body().row(r.start).is_zero());
            for i in r.start + 1..r.end {
                assert_eq!(next.body().row(i), z.body().row(i - 1));
            }
        }
    }

    #[test]
    fn disclose_inverts_scale() {
        let (setup, _) = toy_setup(2);
        let q = setup.scheme.modulus.clone();
        let v = ModMatrix::from_i64_rows(&[&[12345], &[-7], &[0]], &q);
        assert_eq!(disclose_residue(&v.scale(&setup.lfac), &setup), v);
    }
}
