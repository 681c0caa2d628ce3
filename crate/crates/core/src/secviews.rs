//! Adversary transcripts and the maps between them.
//!
//! `View1` is what an observer sees under plain LWE plus the disclosed
//! residues; `View2` is the per-channel modified ciphertexts. [`f2`] and
//! [`f1`] convert between them using only public parameters, which shows
//! that neither transcript leaks more than the other.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::codec;
use crate::encobs::{disclose_residue, modify, EncObserver, EncSetup};
use crate::error::{Error, Result};
use crate::lwe::{Ciphertext, CtKind};
use crate::modring::{ModMatrix, Modulus};

const VIEW1_MAGIC: &[u8; 4] = b"COV1";
const VIEW2_MAGIC: &[u8; 4] = b"COV2";

/// Standard ciphertexts for `H` steps and residues `r̄(0), …`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View1 {
    pub initial: Ciphertext,
    pub inputs: Vec<Ciphertext>,
    pub residues: Vec<ModMatrix>,
}

impl View1 {
    /// First `inputs` input ciphertexts and first `residues` residues.
    pub fn truncated(&self, inputs: usize, residues: usize) -> Self {
        Self {
            initial: self.initial.clone(),
            inputs: self.inputs[..inputs.min(self.inputs.len())].to_vec(),
            residues: self.residues[..residues.min(self.residues.len())].to_vec(),
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        codec::write_magic(w, VIEW1_MAGIC)?;
        let q = self.initial.body().modulus();
        codec::write_bigint(w, q.q())?;
        codec::write_len(w, self.initial.lwe_dim())?;
        codec::write_ciphertext_body(w, &self.initial)?;
        codec::write_len(w, self.inputs.len())?;
        self.inputs.iter().try_for_each(|c| codec::write_ciphertext_body(w, c))?;
        codec::write_len(w, self.residues.len())?;
        self.residues.iter().try_for_each(|r| codec::write_matrix(w, r))
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        codec::expect_magic(r, VIEW1_MAGIC)?;
        let q = Modulus::new(codec::read_bigint(r)?)?;
        let n = codec::read_len(r)?;
        let initial = codec::read_ciphertext_body(r, n, &q)?;
        let count = codec::read_len(r)?;
        let inputs = (0..count).map(|_| codec::read_ciphertext_body(r, n, &q)).collect::<Result<_>>()?;
        let count = codec::read_len(r)?;
        let residues = (0..count).map(|_| codec::read_matrix(r, &q)).collect::<Result<_>>()?;
        Ok(Self {
            initial,
            inputs,
            residues,
        })
    }
}

/// Per-channel modified ciphertexts: `initial[j]`, `inputs[t][j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View2 {
    pub initial: Vec<Ciphertext>,
    pub inputs: Vec<Vec<Ciphertext>>,
}

impl View2 {
    pub fn truncated(&self, inputs: usize) -> Self {
        Self {
            initial: self.initial.clone(),
            inputs: self.inputs[..inputs.min(self.inputs.len())].to_vec(),
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        codec::write_magic(w, VIEW2_MAGIC)?;
        let first = self.initial.first().ok_or_else(|| Error::Codec("view has no channels".into()))?;
        codec::write_bigint(w, first.body().modulus().q())?;
        codec::write_len(w, first.lwe_dim())?;
        codec::write_len(w, self.initial.len())?;
        self.initial.iter().try_for_each(|c| codec::write_ciphertext_body(w, c))?;
        codec::write_len(w, self.inputs.len())?;
        for step in &self.inputs {
            step.iter().try_for_each(|c| codec::write_ciphertext_body(w, c))?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        codec::expect_magic(r, VIEW2_MAGIC)?;
        let q = Modulus::new(codec::read_bigint(r)?)?;
        let n = codec::read_len(r)?;
        let channels = codec::read_len(r)?;
        let initial = (0..channels).map(|_| codec::read_ciphertext_body(r, n, &q)).collect::<Result<_>>()?;
        let steps = codec::read_len(r)?;
        let inputs = (0..steps)
            .map(|_| (0..channels).map(|_| codec::read_ciphertext_body(r, n, &q)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(Self { initial, inputs })
    }
}

/// Folds one event's channel ciphertexts and checks they agree.
fn fold_channels(cts: &[Ciphertext], step: Option<usize>) -> Result<Ciphertext> {
    let first = cts.first().ok_or(Error::InconsistentRandomness { step })?.to_standard();
    if cts.iter().skip(1).any(|c| c.kind() != CtKind::Modified || c.to_standard() != first) {
        return Err(Error::InconsistentRandomness { step });
    }
    Ok(first)
}

/// Modified ciphertexts to standard ciphertexts plus disclosed residues.
///
/// With `H` input steps the result carries residues `r̄(0), …, r̄(H)`.
pub fn f2(v2: &View2, setup: &Arc<EncSetup>) -> Result<View1> {
    let initial = fold_channels(&v2.initial, None)?;
    let inputs = v2
        .inputs
        .iter()
        .enumerate()
        .map(|(t, cts)| fold_channels(cts, Some(t)))
        .collect::<Result<Vec<_>>>()?;
    let obs = EncObserver::new(setup.clone());
    let mut state = obs.init(&v2.initial)?;
    let mut residues = Vec::with_capacity(v2.inputs.len() + 1);
    for cts in &v2.inputs {
        residues.push(disclose_residue(&obs.residue(&state).1, setup));
        state = obs.step(&state, cts)?;
    }
    residues.push(disclose_residue(&obs.residue(&state).1, setup));
    Ok(View1 {
        initial,
        inputs,
        residues,
    })
}

/// Standard ciphertexts plus residues to modified ciphertexts for the first
/// `horizon` input steps.
///
/// Input step `t` of channel `j` needs residues up to `t + ν_j`.
pub fn f1(v1: &View1, setup: &Arc<EncSetup>, horizon: usize) -> Result<View2> {
    if horizon > v1.inputs.len() {
        return Err(Error::HorizonTooShort {
            step: horizon.saturating_sub(1),
            needed: horizon,
            available: v1.inputs.len(),
        });
    }
    let needed = horizon + setup.nu_max();
    if v1.residues.len() < needed {
        return Err(Error::HorizonTooShort {
            step: horizon.saturating_sub(1),
            needed: needed.saturating_sub(1),
            available: v1.residues.len(),
        });
    }
    let per_channel: Vec<(Ciphertext, Vec<Ciphertext>)> = {
        use rayon::prelude::*;
        (0..setup.channels())
            .into_par_iter()
            .map(|j| f1_channel(v1, setup, j, horizon))
            .collect()
    };
    let initial = per_channel.iter().map(|(c, _)| c.clone()).collect();
    let inputs = (0..horizon)
        .map(|t| per_channel.iter().map(|(_, v)| v[t].clone()).collect())
        .collect();
    Ok(View2 { initial, inputs })
}

fn f1_channel(v1: &View1, setup: &EncSetup, j: usize, horizon: usize) -> (Ciphertext, Vec<Ciphertext>) {
    let t = &setup.transforms[j];
    let q = &setup.scheme.modulus;
    let nu = t.nu;
    // message outputs L r̄_j(t)
    let r: Vec<ModMatrix> = v1
        .residues
        .iter()
        .map(|res| ModMatrix::column_vector(vec![res.get(j, 0).clone()], q).scale(&setup.lfac))
        .collect();
    let window = |s: usize| -> ModMatrix {
        let vals = (s..s + nu).map(|i| r[i].get(0, 0).clone()).collect();
        ModMatrix::column_vector(vals, q)
    };

    // combined message-plus-mask cancellation terms
    let c_ini = v1.initial.first_column();
    let (c_tilde_ini, mut c_state) = t.cancellation_init(&c_ini);
    let m_tilde_ini = window(0);
    let b_tilde_ini = c_tilde_ini.sub(&m_tilde_ini).expect("ν-vector");
    let initial = modify(&v1.initial, &t.v2.mul(&b_tilde_ini).expect("ν-vector"));

    // message part: δ tracks the gap between the true normal-form state
    // and the cancellation state, both started from T1 L z̄_ini
    let mut delta = ModMatrix::zeros(t.l() - nu, 1, q);
    let mut inputs = Vec::with_capacity(horizon);
    for (step, ct) in v1.inputs.iter().take(horizon).enumerate() {
        let c_v = ct.first_column();
        let c_tilde = t.cancellation_step(&mut c_state, &c_v);
        let w = window(step);
        let m_tilde = r[step + nu]
            .sub(&t.gamma.mul(&w).expect("ν-vector"))
            .and_then(|x| x.sub(&t.psi.mul(&delta)?))
            .expect("scalar");
        delta = t
            .s1
            .mul(&delta)
            .and_then(|x| x.add(&t.s2.mul(&w)?))
            .and_then(|x| x.add(&t.s3.mul(&t.sigma_dag.mul(&m_tilde)?)?))
            .expect("zero-dynamics dimensions");
        let b_tilde = c_tilde.sub(&m_tilde).expect("scalar");
        inputs.push(modify(ct, &t.sigma_dag.mul(&b_tilde).expect("scalar")));
    }
    (initial, inputs)
}
