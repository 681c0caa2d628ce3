//! Zero dynamics of a single residue channel over Z_q.
//!
//! A channel is the MISO system `z(t+1) = F z + G v`, `r = H z` with
//! `H` one row of the residue map. In the coordinates `ξ = T1 z`,
//! `w = T2 z` it becomes a chain of `ν` delays driven by `Σ v + Ψ ξ + Γ w`,
//! which is what lets the encryptor choose mask corrections that keep the
//! mask's contribution to `r` identically zero.

use crate::error::{Error, Result};
use crate::modring::ModMatrix;

/// Smallest `ν ≥ 1` with `H F^{ν-1} G ≠ 0`, searching up to `cap`.
///
/// `channel` only labels the error.
pub fn relative_degree(h: &ModMatrix, f: &ModMatrix, g: &ModMatrix, cap: usize, channel: usize) -> Result<usize> {
    let mut row = h.clone();
    for nu in 1..=cap {
        if !row.mul(g)?.is_zero() {
            return Ok(nu);
        }
        row = row.mul(f)?;
    }
    Err(Error::RelativeDegreeUndefined { channel })
}

/// Normal-form data of one channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelTransform {
    pub channel: usize,
    pub nu: usize,
    pub h: ModMatrix,
    pub f: ModMatrix,
    pub g: ModMatrix,
    pub t1: ModMatrix,
    pub t2: ModMatrix,
    pub v1: ModMatrix,
    pub v2: ModMatrix,
    pub s1: ModMatrix,
    pub s2: ModMatrix,
    pub s3: ModMatrix,
    pub psi: ModMatrix,
    pub gamma: ModMatrix,
    pub sigma: ModMatrix,
    pub sigma_dag: ModMatrix,
    /// `S1 − S3 Σ† Ψ`.
    pub s: ModMatrix,
    /// `I − Σ† Σ`.
    pub proj: ModMatrix,
}

impl ChannelTransform {
    pub fn build(h: &ModMatrix, f: &ModMatrix, g: &ModMatrix, cap: usize, channel: usize) -> Result<Self> {
        let nu = relative_degree(h, f, g, cap, channel)?;
        let l = f.rows();
        let q = f.modulus();
        let mut t2 = h.clone();
        let mut row = h.clone();
        for _ in 1..nu {
            row = row.mul(f)?;
            t2 = t2.vstack(&row)?;
        }
        // row = H F^{ν-1}
        let sigma = row.mul(g)?;
        let h_f_nu = row.mul(f)?;
        let t1 = t2.complete_basis()?;
        let v = t1.vstack(&t2)?.inverse()?;
        let v1 = v.col_range(0..l - nu);
        let v2 = v.col_range(l - nu..l);
        let t1f = t1.mul(f)?;
        let s1 = t1f.mul(&v1)?;
        let s2 = t1f.mul(&v2)?;
        let s3 = t1.mul(g)?;
        let psi = h_f_nu.mul(&v1)?;
        let gamma = h_f_nu.mul(&v2)?;
        let sigma_dag = sigma.right_inverse_row()?;
        let s = s1.sub(&s3.mul(&sigma_dag)?.mul(&psi)?)?;
        let proj = ModMatrix::identity(g.cols(), q).sub(&sigma_dag.mul(&sigma)?)?;
        Ok(Self {
            channel,
            nu,
            h: h.clone(),
            f: f.clone(),
            g: g.clone(),
            t1,
            t2,
            v1,
            v2,
            s1,
            s2,
            s3,
            psi,
            gamma,
            sigma,
            sigma_dag,
            s,
            proj,
        })
    }

    pub fn l(&self) -> usize {
        self.f.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.g.cols()
    }

    /// Starts mask cancellation: returns `b̃_ini = T2 b_ini` and the
    /// zero-dynamics state `b_ξ(0) = T1 b_ini`.
    pub fn cancellation_init(&self, b_ini: &ModMatrix) -> (ModMatrix, CancellationState) {
        let tilde = self.t2.mul(b_ini).expect("l-vector");
        let xi = self.t1.mul(b_ini).expect("l-vector");
        (tilde, CancellationState { b_xi: xi, step: 0 })
    }

    /// `b̃_v = Σ b_v + Ψ b_ξ`, then `b_ξ ← S b_ξ + S3 (I − Σ†Σ) b_v`.
    pub fn cancellation_step(&self, state: &mut CancellationState, b_v: &ModMatrix) -> ModMatrix {
        let tilde = self
            .sigma
            .mul(b_v)
            .and_then(|x| x.add(&self.psi.mul(&state.b_xi)?))
            .expect("input dimension");
        let next = self
            .s
            .mul(&state.b_xi)
            .and_then(|x| x.add(&self.s3.mul(&self.proj.mul(b_v)?)?))
            .expect("input dimension");
        state.b_xi = next;
        state.step += 1;
        tilde
    }

    /// `b_ini − V2 b̃_ini`.
    pub fn corrected_initial(&self, b_ini: &ModMatrix, tilde: &ModMatrix) -> ModMatrix {
        b_ini.sub(&self.v2.mul(tilde).expect("ν-vector")).expect("l-vector")
    }

    /// `b_v − Σ† b̃_v`.
    pub fn corrected_input(&self, b_v: &ModMatrix, tilde: &ModMatrix) -> ModMatrix {
        b_v.sub(&self.sigma_dag.mul(tilde).expect("scalar")).expect("input vector")
    }

    /// Normal-form coordinates `(ξ, w)` of an `l`-vector.
    pub fn to_normal(&self, z: &ModMatrix) -> (ModMatrix, ModMatrix) {
        (self.t1.mul(z).expect("l-vector"), self.t2.mul(z).expect("l-vector"))
    }

    /// One step of the normal form: returns the next `(ξ, w)`.
    pub fn normal_step(&self, xi: &ModMatrix, w: &ModMatrix, v: &ModMatrix) -> (ModMatrix, ModMatrix) {
        let xi_next = self
            .s1
            .mul(xi)
            .and_then(|a| a.add(&self.s2.mul(w)?))
            .and_then(|a| a.add(&self.s3.mul(v)?))
            .expect("normal form dimensions");
        let bottom = self
            .psi
            .mul(xi)
            .and_then(|a| a.add(&self.gamma.mul(w)?))
            .and_then(|a| a.add(&self.sigma.mul(v)?))
            .expect("normal form dimensions");
        let w_next = w.row_range(1..self.nu).vstack(&bottom).expect("chain");
        (xi_next, w_next)
    }
}

/// Zero-dynamics state of one channel's mask stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CancellationState {
    pub b_xi: ModMatrix,
    pub step: usize,
}

/// Outputs `r(0), …, r(T)` of the raw channel for `T = inputs.len()`.
pub fn simulate_channel(h: &ModMatrix, f: &ModMatrix, g: &ModMatrix, z_ini: &ModMatrix, inputs: &[ModMatrix]) -> Vec<ModMatrix> {
    let mut z = z_ini.clone();
    let mut out = Vec::with_capacity(inputs.len() + 1);
    for v in inputs {
        out.push(h.mul(&z).expect("channel dimensions"));
        z = f.mul(&z).and_then(|x| x.add(&g.mul(v)?)).expect("channel dimensions");
    }
    out.push(h.mul(&z).expect("channel dimensions"));
    out
}
