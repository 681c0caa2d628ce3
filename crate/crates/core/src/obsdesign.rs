//! Real-arithmetic observer synthesis.
//!
//! Each sensor gets a deadbeat partial observer in observable canonical
//! form. Stacking them gives the full observer `z+ = F̄ z + [ΦB, L][u; y]`
//! whose subset estimates `Φ_Λ† z_Λ` are compared to form the residue.

use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::modring::{ModMatrix, Modulus};
use crate::plantsim::{PlantModel, Trajectory};
use std::sync::Arc;

/// Relative singular-value threshold for numerical ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
const CAYLEY_HAMILTON_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct DesignOptions {
    pub rank_tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// `floor(x + 1/2)`, the rounding used for every quantization.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// `floor(x / scale + 1/2)` evaluated exactly on the binary values of
/// `x` and `scale`.
pub fn quantize_scalar(x: f64, scale: f64) -> BigInt {
    let r = BigRational::from_float(x).expect("finite value") / BigRational::from_float(scale).expect("finite scale");
    let two = BigInt::from(2);
    (r.numer() * &two + r.denom()).div_floor(&(r.denom() * &two))
}

fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank by singular-value thresholding relative to `σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let s = singular_values_desc(m);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|&&v| v > tol * max).count(),
        _ => 0,
    }
}

pub fn observability_matrix(a: &DMatrix<f64>, ci: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut o = DMatrix::zeros(n * ci.nrows(), n);
    let mut row = ci.clone();
    for h in 0..n {
        o.rows_mut(h * ci.nrows(), ci.nrows()).copy_from(&row);
        row = &row * a;
    }
    o
}

pub fn observability_index(a: &DMatrix<f64>, ci: &DMatrix<f64>, tol: f64) -> usize {
    numerical_rank(&observability_matrix(a, ci), tol)
}

/// Monic characteristic polynomial coefficients `c_0..c_{d}` (ascending,
/// `c_d = 1`) reconstructed from the eigenvalues.
fn char_poly_from_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let roots = m.complex_eigenvalues();
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for r in roots.iter() {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i + 1] += *c;
            next[i] -= *c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Deadbeat observer for the observable part of one sensor.
#[derive(Clone, Debug)]
pub struct PartialObserver {
    /// 0-based sensor index.
    pub sensor: usize,
    pub l: usize,
    /// `f_1..f_l`, the last column of `F_i` and the gain `L_i`.
    pub f: Vec<f64>,
    /// `l × n`, rows `φ_1..φ_l`.
    pub phi: DMatrix<f64>,
}

impl PartialObserver {
    /// Observable canonical form `F_i`.
    pub fn f_matrix(&self) -> DMatrix<f64> {
        let l = self.l;
        DMatrix::from_fn(l, l, |r, c| {
            if c == l - 1 {
                self.f[r]
            } else if r >= 1 && c == r - 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn j_row(&self) -> DMatrix<f64> {
        DMatrix::from_fn(1, self.l, |_, c| if c == self.l - 1 { 1.0 } else { 0.0 })
    }

    pub fn gain(&self) -> DVector<f64> {
        DVector::from_vec(self.f.clone())
    }

    /// `F_i - L_i J_i`, the lower shift.
    pub fn fbar(&self) -> DMatrix<f64> {
        &self.f_matrix() - &self.gain() * &self.j_row()
    }
}

/// Restricts `(A, C_i)` to its observable subspace, reads off the
/// characteristic polynomial and builds `Φ_i` by the backward recursion
/// `φ_l = C_i`, `φ_{h-1} = φ_h A - f_h C_i`.
pub fn canonical_decomposition(
    a: &DMatrix<f64>,
    ci: &DMatrix<f64>,
    sensor: usize,
    opts: &DesignOptions,
) -> Result<PartialObserver> {
    let o = observability_matrix(a, ci);
    let l = numerical_rank(&o, opts.rank_tol);
    if l == 0 {
        return Err(Error::InvalidModel(format!("sensor {} observes nothing", sensor + 1)));
    }
    let svd = o.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let n = a.nrows();
    let q = DMatrix::from_fn(l, n, |r, c| vt[(order[r], c)]);
    let restricted = &q * a * q.transpose();
    let c = char_poly_from_eigenvalues(&restricted);
    let f: Vec<f64> = (0..l).map(|k| -c[k]).collect();

    let c_row = ci.row(0).into_owned();
    let mut rows = vec![c_row.clone(); l];
    for h in (1..l).rev() {
        rows[h - 1] = &rows[h] * a - &c_row * f[h];
    }
    let check = &rows[0] * a - &c_row * f[0];
    let residual = check.amax();
    let tolerance = CAYLEY_HAMILTON_TOL * a.amax().max(inf_norm(a));
    if residual > tolerance {
        return Err(Error::ConsistencyFailure {
            sensor: sensor + 1,
            residual,
            tolerance,
        });
    }
    let phi = DMatrix::from_fn(l, n, |r, c| rows[r][c]);
    Ok(PartialObserver { sensor, l, f, phi })
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Moore–Penrose inverse `(MᵀM)⁻¹Mᵀ` of a full-column-rank matrix.
pub fn left_pseudo_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let gram = m.transpose() * m;
    let chol = gram.cholesky()?;
    Some(chol.solve(&m.transpose()))
}

/// Block-diagonal lower-shift matrix `F̄ = diag(F̄_1, …, F̄_p)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftBlocks {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl ShiftBlocks {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Self { sizes, offsets }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn nilpotency_order(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    fn is_block_start(&self, r: usize) -> bool {
        self.offsets[..self.sizes.len()].binary_search(&r).is_ok()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let l = self.dim();
        DMatrix::from_fn(l, l, |r, c| {
            if c + 1 == r && !self.is_block_start(r) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn to_mod(&self, modulus: &Arc<Modulus>) -> ModMatrix {
        let d = self.to_dense();
        ModMatrix::from_fn(d.nrows(), d.ncols(), modulus, |r, c| BigInt::from(d[(r, c)] as i64))
    }

    /// `F̄ v` in real arithmetic.
    pub fn apply_real(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |r, _| if self.is_block_start(r) { 0.0 } else { v[r - 1] })
    }

    /// `F̄ M` over Z_q: rows move down by one within each block and the
    /// first row of each block becomes zero.
    pub fn apply_mod(&self, m: &ModMatrix) -> ModMatrix {
        let cols = m.cols();
        let modulus = m.modulus();
        let mut data = Vec::with_capacity(m.rows() * cols);
        for r in 0..m.rows() {
            if self.is_block_start(r) {
                data.extend(std::iter::repeat_with(BigInt::default).take(cols));
            } else {
                data.extend_from_slice(m.row_slice(r - 1));
            }
        }
        ModMatrix::from_vec(m.rows(), cols, data, modulus)
    }
}

/// All `size`-subsets of `0..p` in lexicographic order.
pub fn lexicographic_subsets(p: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=p - left {
            cur.push(i);
            rec(i + 1, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if size <= p {
        rec(0, p, size, &mut Vec::new(), &mut out);
    }
    out
}

/// Everything the real, quantized and encrypted observers share.
#[derive(Clone, Debug)]
pub struct ObserverBank {
    pub partials: Vec<PartialObserver>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub fbar: ShiftBlocks,
    /// `l × n`.
    pub phi: DMatrix<f64>,
    /// `l × m`.
    pub phi_b: DMatrix<f64>,
    /// `l × p` block-diagonal gain.
    pub l_gain: DMatrix<f64>,
    /// Lexicographic `(p-k)`-subsets, 0-based.
    pub subsets: Vec<Vec<usize>>,
    /// `n × l`.
    pub phi_pinv: DMatrix<f64>,
    /// Per subset, `n × Σ_{i∈Λ} l_i`.
    pub phi_lambda_pinv: Vec<DMatrix<f64>>,
    pub kappa: f64,
}

impl ObserverBank {
    pub fn l(&self) -> usize {
        self.fbar.dim()
    }

    pub fn l_max(&self) -> usize {
        self.fbar.nilpotency_order()
    }

    pub fn n_r(&self) -> usize {
        self.n * self.subsets.len()
    }

    pub fn observability_indices(&self) -> Vec<usize> {
        self.partials.iter().map(|p| p.l).collect()
    }

    /// Rows of `z` picked by `P_Λ`.
    pub fn selector(&self, subset: usize) -> Vec<usize> {
        self.subsets[subset]
            .iter()
            .flat_map(|&i| self.fbar.block_range(i))
            .collect()
    }

    pub fn selector_matrix(&self, subset: usize) -> DMatrix<f64> {
        let sel = self.selector(subset);
        let mut p = DMatrix::zeros(sel.len(), self.l());
        for (r, &c) in sel.iter().enumerate() {
            p[(r, c)] = 1.0;
        }
        p
    }

    /// `[ΦB, L]`.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.l(), self.m + self.p);
        g.columns_mut(0, self.m).copy_from(&self.phi_b);
        g.columns_mut(self.m, self.p).copy_from(&self.l_gain);
        g
    }

    /// `max_i ‖Φ_i x_ini − ẑ_{i,ini}‖`.
    pub fn ztilde_ini(&self, x_ini: &DVector<f64>, zhat_ini: &DVector<f64>) -> f64 {
        let err = &self.phi * x_ini - zhat_ini;
        (0..self.p)
            .map(|i| err.rows_range(self.fbar.block_range(i)).amax())
            .fold(0.0, f64::max)
    }

    /// Stacked residue `x̂_Λ − x̂` for an observer state.
    pub fn residue(&self, zhat: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>, DVector<f64>) {
        let xhat = &self.phi_pinv * zhat;
        let mut r = DVector::zeros(self.n_r());
        let mut per = Vec::with_capacity(self.subsets.len());
        for (s, pinv) in self.phi_lambda_pinv.iter().enumerate() {
            let zl = DVector::from_iterator(self.selector(s).len(), self.selector(s).into_iter().map(|i| zhat[i]));
            let xl = pinv * zl;
            r.rows_mut(s * self.n, self.n).copy_from(&(&xl - &xhat));
            per.push(xl);
        }
        (xhat, per, r)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}, m = {}, p = {}, k = {}", self.n, self.m, self.p, self.k);
        for po in &self.partials {
            let f: Vec<String> = po.f.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "sensor {}: l_i = {}, f = [{}]", po.sensor + 1, po.l, f.join(", "));
        }
        let _ = writeln!(s, "l = {}, l_max = {}", self.l(), self.l_max());
        let _ = writeln!(s, "kappa = {:.6}", self.kappa);
        let _ = writeln!(s, "|P| = {}, n_r = {}", self.subsets.len(), self.n_r());
        let list: Vec<String> = self
            .subsets
            .iter()
            .map(|sub| {
                let one: Vec<String> = sub.iter().map(|i| (i + 1).to_string()).collect();
                format!("{{{}}}", one.join(","))
            })
            .collect();
        let _ = writeln!(s, "subsets = {}", list.join(" "));
        s
    }
}

pub fn build_bank(model: &PlantModel, k: usize) -> Result<ObserverBank> {
    build_bank_with(model, k, &DesignOptions::default())
}

pub fn build_bank_with(model: &PlantModel, k: usize, opts: &DesignOptions) -> Result<ObserverBank> {
    let (n, m, p) = (model.n(), model.m(), model.p());
    if k >= p {
        return Err(Error::EmptySubsetFamily { p, k });
    }
    let partials = (0..p)
        .map(|i| canonical_decomposition(&model.a, &model.c.rows(i, 1).into_owned(), i, opts))
        .collect::<Result<Vec<_>>>()?;
    let fbar = ShiftBlocks::new(partials.iter().map(|po| po.l).collect());
    let l = fbar.dim();
    let mut phi = DMatrix::zeros(l, n);
    let mut l_gain = DMatrix::zeros(l, p);
    for (i, po) in partials.iter().enumerate() {
        let rg = fbar.block_range(i);
        phi.rows_mut(rg.start, rg.len()).copy_from(&po.phi);
        for (h, f) in po.f.iter().enumerate() {
            l_gain[(rg.start + h, i)] = *f;
        }
    }
    let all: Vec<usize> = (0..p).collect();
    if numerical_rank(&phi, opts.rank_tol) < n {
        return Err(Error::RedundancyViolation {
            subset: all.iter().map(|i| i + 1).collect(),
            rank: numerical_rank(&phi, opts.rank_tol),
        });
    }
    let phi_pinv = left_pseudo_inverse(&phi).ok_or(Error::RedundancyViolation {
        subset: all.iter().map(|i| i + 1).collect(),
        rank: numerical_rank(&phi, opts.rank_tol),
    })?;
    let subsets = lexicographic_subsets(p, p - k);
    let mut bank = ObserverBank {
        partials,
        n,
        m,
        p,
        k,
        phi_b: &phi * &model.b,
        phi,
        l_gain,
        subsets,
        phi_pinv,
        phi_lambda_pinv: Vec::new(),
        kappa: 0.0,
        fbar,
    };
    let mut pinvs = Vec::with_capacity(bank.subsets.len());
    for s in 0..bank.subsets.len() {
        let rows = bank.selector(s);
        let phil = bank.phi.select_rows(rows.iter());
        let rank = numerical_rank(&phil, opts.rank_tol);
        let violation = || Error::RedundancyViolation {
            subset: bank.subsets[s].iter().map(|i| i + 1).collect(),
            rank,
        };
        if rank < n {
            return Err(violation());
        }
        pinvs.push(left_pseudo_inverse(&phil).ok_or_else(violation)?);
    }
    bank.kappa = pinvs.iter().map(inf_norm).fold(inf_norm(&bank.phi_pinv), f64::max);
    bank.phi_lambda_pinv = pinvs;
    Ok(bank)
}

/// Exact integer matrix produced by scaling and rounding a real matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BigInt::default(); rows * cols],
        }
    }

    /// `quantize_scalar(m / scale)` entrywise.
    pub fn quantize(m: &DMatrix<f64>, scale: f64) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(quantize_scalar(m[(r, c)], scale));
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> &BigInt {
        &self.data[r * self.cols + c]
    }

    pub fn inf_norm(&self) -> BigInt {
        use num_traits::Signed;
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c).abs()).sum::<BigInt>())
            .max()
            .unwrap_or_default()
    }

    pub fn to_mod(&self, modulus: &Arc<Modulus>) -> ModMatrix {
        ModMatrix::from_vec(self.rows, self.cols, self.data.clone(), modulus)
    }
}

/// Quantized observer matrices.
#[derive(Clone, Debug)]
pub struct ResidueMap {
    pub s1: f64,
    /// `round([ΦB, L] / s1)`, `l × (m+p)`.
    pub gbar: IntMatrix,
    /// `n_r × l`, block row `i` is `Φ̄_{Λ_i}† P_{Λ_i} − Φ̄†`.
    pub hbar: IntMatrix,
    /// `round(Φ† / s1)`, `n × l`.
    pub phi_pinv_bar: IntMatrix,
    pub phi_lambda_pinv_bar: Vec<IntMatrix>,
}

pub fn residue_map(bank: &ObserverBank, s1: f64) -> ResidueMap {
    assert!(s1 > 0.0 && s1 <= 1.0, "scale s1 must lie in (0, 1]");
    let gbar = IntMatrix::quantize(&bank.input_matrix(), s1);
    let phi_pinv_bar = IntMatrix::quantize(&bank.phi_pinv, s1);
    let phi_lambda_pinv_bar: Vec<IntMatrix> = bank
        .phi_lambda_pinv
        .iter()
        .map(|m| IntMatrix::quantize(m, s1))
        .collect();
    let (n, l) = (bank.n, bank.l());
    let mut hbar = IntMatrix::zeros(bank.n_r(), l);
    for (s, pl) in phi_lambda_pinv_bar.iter().enumerate() {
        let sel = bank.selector(s);
        for r in 0..n {
            let row = s * n + r;
            for c in 0..l {
                hbar.data[row * l + c] = -phi_pinv_bar.get(r, c);
            }
            for (cl, &c) in sel.iter().enumerate() {
                hbar.data[row * l + c] += pl.get(r, cl);
            }
        }
    }
    ResidueMap {
        s1,
        gbar,
        hbar,
        phi_pinv_bar,
        phi_lambda_pinv_bar,
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceStep {
    pub zhat: DVector<f64>,
    pub xhat: DVector<f64>,
    pub x_lambda: Vec<DVector<f64>>,
    pub rhat: DVector<f64>,
}

/// Real-arithmetic full observer driven by a recorded trajectory.
pub fn run_reference_observer(
    bank: &ObserverBank,
    trajectory: &Trajectory,
    zhat_ini: &DVector<f64>,
) -> Vec<ReferenceStep> {
    let mut zhat = zhat_ini.clone();
    let mut out = Vec::with_capacity(trajectory.len());
    for step in trajectory {
        let (xhat, x_lambda, rhat) = bank.residue(&zhat);
        let next = bank.fbar.apply_real(&zhat) + &bank.phi_b * &step.u + &bank.l_gain * &step.y;
        out.push(ReferenceStep {
            zhat: std::mem::replace(&mut zhat, next),
            xhat,
            x_lambda,
            rhat,
        });
    }
    out
}

/// Safety-factored bound `M ≥ sup max{‖r̂‖, ‖ẑ‖}` from an attack-free run.
pub fn calibrate_m(
    bank: &ObserverBank,
    model: &PlantModel,
    horizon: usize,
    zhat_ini: &DVector<f64>,
) -> Result<f64> {
    if horizon < 10 * bank.l_max() {
        return Err(Error::Calibration(format!(
            "horizon {horizon} shorter than 10 * l_max = {}",
            10 * bank.l_max()
        )));
    }
    let traj = crate::plantsim::run_closed_loop(model, &crate::plantsim::AttackScenario::none(bank.k), horizon);
    let sup = run_reference_observer(bank, &traj, zhat_ini)
        .iter()
        .map(|s| s.rhat.amax().max(s.zhat.amax()))
        .fold(0.0, f64::max);
    Ok(1.2 * sup)
}
