use std::sync::Arc;

use anyhow::Result;
use num_bigint::BigInt;
use rand::Rng;

use cipherobs_core::encobs::EncSetup;
use cipherobs_core::lwe::{ct_add, ct_matmul, decrypt, LweRng, LweScheme, NoiseParams};
use cipherobs_core::modring::ModMatrix;
use cipherobs_core::pipeline::{run_encrypted, Design, EncOptions};
use cipherobs_core::secviews::{f1, f2};
use cipherobs_core::zerodyn::simulate_channel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mutation {
    /// Perturb one entry of the input matrix seen by the channel simulator.
    CorruptGbar,
}

pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all(design: &Design, setup: &Arc<EncSetup>, steps: usize, seed: u64, mutation: Option<Mutation>) -> Result<Vec<SuiteResult>> {
    let mut out = vec![
        homomorphism(design, seed)?,
        nilpotency(design),
        output_zeroing(setup, seed, mutation),
    ];
    let run = run_encrypted(
        design,
        setup,
        &design.simulate(steps),
        &EncOptions {
            seed: Some(seed),
            all_channels: true,
            ..Default::default()
        },
    )?;
    let bad: Vec<usize> = run.steps.iter().filter(|s| !s.disclosure_exact).map(|s| s.record.step).collect();
    out.push(SuiteResult {
        name: "disclosure",
        passed: bad.is_empty(),
        detail: format!("{} of {} steps exact", run.steps.len() - bad.len(), run.steps.len()),
    });
    let valid: Vec<_> = run.steps.iter().filter(|s| s.recovery_valid).collect();
    let exact = valid.iter().filter(|s| s.recovery_exact).count();
    out.push(SuiteResult {
        name: "recovery",
        passed: exact == valid.len(),
        detail: format!("{exact} of {} valid steps exact on {} channels", valid.len(), setup.channels()),
    });
    out.push(view_roundtrip(design, seed)?);
    Ok(out)
}

fn homomorphism(design: &Design, seed: u64) -> Result<SuiteResult> {
    let p = design.params();
    let q = &p.modulus;
    let scheme = LweScheme::new(q.clone(), p.lwe_dim, NoiseParams::new(p.delta));
    let mut rng = LweRng::insecure_test(seed);
    let sk = scheme.keygen(&mut rng);
    let mut ok = true;
    let cases = 200;
    for _ in 0..cases {
        let h = rng.gen_range(1..=4);
        let m1 = ModMatrix::from_fn(h, 1, q, |_, _| q.sample(&mut rng));
        let m2 = ModMatrix::from_fn(h, 1, q, |_, _| q.sample(&mut rng));
        let (c1, w1) = scheme.encrypt(&m1, &sk, &mut rng)?;
        let (c2, w2) = scheme.encrypt(&m2, &sk, &mut rng)?;
        ok &= decrypt(&ct_add(&c1, &c2)?, &sk)? == m1.add(&m2)?.add(&w1.e)?.add(&w2.e)?;
        let k = ModMatrix::from_fn(rng.gen_range(1..=4), h, q, |_, _| BigInt::from(rng.gen_range(-1000i64..=1000)));
        ok &= decrypt(&ct_matmul(&k, &c1)?, &sk)? == k.mul(&m1.add(&w1.e)?)?;
    }
    Ok(SuiteResult {
        name: "homomorphism",
        passed: ok,
        detail: format!("{cases} random sums and products"),
    })
}

fn nilpotency(design: &Design) -> SuiteResult {
    let f = design.bank.fbar.to_dense();
    let l_max = design.bank.l_max();
    let mut pow = nalgebra::DMatrix::identity(f.nrows(), f.ncols());
    let mut before = false;
    for i in 1..=l_max {
        pow = &pow * &f;
        if i == l_max - 1 {
            before = pow.amax() > 0.0;
        }
    }
    let zero = pow.amax() == 0.0;
    let order = design.bank.fbar.nilpotency_order() == l_max;
    let passed = zero && (l_max == 1 || before) && order;
    SuiteResult {
        name: "nilpotency",
        passed,
        detail: format!("order {l_max} on dimension {}", f.nrows()),
    }
}

fn output_zeroing(setup: &EncSetup, seed: u64, mutation: Option<Mutation>) -> SuiteResult {
    let q = &setup.scheme.modulus;
    let mut rng = LweRng::insecure_test(seed ^ 0x5eed);
    let mut zeroed = 0;
    for t in &setup.transforms {
        let mut g = t.g.clone();
        if mutation == Some(Mutation::CorruptGbar) {
            let bumped = g.get(0, 0) + 1;
            g.set(0, 0, &bumped);
        }
        let horizon = 3 * t.l();
        let b_ini = ModMatrix::from_fn(t.l(), 1, q, |_, _| q.sample(&mut rng));
        let (tilde, mut state) = t.cancellation_init(&b_ini);
        let z_ini = t.corrected_initial(&b_ini, &tilde);
        let inputs: Vec<ModMatrix> = (0..horizon)
            .map(|_| {
                let b_v = ModMatrix::from_fn(t.input_dim(), 1, q, |_, _| q.sample(&mut rng));
                let tilde = t.cancellation_step(&mut state, &b_v);
                t.corrected_input(&b_v, &tilde)
            })
            .collect();
        if simulate_channel(&t.h, &t.f, &g, &z_ini, &inputs).iter().all(ModMatrix::is_zero) {
            zeroed += 1;
        }
    }
    SuiteResult {
        name: "output-zeroing",
        passed: zeroed == setup.transforms.len(),
        detail: format!("{zeroed} of {} channels zeroed", setup.transforms.len()),
    }
}

fn view_roundtrip(design: &Design, seed: u64) -> Result<SuiteResult> {
    let mut qobs = design.qobs.clone();
    qobs.params.lwe_dim = 8;
    let setup = Arc::new(EncSetup::new(qobs)?);
    let horizon = 20;
    let run = run_encrypted(
        design,
        &setup,
        &design.simulate(horizon),
        &EncOptions {
            seed: Some(seed),
            record_views: true,
            ..Default::default()
        },
    )?;
    let (v1, v2) = run.views.expect("views recorded");
    let h1 = horizon - setup.nu_max();
    let forward = f1(&v1, &setup, h1)? == v2.truncated(h1);
    let backward = f2(&v2, &setup)?.truncated(horizon, horizon) == v1;
    Ok(SuiteResult {
        name: "view-roundtrip",
        passed: forward && backward,
        detail: format!("{horizon} steps at N = 8"),
    })
}
