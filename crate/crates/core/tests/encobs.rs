use std::sync::{Arc, OnceLock};

use cipherobs_core::encobs::{EncObserver, EncSetup, EncryptorSession};
use cipherobs_core::lwe::{decrypt, LweRng};
use cipherobs_core::modring::ModMatrix;
use cipherobs_core::pipeline::{build_design, Design, SystemParams};
use cipherobs_core::plantsim::three_inertia;
use cipherobs_core::quantobs::quantize_input;
use cipherobs_core::Error;

fn design() -> &'static (Design, Arc<EncSetup>) {
    static D: OnceLock<(Design, Arc<EncSetup>)> = OnceLock::new();
    D.get_or_init(|| {
        let (model, attacks) = three_inertia();
        let d = build_design(model, attacks, &SystemParams::benchmark(8)).unwrap();
        let s = d.enc_setup().unwrap();
        (d, s)
    })
}

/// Mask corrections for a relative-degree-one channel, tracked directly in
/// observer coordinates: each correction is the unique value that keeps the
/// channel output of the mask stream at zero.
struct MaskOracle {
    h: ModMatrix,
    f: ModMatrix,
    g: ModMatrix,
    z: ModMatrix,
}

impl MaskOracle {
    fn init(h: &ModMatrix, f: &ModMatrix, g: &ModMatrix, v2: &ModMatrix, b_ini: &ModMatrix) -> (Self, ModMatrix) {
        let tilde = h.mul(b_ini).unwrap();
        let z = b_ini.sub(&v2.mul(&tilde).unwrap()).unwrap();
        (
            Self {
                h: h.clone(),
                f: f.clone(),
                g: g.clone(),
                z,
            },
            tilde,
        )
    }

    fn step(&mut self, sigma_dag: &ModMatrix, b_v: &ModMatrix) -> ModMatrix {
        let fz = self.f.mul(&self.z).unwrap();
        let tilde = self.h.mul(&fz).unwrap().add(&self.h.mul(&self.g.mul(b_v).unwrap()).unwrap()).unwrap();
        let corrected = b_v.sub(&sigma_dag.mul(&tilde).unwrap()).unwrap();
        self.z = fz.add(&self.g.mul(&corrected).unwrap()).unwrap();
        assert!(self.h.mul(&self.z).unwrap().is_zero());
        tilde
    }
}

#[test]
fn last_column_matches_independent_mask_oracle() {
    let (d, setup) = design();
    let mut session = EncryptorSession::new(setup.clone(), LweRng::insecure_test(41));
    let traj = d.simulate(12);
    let zbar = setup.qobs.initial_state(&d.zhat_ini).zbar;
    let init = session.enc_initial(&zbar).unwrap();
    let b_ini = session.last_witness().unwrap().b.clone();

    let mut oracles = Vec::new();
    for (t, ct) in setup.transforms.iter().zip(&init.modified) {
        assert_eq!(t.nu, 1);
        assert_eq!(t.h.mul(&t.v2).unwrap(), ModMatrix::identity(1, &setup.scheme.modulus));
        let (o, tilde) = MaskOracle::init(&t.h, &t.f, &t.g, &t.v2, &b_ini);
        assert_eq!(ct.last_column().unwrap(), t.v2.mul(&tilde).unwrap());
        oracles.push(o);
    }
    for s in &traj {
        let v = quantize_input(&s.u, &s.y, &setup.qobs.params);
        let batch = session.enc_input(&v).unwrap();
        let b_v = session.last_witness().unwrap().b.clone();
        for ((t, ct), o) in setup.transforms.iter().zip(&batch.modified).zip(&mut oracles) {
            let tilde = o.step(&t.sigma_dag, &b_v);
            assert_eq!(ct.last_column().unwrap(), t.sigma_dag.mul(&tilde).unwrap(), "channel {}", t.channel);
        }
    }
}

#[test]
fn modified_ciphertexts_decrypt_like_the_standard_one() {
    let (d, setup) = design();
    let mut session = EncryptorSession::new(setup.clone(), LweRng::insecure_test(42));
    let zbar = setup.qobs.initial_state(&d.zhat_ini).zbar;
    let init = session.enc_initial(&zbar).unwrap();
    let sk = session.secret_key();
    let plain = decrypt(&init.standard, sk).unwrap();
    assert!(init.modified.iter().all(|c| decrypt(c, sk).unwrap() == plain));
    for s in d.simulate(5) {
        let batch = session.enc_input(&quantize_input(&s.u, &s.y, &setup.qobs.params)).unwrap();
        let sk = session.secret_key();
        let plain = decrypt(&batch.standard, sk).unwrap();
        assert_eq!(batch.modified.len(), setup.channels());
        assert!(batch.modified.iter().all(|c| decrypt(c, sk).unwrap() == plain));
        assert!(batch.modified.iter().all(|c| c.to_standard() == batch.standard));
    }
}

#[test]
fn channel_states_decrypt_to_the_same_value() {
    let (d, setup) = design();
    let mut session = EncryptorSession::new(setup.clone(), LweRng::insecure_test(43));
    let observer = EncObserver::new(setup.clone());
    let zbar = setup.qobs.initial_state(&d.zhat_ini).zbar;
    let mut state = observer.init(&session.enc_initial(&zbar).unwrap().modified).unwrap();
    for s in d.simulate(8) {
        let batch = session.enc_input(&quantize_input(&s.u, &s.y, &setup.qobs.params)).unwrap();
        state = observer.step(&state, &batch.modified).unwrap();
        let sk = session.secret_key();
        let first = decrypt(&state.z[0], sk).unwrap();
        assert!(state.z.iter().all(|z| decrypt(z, sk).unwrap() == first));
    }
}

#[test]
fn session_enforces_its_order() {
    let (_, setup) = design();
    let mut session = EncryptorSession::new(setup.clone(), LweRng::insecure_test(44));
    let v = ModMatrix::zeros(setup.qobs.gbar.cols(), 1, &setup.scheme.modulus);
    assert!(matches!(session.enc_input(&v), Err(Error::SessionNotInitialized)));
    let z = ModMatrix::zeros(setup.l(), 1, &setup.scheme.modulus);
    session.enc_initial(&z).unwrap();
    assert!(matches!(session.enc_initial(&z), Err(Error::SessionNotFresh)));

    let cp = session.checkpoint();
    let a = session.enc_input(&v).unwrap();
    session.restore(cp);
    let b = session.enc_input(&v).unwrap();
    assert_eq!(a.modified, b.modified);
    assert_eq!(session.step(), Some(1));
}
