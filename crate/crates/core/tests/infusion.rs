use kinfuse::infusion::{
    fuse_step, kl_divergence, klf_loss, knowledge_infusion, modulate, InfusionExit, InfusionParams, ModulationInput,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vector(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn closed_form_divergence() {
    let p = [2f64.ln(), 0.0];
    let want = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
    assert!((kl_divergence(&p, &[0.0, 0.0]).unwrap() - want).abs() < 1e-15);
    let l = klf_loss(&p, &p, &[1.0, 1.0]).unwrap();
    assert!((l.loss - want).abs() < 1e-15);
    assert!(!l.constraint_ok);
}

#[test]
fn hand_multiplied_fusion() {
    let mut p = InfusionParams::zeros(2);
    p.w_hk = kinfuse::Tensor::from_vec(&[2, 4], vec![1.0, -1.0, 0.5, 0.0, 0.0, 2.0, -1.0, 1.0]).unwrap();
    p.b_hk = vec![0.1, -0.2];
    let h = [0.3, 0.4];
    let k = [1.0, -0.5];
    // rows: 0.3 − 0.4 + 0.5 + 0.1 = 0.5 ; 0.8 − 1.0 − 0.5 − 0.2 = −0.9
    let got = fuse_step(&h, &k, &p).unwrap();
    assert!((got[0] - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-15);
    assert!((got[1] - 1.0 / (1.0 + 0.9f64.exp())).abs() < 1e-15);
}

#[test]
fn satisfied_constraint_skips_the_loop() {
    let k = vec![1.0, 0.0, -1.0];
    let h_t = k.clone();
    let h_prev = vec![0.0, 0.5, 0.2];
    let mut p = InfusionParams::zeros(3);
    p.epsilon = 10.0;
    let before = p.clone();
    let r = knowledge_infusion(&h_t, &h_prev, &k, &mut p).unwrap();
    assert_eq!(r.inner_iterations, 0);
    assert_eq!(r.exit, InfusionExit::Epsilon);
    assert_eq!(p, before);
    assert_eq!(r.m_t, modulate(&h_t, &fuse_step(&h_t, &k, &before).unwrap()).unwrap());
}

#[test]
fn single_iteration_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = vec![2.0, -2.0];
    let mut p = InfusionParams::random(2, &mut rng);
    p.max_inner_iters = 1;
    let r = knowledge_infusion(&[1.9, -1.9], &[-3.0, 3.0], &k, &mut p).unwrap();
    assert_eq!(r.inner_iterations, 1);
    assert_eq!(r.trace.len(), 1);
}

#[test]
fn fused_modulation_flag() {
    let mut p = InfusionParams::zeros(2);
    p.modulation = ModulationInput::Fused;
    p.epsilon = 10.0;
    let r = knowledge_infusion(&[3.0, -1.0], &[0.0, 0.0], &[1.0, 0.0], &mut p).unwrap();
    assert_eq!(r.m_t, vec![0.25, 0.25]);
}

/// The loop contract on random instances: termination, a monotone trace
/// over accepted steps, and a recorded exit reason that agrees with the
/// final state.
#[test]
fn loop_contract_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut entered = 0;
    for trial in 0..200 {
        let d = rng.random_range(1..=8);
        let scale = rng.random_range(0.1..4.0);
        let h_t = vector(&mut rng, d, scale);
        let h_prev = vector(&mut rng, d, scale);
        let mut k = vector(&mut rng, d, scale);
        k[0] += 0.1;
        let mut p = InfusionParams::random(d, &mut rng);
        p.max_inner_iters = rng.random_range(1..60);
        let r = knowledge_infusion(&h_t, &h_prev, &k, &mut p).unwrap();
        assert!(r.inner_iterations <= p.max_inner_iters);
        assert_eq!(r.trace.len(), r.inner_iterations);
        assert!(r.m_t.iter().all(|v| v.is_finite()));
        let mut last = r.initial_fused_divergence;
        for e in &r.trace {
            if e.step > 0.0 {
                assert!(e.d_cur <= last + 1e-9, "trial {trial}: {} after {last}", e.d_cur);
                last = e.d_cur;
            }
        }
        let gap_closed = r.trace.last().is_none_or(|e| e.d_prev - e.d_cur <= p.epsilon);
        match r.exit {
            InfusionExit::Epsilon => assert!(gap_closed, "trial {trial}"),
            InfusionExit::IterationBound => assert_eq!(r.inner_iterations, p.max_inner_iters),
        }
        entered += usize::from(r.inner_iterations > 0);
    }
    assert!(entered >= 50, "loop entered only {entered} times");
}

proptest! {
    #[test]
    fn gibbs_inequality(p in proptest::collection::vec(-30.0f64..30.0, 1..10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = vector(&mut rng, p.len(), 30.0);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let shifted: Vec<f64> = p.iter().map(|v| v + 7.25).collect();
        prop_assert!((kl_divergence(&shifted, &q).unwrap() - kl_divergence(&p, &q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn modulation_is_commutative_and_distributive(
        a in proptest::collection::vec(-5.0f64..5.0, 4),
        b in proptest::collection::vec(-5.0f64..5.0, 4),
        c in proptest::collection::vec(-5.0f64..5.0, 4),
    ) {
        prop_assert_eq!(modulate(&a, &b).unwrap(), modulate(&b, &a).unwrap());
        let bc: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x + y).collect();
        let lhs = modulate(&a, &bc).unwrap();
        let rhs: Vec<f64> = modulate(&a, &b).unwrap().iter().zip(modulate(&a, &c).unwrap()).map(|(x, y)| x + y).collect();
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() < 1e-12);
        }
    }
}
