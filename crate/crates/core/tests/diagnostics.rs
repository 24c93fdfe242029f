use povmap_core::diagnostics::{diagnose, diagnose_all, ess, rhat};
use povmap_core::DiagnosticsError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn iid(seed: u64, chains: usize, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..chains).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

fn ar1(seed: u64, chains: usize, n: usize, phi: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation_sd = (1.0 - phi * phi).sqrt();
    (0..chains)
        .map(|_| {
            let mut x: f64 = StandardNormal.sample(&mut rng);
            (0..n)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x = phi * x + innovation_sd * e;
                    x
                })
                .collect()
        })
        .collect()
}

#[test]
fn constant_chains_are_degenerate() {
    let c = vec![vec![1.5; 100]; 4];
    assert_eq!(rhat(&c), Err(DiagnosticsError::Degenerate));
    assert_eq!(ess(&c), Err(DiagnosticsError::Degenerate));
    let d = diagnose(&c).unwrap();
    assert!(d.rhat.is_nan() && d.ess.is_nan());
    assert_eq!(d.mean, 1.5);
}

#[test]
fn iid_rhat_over_fifty_seeds() {
    for seed in 0..50 {
        let r = rhat(&iid(seed, 4, 5000)).unwrap();
        assert!((0.999..=1.01).contains(&r), "seed {seed}: {r}");
    }
}

#[test]
fn offset_chains_have_large_rhat() {
    let mut c = iid(1, 2, 1000);
    c[1].iter_mut().for_each(|v| *v += 5.0);
    assert!(rhat(&c).unwrap() > 1.5);
}

#[test]
fn iid_ess_is_close_to_draw_count() {
    for seed in 0..10 {
        let e = ess(&iid(100 + seed, 4, 5000)).unwrap();
        assert!((16_000.0..=24_000.0).contains(&e), "seed {seed}: {e}");
    }
}

#[test]
fn ar1_ess_matches_autocorrelation_time() {
    let phi = 0.9;
    let want = 40_000.0 * (1.0 - phi) / (1.0 + phi);
    for seed in 0..10 {
        let e = ess(&ar1(200 + seed, 4, 10_000, phi)).unwrap();
        assert!((e / want - 1.0).abs() < 0.25, "seed {seed}: {e} vs {want}");
    }
}

#[test]
fn antithetic_chains_are_capped() {
    let c: Vec<Vec<f64>> = (0..4).map(|j| (0..1000).map(|i| if (i + j) % 2 == 0 { 1.0 } else { -1.0 }).collect()).collect();
    assert!(ess(&c).unwrap() <= 2.0 * 4000.0);
}

#[test]
fn mcse_is_sd_over_root_ess() {
    let d = diagnose(&ar1(3, 4, 2000, 0.5)).unwrap();
    assert_eq!(d.mcse, d.sd / d.ess.sqrt());
}

#[test]
fn affine_invariance() {
    let c = ar1(4, 4, 2000, 0.7);
    let t: Vec<Vec<f64>> = c.iter().map(|ch| ch.iter().map(|v| -3.0 * v + 17.0).collect()).collect();
    let (r1, r2) = (rhat(&c).unwrap(), rhat(&t).unwrap());
    let (e1, e2) = (ess(&c).unwrap(), ess(&t).unwrap());
    assert!((r1 - r2).abs() < 1e-10);
    assert!((e1 / e2 - 1.0).abs() < 1e-8);
}

#[test]
fn input_validation() {
    assert_eq!(rhat(&[vec![0.0; 10]]), Err(DiagnosticsError::TooFewChains { needed: 2, got: 1 }));
    assert_eq!(rhat(&[vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]]), Err(DiagnosticsError::TooFewDraws(3)));
    assert_eq!(ess(&[vec![0.0; 10], vec![0.0; 9]]), Err(DiagnosticsError::RaggedChains));
    assert_eq!(diagnose(&[vec![f64::NAN; 10], vec![0.0; 10]]), Err(DiagnosticsError::NonFinite));
}

#[test]
fn diagnose_all_matches_per_parameter_calls() {
    let a = iid(5, 3, 500);
    let b = ar1(6, 3, 500, 0.6);
    let draws: Vec<Vec<Vec<f64>>> = (0..3).map(|c| (0..500).map(|i| vec![a[c][i], b[c][i]]).collect()).collect();
    let all = diagnose_all(&draws).unwrap();
    assert_eq!(all[0], diagnose(&a).unwrap());
    assert_eq!(all[1], diagnose(&b).unwrap());
}
