use evomarket::analysis::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

fn normals(n: usize, shift: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| StandardNormal.sample(&mut rng))
        .map(|z: f64| z + shift)
        .collect()
}

#[test]
fn identical_samples_have_zero_divergence() {
    let x = normals(100_000, 0.0, 1);
    assert!(empirical_kl(&x, &x, &KlOptions::default()) < 1e-3);
}

#[test]
fn shifted_gaussians_match_closed_form() {
    let p = normals(100_000, 0.0, 2);
    let q = normals(100_000, 1.0, 3);
    let kl = empirical_kl(&p, &q, &KlOptions::default());
    assert!((kl - 0.5).abs() < 0.1, "{kl}");
}

#[test]
fn divergence_is_nonnegative() {
    for seed in 0..20 {
        let p = normals(50, 0.0, seed);
        let q = normals(70, 0.1, seed + 100);
        assert!(empirical_kl(&p, &q, &KlOptions::default()) >= 0.0);
    }
}

#[test]
fn model_divergence_is_small_for_the_true_model() {
    let p = normals(100_000, 0.0, 4);
    let truth = Normal::new(0.0, 1.0).unwrap();
    let wrong = Normal::new(1.0, 1.0).unwrap();
    let opts = KlOptions::default();
    let good = kl_to_model(&p, |x| truth.cdf(x), &opts);
    let bad = kl_to_model(&p, |x| wrong.cdf(x), &opts);
    assert!(good < 0.01, "{good}");
    assert!((bad - 0.5).abs() < 0.1, "{bad}");
}

#[test]
fn permutation_invariance() {
    let p = normals(1000, 0.0, 5);
    let mut r = p.clone();
    r.reverse();
    let q = normals(1000, 0.3, 6);
    assert_eq!(
        empirical_kl(&p, &q, &KlOptions::default()),
        empirical_kl(&r, &q, &KlOptions::default())
    );
}
