use evomarket::analysis::*;
use evomarket::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn too_short() {
    assert!(matches!(
        psd(&[1.0; 15], 1.0),
        Err(Error::TooShort {
            needed: 16,
            got: 15
        })
    ));
}

#[test]
fn cosine_peaks_at_its_frequency() {
    let dt = 1.0 / 24.0;
    let n = 480;
    // 3 cycles per day.
    let series: Vec<f64> = (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 * dt).cos())
        .collect();
    let p = psd(&series, dt).unwrap();
    let peak = p
        .power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!((p.frequencies[peak] - 3.0).abs() < 1e-9);
}

#[test]
fn parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dt = 1.0 / 24.0;
    let total: f64 = periodogram_full(&x, dt).iter().sum();
    let energy: f64 = x.iter().map(|v| v * v).sum::<f64>() * dt * dt;
    assert!((total - energy).abs() / energy < 1e-8);
}

#[test]
fn exact_power_law_is_recovered() {
    let frequencies: Vec<f64> = (1..=500).map(|k| k as f64 / 20.0).collect();
    let power = frequencies.iter().map(|f| f.powf(-1.8)).collect();
    let p = PsdFit {
        frequencies,
        power,
        gamma: None,
        fit_band: None,
    };
    let g = fit_psd_exponent(&p, &FitBand::default()).unwrap();
    assert!((g - 1.8).abs() < 1e-6);
}

#[test]
fn white_noise_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..6048).map(|_| StandardNormal.sample(&mut rng)).collect();
        total += psd_with_exponent(&x, 1.0 / 24.0, &FitBand::default())
            .unwrap()
            .gamma
            .unwrap();
    }
    assert!((total / 100.0).abs() < 0.15);
}

#[test]
fn brownian_path_has_exponent_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0.0;
    for _ in 0..100 {
        let mut level = 100.0;
        let x: Vec<f64> = (0..6048)
            .map(|_| {
                level += {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                };
                level
            })
            .collect();
        total += psd_with_exponent(&x, 1.0 / 24.0, &FitBand::default())
            .unwrap()
            .gamma
            .unwrap();
    }
    let mean = total / 100.0;
    assert!((mean - 2.0).abs() < 0.15, "{mean}");
}

#[test]
fn exponent_ignores_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|v| v * 37.5).collect();
    let band = FitBand::default();
    let gx = psd_with_exponent(&x, 1.0, &band).unwrap().gamma.unwrap();
    let gy = psd_with_exponent(&y, 1.0, &band).unwrap().gamma.unwrap();
    assert!((gx - gy).abs() < 1e-9);
}

#[test]
fn degenerate_band() {
    let p = psd(
        &[
            1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0,
        ],
        1.0,
    )
    .unwrap();
    assert!(fit_psd_exponent(&p, &FitBand::default()).is_err());
}
