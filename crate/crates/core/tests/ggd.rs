use ggmm_epll::ggd::{ggd_log_pdf, ggd_sample, mallat_f, mallat_f_inverse, GgdParams};
use ggmm_epll::quadrature::{integrate, Tolerance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(n: usize, seed: u64) -> Vec<GgdParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
            let nu = rng.random_range(0.3..2.0);
            GgdParams::new(lambda, nu).unwrap()
        })
        .collect()
}

// ∫ t^k p(t) dt over the region where the density is above e^{-750}.
fn moment(p: &GgdParams, k: i32) -> f64 {
    let edge = p.lambda_nu() * 750f64.powf(1.0 / p.nu());
    let tol = Tolerance {
        relative: 1e-12,
        ..Tolerance::default()
    };
    // Geometric breakpoints so heavy tails at small ν are resolved.
    let mut pts = vec![0.0];
    let mut b = p.lambda_nu() / 16.0;
    while b < edge {
        pts.push(b);
        b *= 2.0;
    }
    pts.push(edge);
    let half = integrate(|t| t.powi(k) * ggd_log_pdf(t, p).exp(), &pts, tol)
        .unwrap()
        .value;
    2.0 * half
}

#[test]
fn densities_integrate_to_one_with_unit_variance() {
    for p in random_params(20, 1) {
        let mass = moment(&p, 0);
        assert!((mass - 1.0).abs() < 1e-8, "{p:?}: mass {mass}");
        let var = moment(&p, 2);
        let l2 = p.lambda() * p.lambda();
        assert!((var - l2).abs() < 1e-6 * l2, "{p:?}: variance {var}");
    }
}

#[test]
fn density_is_even() {
    for p in random_params(10, 2) {
        for x in [0.1, 1.0, 7.5, 300.0] {
            assert_eq!(ggd_log_pdf(x, &p), ggd_log_pdf(-x, &p));
        }
    }
}

#[test]
fn large_sample_moments() {
    let s = ggd_sample(&GgdParams::new(1.0, 2.0).unwrap(), 1_000_000, 5);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 4e-3, "mean {mean}");
    assert!((sd - 1.0).abs() < 5e-3, "sd {sd}");

    let s = ggd_sample(&GgdParams::new(2.0, 0.5).unwrap(), 1_000_000, 6);
    let sd = (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt();
    assert!((sd - 2.0).abs() < 0.04, "sd {sd}");
}

#[test]
fn samples_follow_the_quadrature_cdf() {
    for (lambda, nu, seed) in [(1.0, 2.0, 1), (3.0, 0.4, 2), (0.5, 1.0, 3), (2.0, 1.4, 4)] {
        let p = GgdParams::new(lambda, nu).unwrap();
        let mut s = ggd_sample(&p, 100_000, seed);
        s.sort_by(f64::total_cmp);
        // CDF at each sorted sample by accumulating quadrature between neighbours.
        let lo = -p.lambda_nu() * 750f64.powf(1.0 / nu);
        let tol = Tolerance {
            relative: 1e-10,
            absolute: 1e-14,
            ..Tolerance::default()
        };
        let mut cdf = integrate(|t| ggd_log_pdf(t, &p).exp(), &[lo, s[0].min(0.0), s[0]], tol).unwrap().value;
        let n = s.len() as f64;
        let mut ks: f64 = 0.0;
        for i in 0..s.len() {
            if i > 0 {
                let (a, b) = (s[i - 1], s[i]);
                let pts: Vec<f64> = if a < 0.0 && b > 0.0 { vec![a, 0.0, b] } else { vec![a, b] };
                cdf += integrate(|t| ggd_log_pdf(t, &p).exp(), &pts, tol).unwrap().value;
            }
            ks = ks.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
        }
        assert!(ks < 0.01, "λ={lambda} ν={nu}: KS {ks}");
    }
}

#[test]
fn mallat_ratio_is_increasing_and_invertible() {
    let xs: Vec<f64> = (0..=900).map(|i| 0.25 + 2.25 * i as f64 / 900.0).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| mallat_f(x).unwrap()).collect();
    assert!(fs.windows(2).all(|w| w[1] > w[0]));
    for &x in xs.iter().step_by(7) {
        let y = mallat_f(x).unwrap();
        assert!((mallat_f(mallat_f_inverse(y)).unwrap() - y).abs() < 1e-6, "x = {x}");
    }
    assert!(mallat_f(0.0).is_err());
    assert!(mallat_f(-1.0).is_err());
    assert_eq!(mallat_f_inverse(0.99), 2.5);
    assert_eq!(mallat_f_inverse(0.0), 0.25);
}
