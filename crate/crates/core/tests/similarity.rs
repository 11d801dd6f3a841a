use duplex_coupling::rng::substream;
use duplex_coupling::similarity::{lagged_cka, linear_cka, symmetric_lags, LagOptions};
use duplex_coupling::ActivationSeries;
use ndarray::{array, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

/// Exact linear CKA of integer matrices as the rational `num / den` of its
/// square. Columns are centered after scaling by `n` so everything stays
/// integral.
fn exact_cka_squared(x: &[Vec<i64>], y: &[Vec<i64>]) -> (i128, i128) {
    let n = x.len() as i128;
    let center = |m: &[Vec<i64>]| -> Vec<Vec<i128>> {
        let d = m[0].len();
        let sums: Vec<i128> = (0..d).map(|k| m.iter().map(|r| i128::from(r[k])).sum()).collect();
        m.iter()
            .map(|r| (0..d).map(|k| n * i128::from(r[k]) - sums[k]).collect())
            .collect()
    };
    let (xc, yc) = (center(x), center(y));
    let cross = |a: &[Vec<i128>], b: &[Vec<i128>]| -> i128 {
        let (da, db) = (a[0].len(), b[0].len());
        let mut s = 0i128;
        for p in 0..da {
            for q in 0..db {
                let v: i128 = a.iter().zip(b).map(|(ra, rb)| ra[p] * rb[q]).sum();
                s += v * v;
            }
        }
        s
    };
    let num = cross(&yc, &xc);
    (num * num, cross(&xc, &xc) * cross(&yc, &yc))
}

fn to_array(m: &[Vec<i64>]) -> Array2<f64> {
    let d = m[0].len();
    Array2::from_shape_fn((m.len(), d), |(i, k)| m[i][k] as f64)
}

pub fn golden_value_against_exact_rational() {
    let x = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
    let y = vec![vec![1, 1], vec![0, 2], vec![2, 0]];
    let (num, den) = exact_cka_squared(&x, &y);
    // CKA² = 9/40 exactly.
    assert_eq!(num * 40, den * 9);
    let got = linear_cka(to_array(&x).view(), to_array(&y).view()).unwrap();
    assert!((got - 0.474_341_649_025_256_9).abs() < 1e-12, "{got}");
}

pub fn random_integer_matrices_match_exact_oracle() {
    let mut rng = substream(3, "cka-exact");
    for _ in 0..200 {
        let n = rng.random_range(3..10);
        let (dx, dy) = (rng.random_range(1..5), rng.random_range(1..5));
        let gen = |d: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<i64>> {
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-9..=9)).collect()).collect()
        };
        let x = gen(dx, &mut rng);
        let y = gen(dy, &mut rng);
        let (num, den) = exact_cka_squared(&x, &y);
        if den == 0 {
            continue;
        }
        let oracle = (num as f64 / den as f64).sqrt();
        let got = linear_cka(to_array(&x).view(), to_array(&y).view()).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }
}

/// Product of Householder reflections from Gaussian vectors.
fn orthogonal(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = substream(seed, "householder");
    let mut q = Array2::<f64>::eye(d);
    for _ in 0..d {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nv: f64 = v.iter().map(|x| x * x).sum();
        let mut h = Array2::<f64>::eye(d);
        for i in 0..d {
            for j in 0..d {
                h[[i, j]] -= 2.0 * v[i] * v[j] / nv;
            }
        }
        q = q.dot(&h);
    }
    q
}

fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = substream(seed, "gaussian");
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

pub fn invariances() {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let draws = (8usize..40, 2usize..8, 1usize..8, any::<u64>(), -3.0f64..3.0);
    runner
        .run(&draws, |(n, dx, dy, seed, log_c)| {
            let x = gaussian(n, dx, seed);
            let y = gaussian(n, dy, seed ^ 0x9e37_79b9);
            let q = orthogonal(dx, seed);
            let c = 10f64.powf(log_c);
            let base = linear_cka(x.view(), y.view()).unwrap();
            prop_assert!((linear_cka(x.view(), x.view()).unwrap() - 1.0).abs() < 1e-9);
            prop_assert!((linear_cka(x.dot(&q).view(), y.view()).unwrap() - base).abs() < 1e-9);
            prop_assert!((linear_cka((&x * c).view(), y.view()).unwrap() - base).abs() < 1e-9);
            prop_assert!((linear_cka(y.view(), x.view()).unwrap() - base).abs() < 1e-12);
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&base));
            Ok(())
        })
        .unwrap();
}

fn series(m: Array2<f64>) -> ActivationSeries {
    ActivationSeries::new(m).unwrap()
}

/// `B[t] = A[t - k]`, with fresh noise before `k`.
fn delayed(a: &Array2<f64>, k: usize, seed: u64) -> Array2<f64> {
    let mut b = gaussian(a.nrows(), a.ncols(), seed);
    for t in k..a.nrows() {
        b.row_mut(t).assign(&a.row(t - k));
    }
    b
}

pub fn shift_recovery_positive_lag_means_a_leads() {
    let a = gaussian(400, 8, 1);
    let lags = symmetric_lags(30);
    for k in [1usize, 5, 20] {
        let b = delayed(&a, k, 2);
        let curve = lagged_cka(&series(a.clone()), &series(b), &lags, LagOptions::default()).unwrap();
        let (lag, v) = curve.peak().unwrap();
        assert_eq!(lag, k as i64);
        assert!(v >= 1.0 - 1e-9, "{v}");
    }
}

pub fn swapping_participants_mirrors_lags() {
    let a = gaussian(200, 5, 3);
    let b = gaussian(200, 4, 4) + &(&a.column(0).insert_axis(ndarray::Axis(1)) * 0.5);
    let lags = symmetric_lags(25);
    let ab = lagged_cka(&series(a.clone()), &series(b.clone()), &lags, LagOptions::default()).unwrap();
    let ba = lagged_cka(&series(b), &series(a), &lags, LagOptions::default()).unwrap();
    for (i, &lag) in ab.lags_frames.iter().enumerate() {
        let (x, y) = (ab.values[i].unwrap(), ba.value_at(-lag).unwrap());
        assert!((x - y).abs() < 1e-12, "lag {lag}: {x} vs {y}");
    }
}

pub fn overlap_rule_and_manual_slices() {
    let a = gaussian(60, 3, 5);
    let b = gaussian(60, 3, 6);
    let opts = LagOptions {
        min_overlap: 50,
        ..LagOptions::default()
    };
    let curve = lagged_cka(&series(a.clone()), &series(b.clone()), &symmetric_lags(15), opts).unwrap();
    for (i, &lag) in curve.lags_frames.iter().enumerate() {
        let overlap = 60 - lag.unsigned_abs() as usize;
        assert_eq!(curve.n_overlap[i], overlap);
        if overlap < 50 {
            assert_eq!(curve.values[i], None);
            continue;
        }
        let l = lag.unsigned_abs() as usize;
        let (sa, sb) = if lag >= 0 {
            (a.slice(ndarray::s![0..60 - l, ..]), b.slice(ndarray::s![l..60, ..]))
        } else {
            (a.slice(ndarray::s![l..60, ..]), b.slice(ndarray::s![0..60 - l, ..]))
        };
        assert_eq!(curve.values[i], Some(linear_cka(sa, sb).unwrap()));
    }
}

pub fn independent_noise_has_low_similarity() {
    let a = gaussian(1000, 8, 7);
    let b = gaussian(1000, 8, 8);
    let curve = lagged_cka(&series(a), &series(b), &symmetric_lags(10), LagOptions::default()).unwrap();
    for v in curve.values.iter().flatten() {
        // E[CKA] for independent Gaussians is about d / n here.
        assert!(*v < 0.05, "{v}");
    }
}

pub fn constant_columns_are_degenerate() {
    let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
    let y = array![[0.0], [1.0], [3.0]];
    assert!(linear_cka(x.view(), y.view()).is_err());
}

mod run {
    #[test]
    fn golden_value_against_exact_rational() {
        super::golden_value_against_exact_rational()
    }

    #[test]
    fn random_integer_matrices_match_exact_oracle() {
        super::random_integer_matrices_match_exact_oracle()
    }

    #[test]
    fn invariances() {
        super::invariances()
    }

    #[test]
    fn shift_recovery_positive_lag_means_a_leads() {
        super::shift_recovery_positive_lag_means_a_leads()
    }

    #[test]
    fn swapping_participants_mirrors_lags() {
        super::swapping_participants_mirrors_lags()
    }

    #[test]
    fn overlap_rule_and_manual_slices() {
        super::overlap_rule_and_manual_slices()
    }

    #[test]
    fn independent_noise_has_low_similarity() {
        super::independent_noise_has_low_similarity()
    }

    #[test]
    fn constant_columns_are_degenerate() {
        super::constant_columns_are_degenerate()
    }
}
