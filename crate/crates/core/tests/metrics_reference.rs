use porogan_core::metrics::{
    diff_field, mfmc_criterion, pearson, pod_spectrum, rmse, EvalPair, TimingReport,
};
use porogan_core::{GridSpec, ScalarField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng) -> ScalarField {
    let grid = GridSpec::unit_square(8).unwrap();
    let v = (0..64).map(|_| rng.random_range(-100.0..100.0)).collect();
    ScalarField::new(grid, v, "Pa").unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Straightforward double loops over rows and columns.
mod naive {
    use super::*;

    pub fn rmse(pairs: &[(ScalarField, ScalarField)]) -> f64 {
        let (mut s, mut n) = (0.0, 0.0);
        for (t, p) in pairs {
            for j in 0..t.grid.ny {
                for i in 0..t.grid.nx {
                    let d = t.at(i, j) - p.at(i, j);
                    s += d * d;
                    n += 1.0;
                }
            }
        }
        (s / n).sqrt()
    }

    pub fn pearson(pairs: &[(ScalarField, ScalarField)]) -> f64 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (t, p) in pairs {
            for j in 0..t.grid.ny {
                for i in 0..t.grid.nx {
                    xs.push(t.at(i, j));
                    ys.push(p.at(i, j));
                }
            }
        }
        let n = xs.len() as f64;
        let mx: f64 = xs.iter().sum::<f64>() / n;
        let my: f64 = ys.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for k in 0..xs.len() {
            cov += (xs[k] - mx) * (ys[k] - my);
            vx += (xs[k] - mx).powi(2);
            vy += (ys[k] - my).powi(2);
        }
        cov / (vx * vy).sqrt()
    }
}

#[test]
fn agrees_with_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let raw: Vec<(ScalarField, ScalarField)> =
            (0..3).map(|_| (random_field(&mut rng), random_field(&mut rng))).collect();
        let pairs: Vec<EvalPair> = raw
            .iter()
            .map(|(t, p)| EvalPair::single(t.clone(), p.clone()).unwrap())
            .collect();
        assert!(close(rmse(&pairs).unwrap().pooled[0], naive::rmse(&raw)));
        assert!(close(pearson(&pairs).unwrap()[0], naive::pearson(&raw)));
        for (t, p) in &raw {
            let d = diff_field(t, p).unwrap();
            for j in 0..8 {
                for i in 0..8 {
                    assert_eq!(d.at(i, j), (t.at(i, j) - p.at(i, j)).abs());
                }
            }
            assert_eq!(d, diff_field(p, t).unwrap());
        }
    }
}

#[test]
fn identical_pairs_have_zero_rmse_and_zero_diff() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random_field(&mut rng);
    let r = rmse(&[EvalPair::single(t.clone(), t.clone()).unwrap()]).unwrap();
    assert_eq!(r.pooled[0], 0.0);
    assert!(diff_field(&t, &t).unwrap().values.iter().all(|v| *v == 0.0));
    assert!(rmse(&[]).is_err());
}

#[test]
fn per_sample_bands_bracket_the_pooled_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<EvalPair> = (0..6)
        .map(|_| EvalPair::single(random_field(&mut rng), random_field(&mut rng)).unwrap())
        .collect();
    let r = rmse(&pairs).unwrap();
    assert!(r.min_per_channel()[0] <= r.pooled[0] && r.pooled[0] <= r.max_per_channel()[0]);
}

#[test]
fn pod_of_random_rank_k_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (m, d) = (30, 200);
    for k in [1, 3, 7, 12] {
        let basis: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let snaps: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let c: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                (0..d).map(|x| (0..k).map(|b| c[b] * basis[b][x]).sum()).collect()
            })
            .collect();
        let s = pod_spectrum(&snaps).unwrap();
        assert_eq!(s[0], 1.0);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let nonzero = s.iter().filter(|&&v| v > 1e-10).count();
        assert_eq!(nonzero, k, "{s:?}");
    }
}

proptest! {
    #[test]
    fn rmse_is_homogeneous(c in -50.0f64..50.0, seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, p) = (random_field(&mut rng), random_field(&mut rng));
        let base = rmse(&[EvalPair::single(t.clone(), p.clone()).unwrap()]).unwrap().pooled[0];
        let scale = |f: &ScalarField| f.map("Pa", |v| c * v).unwrap();
        let scaled = rmse(&[EvalPair::single(scale(&t), scale(&p)).unwrap()]).unwrap().pooled[0];
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * base.max(1.0) * c.abs().max(1.0));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn pearson_and_mfmc_invariant_under_positive_affine_maps(
        a in 0.01f64..100.0, b in -1e3f64..1e3, seed in 0u64..200, speedup in 1.0f64..1e4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_field(&mut rng);
        let noise = random_field(&mut rng);
        let p = ScalarField::new(
            t.grid,
            t.values.iter().zip(&noise.values).map(|(a, n)| a + 0.3 * n).collect(),
            "Pa",
        )
        .unwrap();
        let rho = pearson(&[EvalPair::single(t.clone(), p.clone()).unwrap()]).unwrap()[0];
        let q = p.map("Pa", |v| a * v + b).unwrap();
        let rho2 = pearson(&[EvalPair::single(t, q).unwrap()]).unwrap()[0];
        prop_assert!((rho - rho2).abs() < 1e-12);
        let timing = TimingReport::new(speedup, 1.0, 5).unwrap();
        prop_assert_eq!(
            mfmc_criterion(rho, &timing).unwrap().holds,
            mfmc_criterion(rho2, &timing).unwrap().holds
        );
    }
}
