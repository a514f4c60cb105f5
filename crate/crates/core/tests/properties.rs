use std::path::PathBuf;

use proptest::prelude::*;

use dabridge::approx::{
    analytic_forward_oracle, analytic_reverse_oracle, Activation, GaussianPosterior, Mlp, MlpConfig,
    TimeEmbedding,
};
use dabridge::bridge::{sample_marginal, BridgeSchedule, ForwardSdePath};
use dabridge::datasets::{gen_blur_pairs, gen_gaussian_pairs};
use dabridge::eval::{psnr, ssim, trial_std};
use dabridge::sampling::{
    run_sampler, step_count_sweep, SampleOptions, SweepInputs, SweepMode,
};
use dabridge::train::{objective_loss, train, LossNorm, Objective, TrainConfig};
use dabridge::{Approximator, PairedSample, SamplerKind, Step, Stream};

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracles_invert_the_marginal(
        x0 in vec_of(4),
        y in vec_of(4),
        noise in vec_of(4),
        (k, t) in (3usize..200).prop_flat_map(|t| (1..t, Just(t))),
    ) {
        let s = BridgeSchedule::new(t).unwrap();
        let tf = k as f64 / t as f64;
        let x_t = sample_marginal(&x0, &y, tf, &noise, &s).unwrap();
        let pair = PairedSample::new(x0.clone(), y.clone()).unwrap();
        let f = analytic_forward_oracle(&pair);
        let r = analytic_reverse_oracle(&pair).unwrap();
        let d = f.evaluate(&x_t, Step::new(k, t), None).unwrap();
        let z = r.evaluate(&x_t, Step::new(k, t), None).unwrap();
        for i in 0..4 {
            prop_assert!((x_t[i] - d[i] - x0[i]).abs() < 1e-12);
            prop_assert!((z[i] - noise[i]).abs() < 1e-8 * (1.0 + noise[i].abs()));
        }
    }

    #[test]
    fn dual_samplers_are_exact_with_oracles(
        x0 in vec_of(3),
        y in vec_of(3),
        t in 3usize..60,
        seed in any::<u64>(),
    ) {
        let pair = PairedSample::new(x0.clone(), y.clone()).unwrap();
        let f = analytic_forward_oracle(&pair);
        let r = analytic_reverse_oracle(&pair).unwrap();
        let s = BridgeSchedule::new(t).unwrap();
        for kind in [SamplerKind::Dual, SamplerKind::DualCentred] {
            let run = run_sampler(kind, &y, &f, &r, &s, seed, &SampleOptions::default()).unwrap();
            for (a, b) in run.x0_hat.iter().zip(&x0) {
                prop_assert!((a - b).abs() < 1e-6, "{kind} T={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn trial_std_ignores_trial_order(
        rows in prop::collection::vec(vec_of(5), 2..8),
        rot in 0usize..8,
    ) {
        let a = trial_std(&rows).unwrap();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let b = trial_std(&shuffled).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        let same = vec![rows[0].clone(); rows.len()];
        prop_assert_eq!(trial_std(&same).unwrap(), 0.0);
    }

    #[test]
    fn ssim_is_bounded_and_one_only_on_identity(
        a in prop::collection::vec(0.0f64..1.0, 64),
        b in prop::collection::vec(0.0f64..1.0, 64),
    ) {
        let v = ssim(&a, &b, 8, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(ssim(&a, &a, 8, 1.0).unwrap(), 1.0);
        let mut c = a.clone();
        c[27] += 0.05;
        prop_assert!(ssim(&a, &c, 8, 1.0).unwrap() < 1.0);
        let back = ssim(&b, &a, 8, 1.0).unwrap();
        prop_assert!((v - back).abs() < 1e-12);
    }

    #[test]
    fn psnr_falls_as_error_grows(
        a in prop::collection::vec(-1.0f64..1.0, 16),
        dir in prop::collection::vec(0.1f64..1.0, 16),
        small in 0.001f64..0.1,
        factor in 1.01f64..10.0,
    ) {
        let at = |scale: f64| -> Vec<f64> { a.iter().zip(&dir).map(|(x, d)| x + scale * d).collect() };
        let near = psnr(&a, &at(small), 1.0).unwrap();
        let far = psnr(&a, &at(small * factor), 1.0).unwrap();
        prop_assert!(near > far);
    }
}

#[test]
fn full_early_stop_equals_full_grid_run() {
    let ds = gen_gaussian_pairs(4, 3, 0.5, 1.0, 2.0, 7).unwrap();
    let ys: Vec<Vec<f64>> = ds.samples.iter().map(|p| p.y.clone()).collect();
    let gt: Vec<Vec<f64>> = ds.samples.iter().map(|p| p.x0.clone()).collect();
    let eps = GaussianPosterior::new(vec![0.5; 3], 1.0, 1.0, vec![2.0; 3]).unwrap();
    let z = analytic_reverse_oracle(&ds.samples[0]).unwrap();
    let inputs = SweepInputs {
        ys: &ys,
        ground_truth: &gt,
        side: None,
        peak: 1.0,
    };
    for kind in [SamplerKind::Dual, SamplerKind::Sde, SamplerKind::PfOde] {
        let a = step_count_sweep(kind, &inputs, &eps, &z, 40, &[40], 3, 11, SweepMode::EarlyStop).unwrap();
        let b = step_count_sweep(kind, &inputs, &eps, &z, 40, &[40], 3, 11, SweepMode::Rediscretize).unwrap();
        assert_eq!(a.to_csv(), b.to_csv(), "{kind}");
    }
}

/// Euler paths driven by block sums of one fine Brownian path, against the
/// closed-form solution `x_t = (1-t) x0 + t y + (1-t) ∫ dW / (1-s)`.
#[test]
fn forward_sde_error_shrinks_with_more_steps() {
    const FINE: usize = 20_000;
    const GROUPS: u64 = 10;
    const PATHS: usize = 100;
    let (x0, y) = (0.3, -0.7);
    let dt = 1.0 / FINE as f64;
    let mut mean_err = [0.0; 2];
    for g in 0..GROUPS {
        let mut stream = Stream::named(g, "test/coupled");
        for _ in 0..PATHS {
            let xi: Vec<f64> = (0..FINE / 2).map(|_| stream.normal()).collect();
            let integral: f64 = xi
                .iter()
                .enumerate()
                .map(|(i, z)| z * dt.sqrt() / (1.0 - (i as f64 + 0.5) * dt))
                .sum();
            let exact = 0.5 * x0 + 0.5 * y + 0.5 * integral;
            for (slot, t) in [200usize, 2000].into_iter().enumerate() {
                let m = FINE / t;
                let s = BridgeSchedule::new(t).unwrap();
                let mut block = xi.chunks(m);
                let noise = |out: &mut [f64]| {
                    let c = block.next().unwrap_or(&[]);
                    out[0] = c.iter().sum::<f64>() / (m as f64).sqrt();
                };
                let (start, end) = ([x0], [y]);
                let path = ForwardSdePath::new(&start, &end, &s, noise).unwrap();
                let mid = path.take(t / 2 + 1).last().unwrap().unwrap();
                assert_eq!(mid.t_index, t / 2);
                mean_err[slot] += (mid.x[0] - exact).abs();
            }
        }
    }
    let n = (GROUPS as usize * PATHS) as f64;
    let (coarse, fine) = (mean_err[0] / n, mean_err[1] / n);
    assert!(fine < coarse, "error T=2000 {fine} vs T=200 {coarse}");
}

/// Paired batches: the Gaussian posterior oracle beats a perturbed copy by
/// more than three standard errors.
#[test]
fn perturbed_posterior_has_larger_forward_loss() {
    let ds = gen_gaussian_pairs(4000, 2, 0.5, 0.8, 1.5, 3).unwrap();
    let best = GaussianPosterior::new(vec![0.5; 2], 0.8, 1.0, vec![1.5; 2]).unwrap();
    let worse = GaussianPosterior::new(vec![0.7; 2], 0.8, 1.0, vec![1.5; 2]).unwrap();
    let s = BridgeSchedule::new(200).unwrap();
    let diffs: Vec<f64> = (0..30u64)
        .map(|b| {
            let batch: Vec<&PairedSample> = ds.samples.iter().skip((b as usize * 131) % 3000).take(1000).collect();
            let loss = |o: &GaussianPosterior| {
                let mut st = Stream::named(b, "test/paired");
                objective_loss(&batch, Objective::Forward, o, &s, LossNorm::L2Squared, &mut st).unwrap()
            };
            loss(&worse) - loss(&best)
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(mean > 3.0 * se, "gap {mean} se {se}");
}

fn curve_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/blur_forward_loss.csv")
}

#[test]
fn forward_training_halves_blur_loss() {
    let ds = gen_blur_pairs(512, 8, 1, 5).unwrap();
    let cfg = MlpConfig::for_data(64, &[64], Activation::Tanh, TimeEmbedding::Scalar, false)
        .seed(9)
        .zero_final(true);
    let mut net = Mlp::new(cfg).unwrap();
    let tc = TrainConfig {
        batch_size: 32,
        steps: 2000,
        horizon: 100,
        seed: 4,
        ..TrainConfig::default()
    };
    let curve = train(&ds, &mut net, &tc, Objective::Forward).unwrap();
    let (first, last) = (curve.first().unwrap(), curve.last().unwrap());
    assert!(last < 0.5 * first, "loss {first} -> {last}");

    let losses: Vec<(usize, f64)> = curve.points.iter().map(|p| (p.step, p.loss)).collect();
    if std::env::var_os("DABRIDGE_BLESS").is_some() {
        let body: String = losses.iter().map(|(s, l)| format!("{s},{l:e}\n")).collect();
        std::fs::write(curve_fixture(), format!("step,loss\n{body}")).unwrap();
    }
    let text = std::fs::read_to_string(curve_fixture()).unwrap();
    let frozen: Vec<(usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(frozen.len(), losses.len());
    for ((s0, l0), (s1, l1)) in frozen.iter().zip(&losses) {
        assert_eq!(s0, s1);
        assert!((l0 - l1).abs() <= 1e-6 * l0.abs(), "step {s0}: {l0} vs {l1}");
    }
}
