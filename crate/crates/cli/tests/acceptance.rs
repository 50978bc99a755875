//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The two training experiments need tens of CPU hours at the prescribed size.
//! By default their cost is projected from a short warmup and the criterion
//! fails when the projection exceeds its budget; `POROGAN_ACCEPTANCE_FULL=1`
//! runs them in full regardless.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use porogan_cgan::losses::gradient_penalty;
use porogan_cgan::train::checkpoint_path;
use porogan_cgan::{
    lr_schedule, Checkpoint, Direction, Discriminator, DiscriminatorSpec, GpMode, Generator, GeneratorSpec, Rom,
    TrainConfig, Trainer, Variant,
};
use porogan_cli::evaluate::{evaluate, measure_timing};
use porogan_cli::generate::{collect_snapshots, split_datasets};
use porogan_cli::{DatasetConfig, ExperimentConfig, Split};
use porogan_core::dataset::{read_dataset, write_dataset, Channel, Dataset, MaskConfig, MaskMode, NoiseConfig};
use porogan_core::fields::{
    apply_transform, bimodal_transform, zinn_harvey_transform, CirculantEmbedding, Connectivity, FieldConfig,
    FieldTransform, LOG_PERMEABILITY_UNITS,
};
use porogan_core::fom::{
    boundary_fluxes, solve_mechanics, solve_mechanics_nodal, solve_pressure, solve_steady_hm, BoundaryConditions,
    MaterialParams, NodalDisplacement, Snapshot,
};
use porogan_core::metrics::{mfmc_criterion, pod_spectrum, MIN_TIMING_REPEATS};
use porogan_core::{GridSpec, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use tch::nn::VarStore;
use tch::{Device, Kind, Tensor};

const FULL_ENV: &str = "POROGAN_ACCEPTANCE_FULL";
const EXPERIMENT_BUDGET: Duration = Duration::from_secs(2 * 3600);
const WARMUP_STEPS: usize = 2;
const TIMED_STEPS: usize = 4;

type Outcome = Result<(bool, String), String>;

struct Tally {
    passed: usize,
    failed: usize,
    errors: usize,
}

impl Tally {
    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(Ok((pass, detail))) => (pass, detail),
            Ok(Err(e)) => {
                self.errors += 1;
                (false, format!("error: {e}"))
            }
            Err(p) => {
                self.errors += 1;
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let over = budget.is_some_and(|b| elapsed > b);
        let pass = pass && !over;
        let timing = match budget {
            Some(b) => format!("{:.1} s of {:.0} s", elapsed.as_secs_f64(), b.as_secs_f64()),
            None => format!("{:.1} s", elapsed.as_secs_f64()),
        };
        let over = if over { "; over the runtime budget" } else { "" };
        println!("{} {id:>2} {name}: {detail} [{timing}{over}]", if pass { "PASS" } else { "FAIL" });
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn grid(n: usize) -> GridSpec {
    GridSpec::unit_square(n).unwrap()
}

fn max_dev(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------- 1

fn flow_oracle() -> Outcome {
    let n = 64;
    let mat = MaterialParams::default();
    let bc = BoundaryConditions::default();
    let uniform = ScalarField::constant(grid(n), -12.0, LOG_PERMEABILITY_UNITS).map_err(err)?;
    let p = solve_pressure(&uniform, &mat, &bc).map_err(err)?;
    let hom = max_dev((0..n * n).map(|k| {
        let (_, y) = p.grid.cell_center(k % n, k / n);
        (p.values[k] - 1000.0 * (1.0 - y)).abs()
    }));

    let (k1, k2) = (-12.0, -10.5);
    let layered =
        ScalarField::from_fn(grid(n), LOG_PERMEABILITY_UNITS, |_, y| if y < 0.5 { k1 } else { k2 }).map_err(err)?;
    let p = solve_pressure(&layered, &mat, &bc).map_err(err)?;
    let (c1, c2) = (10f64.powf(k1) / mat.viscosity, 10f64.powf(k2) / mat.viscosity);
    let q = 1000.0 / (0.5 / c1 + 0.5 / c2);
    let exact = |y: f64| if y < 0.5 { 1000.0 - q * y / c1 } else { q * (1.0 - y) / c2 };
    let rel_p = max_dev((0..n * n).map(|k| {
        let (_, y) = p.grid.cell_center(k % n, k / n);
        (p.values[k] - exact(y)).abs() / 1000.0
    }));
    let f = boundary_fluxes(&layered, &p, &mat, &bc).map_err(err)?;
    let rel_q = ((f.bottom - q).abs() / q).max((f.top + q).abs() / q);
    Ok((
        hom < 1e-6 && rel_p <= 1e-6 && rel_q <= 1e-6,
        format!(
            "homogeneous max|p - 1000(1-y)| = {hom:.2e} Pa (< 1e-6); layered pressure {rel_p:.2e}, \
             flux {rel_q:.2e} relative (<= 1e-6)"
        ),
    ))
}

// ---------------------------------------------------------------- 2

fn smooth_log_k(n: usize) -> ScalarField {
    ScalarField::from_fn(grid(n), LOG_PERMEABILITY_UNITS, |x, y| {
        -12.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).cos() + 0.3 * y
    })
    .unwrap()
}

fn restrict(fine: &ScalarField) -> Vec<f64> {
    let n = fine.grid.nx / 2;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let s = fine.at(2 * i, 2 * j)
                + fine.at(2 * i + 1, 2 * j)
                + fine.at(2 * i, 2 * j + 1)
                + fine.at(2 * i + 1, 2 * j + 1);
            out.push(0.25 * s);
        }
    }
    out
}

fn coincident(fine: &NodalDisplacement, coarse_n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..=coarse_n {
        for i in 0..=coarse_n {
            out.push(fine.ux_at(2 * i, 2 * j));
            out.push(fine.uy_at(2 * i, 2 * j));
        }
    }
    out
}

fn interleaved(u: &NodalDisplacement) -> Vec<f64> {
    u.ux.iter().zip(&u.uy).flat_map(|(a, b)| [*a, *b]).collect()
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

fn mechanics_oracle() -> Outcome {
    let n = 32;
    let mat = MaterialParams::default();
    let bc = BoundaryConditions::default();

    let zero = ScalarField::constant(grid(n), 0.0, "Pa").map_err(err)?;
    let u = solve_mechanics_nodal(&zero, &mat, &bc).map_err(err)?;
    let mut oed = 0.0f64;
    for j in 0..=n {
        for i in 0..=n {
            let (_, y) = u.position(i, j);
            oed = oed.max((u.uy_at(i, j) + y / 1800.0).abs()).max(u.ux_at(i, j).abs());
        }
    }
    let (ux, uy) = solve_mechanics(&zero, &mat, &bc).map_err(err)?;
    for k in 0..n * n {
        let (_, y) = uy.grid.cell_center(k % n, k / n);
        oed = oed.max((uy.values[k] + y / 1800.0).abs()).max(ux.values[k].abs());
    }

    let uniform = ScalarField::constant(grid(n), -12.0, LOG_PERMEABILITY_UNITS).map_err(err)?;
    let snap = solve_steady_hm(&uniform, &mat, &bc).map_err(err)?;
    let u = solve_mechanics_nodal(&snap.p, &mat, &bc).map_err(err)?;
    let alpha = mat.biot_coefficient();
    let m = mat.oedometric_modulus();
    let mut coupled = 0.0f64;
    for j in 1..=n {
        let y = j as f64 / n as f64;
        let e = (-1000.0 * y + alpha * 1000.0 * (y - 0.5 * y * y)) / m;
        for i in 0..=n {
            coupled = coupled.max((u.uy_at(i, j) - e).abs() / e.abs());
        }
    }

    let solves: Vec<_> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let p = solve_pressure(&smooth_log_k(n), &mat, &bc)?;
            let u = solve_mechanics_nodal(&p, &mat, &bc)?;
            Ok((p, u))
        })
        .collect::<porogan_core::Result<_>>()
        .map_err(err)?;
    let ep = (rms_diff(&solves[0].0.values, &restrict(&solves[1].0))
        / rms_diff(&solves[1].0.values, &restrict(&solves[2].0)))
    .log2();
    let eu = (rms_diff(&interleaved(&solves[0].1), &coincident(&solves[1].1, 32))
        / rms_diff(&interleaved(&solves[1].1), &coincident(&solves[2].1, 64)))
    .log2();
    Ok((
        oed <= 1e-8 && coupled <= 1e-6 && ep >= 1.9 && eu >= 1.9,
        format!(
            "oedometer error {oed:.2e} m (<= 1e-8); coupled {coupled:.2e} relative (<= 1e-6); \
             refinement order p {ep:.3}, u {eu:.3} (>= 1.9)"
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Deviations of mean and variance from `(m, s^2)` in units of their standard errors.
fn moment_z(v: &[f64], m: f64, s: f64) -> (f64, f64) {
    let n = v.len() as f64;
    let (mean, sd) = mean_sd(v);
    let var = sd * sd;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    ((mean - m).abs() / (sd / n.sqrt()), (var - s * s).abs() / ((m4 - var * var) / n).sqrt())
}

fn ks_normal(v: &[f64], m: f64, s: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut z: Vec<f64> = v.iter().map(|x| (x - m) / s).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    max_dev(z.iter().enumerate().map(|(k, &x)| {
        let f = normal.cdf(x);
        (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
    }))
}

fn transform_moments() -> Outcome {
    let (m, s) = (-12.0, 1.3);
    let g = GridSpec::new(400, 250, 1.0, 1.0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let values = (0..g.cells()).map(|_| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
    let base = ScalarField::new(g, values, LOG_PERMEABILITY_UNITS).map_err(err)?;
    let mut worst = 0.0f64;
    let mut ks = 0.0f64;
    let (a, b) = moment_z(&bimodal_transform(&base, m, s).map_err(err)?.values, m, s);
    worst = worst.max(a).max(b);
    for c in [Connectivity::High, Connectivity::Low] {
        let out = zinn_harvey_transform(&base, m, s, c).map_err(err)?;
        let (a, b) = moment_z(&out.values, m, s);
        worst = worst.max(a).max(b);
        ks = ks.max(ks_normal(&out.values, m, s));
    }
    Ok((
        worst < 3.0 && ks < 0.01,
        format!(
            "{} points: worst moment deviation {worst:.2} SE (< 3); Zinn-Harvey KS {ks:.4} (< 0.01)",
            g.cells()
        ),
    ))
}

// ---------------------------------------------------------------- 4

/// Generator block outputs at 128x128 with H = 32; `0` channels stands for the output count.
const GENERATOR_128: [(&str, i64, i64); 14] = [
    ("feature", 32, 128),
    ("contract1", 64, 64),
    ("contract2", 128, 32),
    ("contract3", 256, 16),
    ("contract4", 512, 8),
    ("contract5", 1024, 4),
    ("contract6", 2048, 2),
    ("expand1", 1024, 4),
    ("expand2", 512, 8),
    ("expand3", 256, 16),
    ("expand4", 128, 32),
    ("expand5", 64, 64),
    ("expand6", 32, 128),
    ("output", 0, 128),
];

/// Discriminator block outputs at 128x128 with H = 8.
const DISCRIMINATOR_128: [(&str, i64, i64); 6] = [
    ("feature", 8, 128),
    ("contract1", 16, 64),
    ("contract2", 32, 32),
    ("contract3", 64, 16),
    ("contract4", 128, 8),
    ("output", 0, 8),
];

fn table(c: i64, n: i64, rows: &[(&str, i64, i64)]) -> Vec<(String, Vec<i64>)> {
    rows.iter()
        .map(|&(name, ch, s)| (name.to_string(), vec![1, if ch == 0 { c } else { ch }, s * n / 128, s * n / 128]))
        .collect()
}

fn traced(t: &[porogan_cgan::LayerShape]) -> Vec<(String, Vec<i64>)> {
    t.iter().map(|l| (l.name.clone(), l.shape.clone())).collect()
}

fn shape_suite() -> Outcome {
    tch::manual_seed(0);
    let mut mismatches = Vec::new();
    let mut rows = 0;
    for c in [1, 3] {
        let vs = VarStore::new(Device::Cpu);
        let g = Generator::new(&vs.root(), &GeneratorSpec::new(1, c)).map_err(err)?;
        let vd = VarStore::new(Device::Cpu);
        let d = Discriminator::new(&vd.root(), &DiscriminatorSpec::new(1, c)).map_err(err)?;
        for n in [128, 64] {
            let x = Tensor::rand([1, 1, n, n], (Kind::Float, Device::Cpu));
            let y = Tensor::rand([1, c, n, n], (Kind::Float, Device::Cpu));
            let (gt, dt) = tch::no_grad(|| -> porogan_cgan::Result<_> {
                Ok((g.trace(&x, false)?.1, d.trace(&x, &y, false)?.1))
            })
            .map_err(err)?;
            for (got, want) in [(traced(&gt), table(c, n, &GENERATOR_128)), (traced(&dt), table(c, n, &DISCRIMINATOR_128))] {
                rows += want.len();
                if got != want {
                    mismatches.push(format!("C={c} n={n}: {got:?}"));
                }
            }
        }
    }
    Ok((
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{rows} generator and discriminator rows match at 128 and 64 for 1 and 3 channels; patch 8x8 at 128")
        } else {
            format!("mismatched traces {}", mismatches.join("; "))
        },
    ))
}

// ---------------------------------------------------------------- 5

const F64: (Kind, Device) = (Kind::Double, Device::Cpu);

fn scalar(t: &Tensor) -> f64 {
    f64::try_from(t.detach()).unwrap()
}

fn flat(t: &Tensor) -> Vec<f64> {
    Vec::<f64>::try_from(t.detach().reshape([-1])).unwrap()
}

fn penalty_fd_error() -> Result<f64, String> {
    tch::manual_seed(12);
    let mut vs = VarStore::new(Device::Cpu);
    let spec = DiscriminatorSpec {
        hidden: 2,
        depth: 2,
        ..DiscriminatorSpec::new(1, 1)
    };
    let d = Discriminator::new(&vs.root(), &spec).map_err(err)?;
    vs.double();
    tch::no_grad(|| {
        for (_, mut t) in vs.variables() {
            if t.requires_grad() && t.dim() == 4 {
                let _ = t.g_mul_scalar_(20.0);
            }
        }
    });
    let cond = Tensor::rand([2, 1, 8, 8], F64);
    let real = Tensor::rand([2, 1, 8, 8], F64);
    let fake = Tensor::rand([2, 1, 8, 8], F64);
    let gp = || {
        gradient_penalty(|c, x| d.forward(c, x, true), &cond, &real, &fake, &[0.3, 0.8], GpMode::PerSample)
            .unwrap()
            .penalty
    };
    let params: Vec<Tensor> = vs.trainable_variables();
    gp().backward();
    let grads: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            let g = p.grad();
            if g.defined() {
                flat(&g)
            } else {
                vec![0.0; p.numel()]
            }
        })
        .collect();
    let scale = max_dev(grads.iter().flatten().map(|g| g.abs()));
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (p, analytic) in params.iter().zip(&grads) {
        let view = p.view([-1]);
        for (k, &a) in analytic.iter().enumerate() {
            let mut e = view.narrow(0, k as i64, 1);
            let mut nudge = |by: f64| {
                tch::no_grad(|| {
                    let _ = e.g_add_scalar_(by);
                })
            };
            nudge(h);
            let up = scalar(&gp());
            nudge(-2.0 * h);
            let down = scalar(&gp());
            nudge(h);
            let numeric = (up - down) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-3 * scale);
            if a != numeric {
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

fn linear_critic_penalty() -> Result<f64, String> {
    let w = Tensor::randn([1, 1, 8, 8], F64);
    let w = &w / w.norm();
    let critic = |_c: &Tensor, x: &Tensor| Ok((x * &w).sum_dim_intlist([1i64, 2, 3].as_slice(), false, Kind::Double));
    let cond = Tensor::rand([3, 1, 8, 8], F64);
    let real = Tensor::rand([3, 1, 8, 8], F64);
    let fake = Tensor::rand([3, 1, 8, 8], F64);
    let mut worst = 0.0f64;
    for mode in [GpMode::PerSample, GpMode::Batched] {
        let gp = gradient_penalty(critic, &cond, &real, &fake, &[0.1, 0.5, 0.9], mode).map_err(err)?;
        worst = worst.max(scalar(&gp.penalty).abs());
    }
    Ok(worst)
}

fn spectral_deviation() -> Result<f64, String> {
    tch::manual_seed(5);
    let vs = VarStore::new(Device::Cpu);
    let spec = DiscriminatorSpec {
        spectral_norm: true,
        ..DiscriminatorSpec::new(1, 3)
    };
    let d = Discriminator::new(&vs.root(), &spec).map_err(err)?;
    let cond = Tensor::rand([1, 1, 16, 16], (Kind::Float, Device::Cpu));
    let cand = Tensor::rand([1, 3, 16, 16], (Kind::Float, Device::Cpu));
    tch::no_grad(|| -> porogan_cgan::Result<()> {
        for _ in 0..500 {
            let _ = d.forward(&cond, &cand, true)?;
        }
        Ok(())
    })
    .map_err(err)?;
    Ok(max_dev(d.convs().iter().map(|c| {
        let w = c.effective_weight().detach();
        let m = w.reshape([w.size()[0], -1]).to_kind(Kind::Double);
        (flat(&m.svd(true, false).1)[0] - 1.0).abs()
    })))
}

fn loss_correctness() -> Outcome {
    let fd = penalty_fd_error()?;
    let gp = linear_critic_penalty()?;
    let sn = spectral_deviation()?;
    let (lo, hi, f) = (1e-16, 1e-4, 20_000);
    let ends = lr_schedule(0, f, lo, hi) == hi && lr_schedule(f, f, lo, hi) == lo;
    Ok((
        fd <= 1e-4 && gp < 1e-20 && sn <= 1e-2 && ends,
        format!(
            "penalty gradient vs central differences {fd:.2e} relative (<= 1e-4); unit-slope linear critic gp {gp:.1e}; \
             max |sigma - 1| {sn:.2e} (<= 1e-2); schedule endpoints exact: {ends}"
        ),
    ))
}

// ---------------------------------------------------------------- 6, 7, 8

fn full_run() -> bool {
    std::env::var(FULL_ENV).is_ok_and(|v| v == "1")
}

fn hours(d: Duration) -> String {
    format!("{:.1} h", d.as_secs_f64() / 3600.0)
}

/// The shared data recipe: 64x64 Gaussian fields, 500 training and 100 test samples.
fn experiment(dir: &std::path::Path, dataset: DatasetConfig, variant: Variant) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out: dir.to_path_buf(),
        dataset,
        ..ExperimentConfig::default()
    };
    cfg.train.variant = variant;
    cfg.train.checkpoint_every = 0;
    cfg.train.eval_every = 0;
    cfg
}

fn forward_data() -> DatasetConfig {
    DatasetConfig::default()
}

fn inverse_data(noise: bool) -> DatasetConfig {
    DatasetConfig {
        direction: Direction::Inverse,
        channels: vec![Channel::P, Channel::Ux, Channel::Uy],
        mask: Some(MaskConfig {
            fraction: 0.03,
            mode: MaskMode::Random,
            seed: 0,
        }),
        noise: noise.then(|| NoiseConfig::new(1)),
    }
}

struct Probe {
    /// Seconds per generated sample.
    sample: f64,
    /// Seconds per training step of each probed configuration.
    steps: Vec<f64>,
    /// A default-width surrogate on the probe data, for timing.
    rom: Rom,
    test: Dataset,
}

/// Generates eight samples and times a few training steps of each configuration.
fn probe(dir: &std::path::Path, configs: &[ExperimentConfig]) -> Result<Probe, String> {
    let small = |c: &ExperimentConfig| ExperimentConfig {
        split: Split { train: 6, test: 2 },
        ..c.clone()
    };
    let start = Instant::now();
    let (snaps, _, _, failures) = collect_snapshots(&small(&configs[0]), 0..8).map_err(err)?;
    if !failures.is_empty() {
        return Err(format!("{} probe samples failed", failures.len()));
    }
    let sample = start.elapsed().as_secs_f64() / 8.0;
    let mut steps = Vec::new();
    let mut rom_test = None;
    for c in configs {
        let c = ExperimentConfig {
            out: dir.to_path_buf(),
            ..small(c)
        };
        let (train, test, _) = split_datasets(&c, &snaps).map_err(err)?;
        let mut t = Trainer::new(c.train.clone(), c.dataset.direction, &train, Device::Cpu).map_err(err)?;
        for _ in 0..WARMUP_STEPS {
            t.train_step().map_err(err)?;
        }
        let start = Instant::now();
        for _ in 0..TIMED_STEPS {
            t.train_step().map_err(err)?;
        }
        steps.push(start.elapsed().as_secs_f64() / TIMED_STEPS as f64);
        if rom_test.is_none() {
            let rom = Rom::from_checkpoint(&t.checkpoint().map_err(err)?, Device::Cpu).map_err(err)?;
            rom_test = Some((rom, test));
        }
    }
    let (rom, test) = rom_test.ok_or("no configuration probed")?;
    Ok(Probe {
        sample,
        steps,
        rom,
        test,
    })
}

fn projection(p: &Probe, samples: usize, steps: usize) -> Duration {
    Duration::from_secs_f64(p.sample * samples as f64 + p.steps.iter().sum::<f64>() * steps as f64)
}

/// Trains and evaluates one configuration on `snaps`; returns pooled RMSE, max |truth| and Pearson rho.
fn train_and_score(cfg: &ExperimentConfig, snaps: &[(usize, Snapshot)]) -> Result<(f64, f64, f64), String> {
    let (train, test, _) = split_datasets(cfg, snaps).map_err(err)?;
    let mut t = Trainer::new(cfg.train.clone(), cfg.dataset.direction, &train, Device::Cpu).map_err(err)?;
    t.run(None, None, |r| {
        if r.step % 1000 == 0 {
            eprintln!("  {:?} {:?} step {} l_r {:.4e}", cfg.dataset.direction, cfg.train.variant, r.step, r.l_r);
        }
    })
    .map_err(err)?;
    let rom = Rom::from_checkpoint(&t.checkpoint().map_err(err)?, Device::Cpu).map_err(err)?;
    let report = evaluate(&rom, &test, &cfg.material, &cfg.boundary, MIN_TIMING_REPEATS).map_err(err)?;
    Ok((report.rmse[0], report.max_abs[0], report.pearson[0]))
}

struct Experiments {
    dir: tempfile::TempDir,
    snaps: Option<Vec<(usize, Snapshot)>>,
    probe: Option<Probe>,
    rho: Option<f64>,
}

impl Experiments {
    fn snapshots(&mut self) -> Result<&[(usize, Snapshot)], String> {
        if self.snaps.is_none() {
            let cfg = experiment(self.dir.path(), forward_data(), Variant::W);
            let (snaps, _, _, failures) = collect_snapshots(&cfg, 0..cfg.split.total()).map_err(err)?;
            if !failures.is_empty() {
                return Err(format!("{} samples failed to solve", failures.len()));
            }
            self.snaps = Some(snaps);
        }
        Ok(self.snaps.as_deref().unwrap())
    }

    fn forward(&mut self) -> Outcome {
        let dir = self.dir.path().join("probe");
        let w = experiment(self.dir.path(), forward_data(), Variant::W);
        let base = experiment(self.dir.path(), forward_data(), Variant::Base);
        let p = probe(&dir, &[w.clone(), base.clone()])?;
        let projected = projection(&p, w.split.total(), w.train.steps);
        let rates = format!(
            "{:.2} s/step W, {:.2} s/step base, {:.2} s/sample",
            p.steps[0], p.steps[1], p.sample
        );
        self.probe = Some(p);
        if !full_run() && projected > EXPERIMENT_BUDGET {
            return Ok((
                false,
                format!(
                    "not run: projected {} exceeds the {} CPU budget ({rates}); set {FULL_ENV}=1 to run anyway",
                    hours(projected),
                    hours(EXPERIMENT_BUDGET)
                ),
            ));
        }
        let start = Instant::now();
        let snaps = self.snapshots()?.to_vec();
        let (rmse_w, max_p, rho) = train_and_score(&w, &snaps)?;
        let (rmse_base, _, _) = train_and_score(&base, &snaps)?;
        self.rho = Some(rho);
        let took = start.elapsed();
        Ok((
            rmse_w <= 0.05 * max_p && rmse_w <= rmse_base && took <= EXPERIMENT_BUDGET,
            format!(
                "W pressure RMSE {rmse_w:.3} Pa (<= {:.3} = 5% of max p); base {rmse_base:.3} Pa (W <= base); \
                 rho {rho:.4}; ran {} of {}",
                0.05 * max_p,
                hours(took),
                hours(EXPERIMENT_BUDGET)
            ),
        ))
    }

    fn inverse(&mut self) -> Outcome {
        let dir = self.dir.path().join("probe");
        let clean = experiment(self.dir.path(), inverse_data(false), Variant::W);
        let noisy = experiment(self.dir.path(), inverse_data(true), Variant::W);
        let p = probe(&dir, &[clean.clone(), noisy.clone()])?;
        // the samples are shared with the forward experiment
        let pending = if self.snaps.is_some() { 0 } else { clean.split.total() };
        let projected = projection(&p, pending, clean.train.steps);
        let rates = format!("{:.2} s/step clean, {:.2} s/step noisy", p.steps[0], p.steps[1]);
        if !full_run() && projected > EXPERIMENT_BUDGET {
            return Ok((
                false,
                format!(
                    "not run: projected {} exceeds the {} CPU budget ({rates}); set {FULL_ENV}=1 to run anyway",
                    hours(projected),
                    hours(EXPERIMENT_BUDGET)
                ),
            ));
        }
        let start = Instant::now();
        let snaps = self.snapshots()?.to_vec();
        let (rmse_clean, _, _) = train_and_score(&clean, &snaps)?;
        let (rmse_noisy, _, _) = train_and_score(&noisy, &snaps)?;
        let took = start.elapsed();
        Ok((
            rmse_clean <= 1.0 && rmse_noisy <= 1.0 && rmse_noisy - rmse_clean < 0.3 && took <= EXPERIMENT_BUDGET,
            format!(
                "log-permeability RMSE clean {rmse_clean:.3}, noisy {rmse_noisy:.3} log(m^2) (<= 1.0); \
                 excess {:.3} (< 0.3); ran {} of {}",
                rmse_noisy - rmse_clean,
                hours(took),
                hours(EXPERIMENT_BUDGET)
            ),
        ))
    }

    fn mfmc(&mut self) -> Outcome {
        let p = self.probe.as_ref().ok_or("the forward probe did not run")?;
        let cfg = ExperimentConfig::default();
        let timing = measure_timing(&p.rom, &p.test, &cfg.material, &cfg.boundary, MIN_TIMING_REPEATS).map_err(err)?;
        let speedup = timing.speedup();
        let costs = format!(
            "w_fom {:.1} ms, w_rom {:.2} ms, speedup {speedup:.1} (>= 100)",
            timing.w_fom * 1e3,
            timing.w_rom * 1e3
        );
        match self.rho {
            Some(rho) => {
                let check = mfmc_criterion(rho, &timing).map_err(err)?;
                Ok((
                    speedup >= 100.0 && check.holds,
                    format!("{costs}; rho {rho:.4}: cost ratio {:.1} vs {:.3e} holds: {}", check.lhs, check.rhs, check.holds),
                ))
            }
            None => Ok((false, format!("{costs}; no rho because the forward experiment did not run"))),
        }
    }
}

// ---------------------------------------------------------------- 9

fn pod_diagnostic() -> Outcome {
    let g = grid(64);
    let base = FieldConfig {
        length_scale: 1.0,
        ..FieldConfig::gaussian(0)
    };
    let zh = FieldConfig {
        transform: FieldTransform::ZinnHarvey {
            connectivity: Connectivity::High,
        },
        ..base.clone()
    };
    let emb = CirculantEmbedding::new(&base, g).map_err(err)?;
    let mat = MaterialParams::default();
    let bc = BoundaryConditions::default();
    let mut gaussian_p = Vec::new();
    let mut zh_p = Vec::new();
    for s in 0..200u64 {
        let field = emb.sample(s);
        for (cfg, rows) in [(&base, &mut gaussian_p), (&zh, &mut zh_p)] {
            let log_k = apply_transform(&field, cfg).map_err(err)?;
            rows.push(solve_steady_hm(&log_k, &mat, &bc).map_err(err)?.p.values);
        }
    }
    let sg = pod_spectrum(&gaussian_p).map_err(err)?;
    let sz = pod_spectrum(&zh_p).map_err(err)?;
    Ok((
        sz[50] > sg[50],
        format!("normalized eigenvalue 50 of 200: Zinn-Harvey {:.3e} vs Gaussian {:.3e}", sz[50], sg[50]),
    ))
}

// ---------------------------------------------------------------- 10

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = ExperimentConfig {
        out: dir.path().to_path_buf(),
        split: Split { train: 6, test: 2 },
        dataset: inverse_data(true),
        ..ExperimentConfig::default()
    };
    let (snaps, _, _, _) = collect_snapshots(&cfg, 0..8).map_err(err)?;
    let (inverse, _, _) = split_datasets(&cfg, &snaps).map_err(err)?;
    let mut notes = Vec::new();
    write_dataset(&inverse, dir.path().join("a")).map_err(err)?;
    let back = read_dataset(dir.path().join("a")).map_err(err)?;
    write_dataset(&back, dir.path().join("b")).map_err(err)?;
    let files_equal = ["manifest.json", "data.bin", "mask.bin"].iter().all(|f| {
        std::fs::read(dir.path().join("a").join(f)).ok() == std::fs::read(dir.path().join("b").join(f)).ok()
    });
    let dataset_ok = back == inverse && bits(&back.data) == bits(&inverse.data) && files_equal;
    notes.push(format!("dataset round trip bit-exact: {dataset_ok}"));

    let forward = ExperimentConfig {
        dataset: DatasetConfig {
            channels: vec![Channel::P, Channel::Ux, Channel::Uy],
            ..forward_data()
        },
        ..cfg.clone()
    };
    let (train, _, _) = split_datasets(&forward, &snaps).map_err(err)?;
    let small = |variant, steps| TrainConfig {
        variant,
        steps,
        generator_hidden: 4,
        discriminator_hidden: 4,
        checkpoint_every: 3,
        eval_every: 0,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(small(Variant::Sn, 2), Direction::Forward, &train, Device::Cpu).map_err(err)?;
    t.run(None, None, |_| {}).map_err(err)?;
    let ckpt = t.checkpoint().map_err(err)?;
    let (p1, p2) = (dir.path().join("c1.pgck"), dir.path().join("c2.pgck"));
    ckpt.write(&p1).map_err(err)?;
    let read = Checkpoint::read(&p1).map_err(err)?;
    read.write(&p2).map_err(err)?;
    let ckpt_ok = read.header == ckpt.header
        && read.values.len() == ckpt.values.len()
        && read.values.iter().zip(&ckpt.values).all(|(a, b)| bits(a) == bits(b))
        && std::fs::read(&p1).map_err(err)? == std::fs::read(&p2).map_err(err)?;
    notes.push(format!("checkpoint round trip bit-exact: {ckpt_ok}"));

    let mut resume_ok = true;
    for variant in [Variant::Base, Variant::Sn, Variant::W] {
        let ck = dir.path().join(format!("{variant:?}"));
        let mut full = Trainer::new(small(variant, 6), Direction::Forward, &train, Device::Cpu).map_err(err)?;
        let uninterrupted = full.run(None, Some(&ck), |_| {}).map_err(err)?;
        let mid = Checkpoint::read(checkpoint_path(&ck, 3)).map_err(err)?;
        let mut resumed = Trainer::resume(&mid, &train, Device::Cpu).map_err(err)?;
        let tail = resumed.run(None, None, |_| {}).map_err(err)?;
        resume_ok &= tail == uninterrupted[3..];
    }
    notes.push(format!("resumed loss traces identical for base, SN and W: {resume_ok}"));
    Ok((dataset_ok && ckpt_ok && resume_ok, notes.join("; ")))
}

fn main() -> ExitCode {
    // libtest arguments such as --nocapture are accepted and ignored
    tch::set_num_threads(1);
    let secs = Duration::from_secs;
    let mut tally = Tally {
        passed: 0,
        failed: 0,
        errors: 0,
    };
    tally.run(1, "flow oracle", Some(secs(10)), flow_oracle);
    tally.run(2, "mechanics oracle", Some(secs(60)), mechanics_oracle);
    tally.run(3, "field-transform moments", Some(secs(60)), transform_moments);
    tally.run(4, "network shapes", Some(secs(30)), shape_suite);
    tally.run(5, "loss correctness", Some(secs(60)), loss_correctness);
    let mut ex = match tempfile::tempdir() {
        Ok(dir) => Experiments {
            dir,
            snaps: None,
            probe: None,
            rho: None,
        },
        Err(e) => {
            eprintln!("cannot create a scratch directory: {e}");
            return ExitCode::FAILURE;
        }
    };
    tally.run(6, "scaled forward experiment", None, || ex.forward());
    tally.run(7, "scaled inverse experiment", None, || ex.inverse());
    tally.run(8, "MFMC criterion", None, || ex.mfmc());
    tally.run(9, "POD diagnostic", None, pod_diagnostic);
    tally.run(10, "serialization", None, serialization);
    println!(
        "acceptance: {} passed, {} failed, {} with harness errors",
        tally.passed, tally.failed, tally.errors
    );
    if tally.errors > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
