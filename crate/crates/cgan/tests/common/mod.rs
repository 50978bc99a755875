#![allow(dead_code)]

use porogan_core::dataset::{
    assemble, make_mask, training_bounds, AssemblyOptions, Channel, Dataset, MaskMode, NoiseConfig, Roles,
};
use porogan_core::fields::{generate_log_k, FieldConfig};
use porogan_core::fom::{solve_steady_hm, BoundaryConditions, MaterialParams, Snapshot};
use porogan_core::GridSpec;

pub fn snapshots(count: u64, n: usize, seed: u64) -> Vec<Snapshot> {
    let grid = GridSpec::unit_square(n).unwrap();
    (0..count)
        .map(|s| {
            let cfg = FieldConfig {
                length_scale: 0.15,
                ..FieldConfig::gaussian(seed + s)
            };
            let log_k = generate_log_k(&cfg, grid).unwrap();
            solve_steady_hm(&log_k, &MaterialParams::default(), &BoundaryConditions::default()).unwrap()
        })
        .collect()
}

pub fn build(snaps: &[Snapshot], opts: &AssemblyOptions) -> Dataset {
    let bounds = training_bounds(snaps, opts).unwrap();
    assemble(snaps, &bounds, opts).unwrap().dataset
}

/// `log_k -> targets` on `count` Gaussian fields.
pub fn forward(count: u64, n: usize, targets: &[Channel]) -> Dataset {
    build(&snapshots(count, n, 100), &AssemblyOptions::new(Roles::forward(targets)))
}

/// Masked, noisy `(p, ux, uy) -> log_k`.
pub fn inverse(count: u64, n: usize) -> Dataset {
    let grid = GridSpec::unit_square(n).unwrap();
    let mut opts = AssemblyOptions::new(Roles::inverse(&[Channel::P, Channel::Ux, Channel::Uy]));
    opts.mask = Some(make_mask(grid, 0.03, MaskMode::Random, 3).unwrap());
    opts.noise = Some(NoiseConfig::new(4));
    build(&snapshots(count, n, 200), &opts)
}
