//! Shared inputs for the kernel benchmarks.

use urnlimits::limitproc::{brownian_increments, SdeFamily, SdeSpec, TimeGrid};
use urnlimits::rng::seeded_rng;
use urnlimits::{Count, QParam, UrnConfig, UrnLawParams};

/// Two-colour urn law parameters with `r` white and `s` black balls, `k = 1`.
pub fn urn_law(r: u64, s: u64, q: f64) -> UrnLawParams {
    UrnLawParams::new(Count::Finite(r), s, 1, QParam::new(q).expect("valid q")).expect("valid urn")
}

pub fn urn_config(initial: &[u64], q: f64) -> UrnConfig {
    let initial = initial.iter().map(|&c| Count::Finite(c)).collect();
    UrnConfig::new(initial, 1, QParam::new(q).expect("valid q")).expect("valid urn")
}

/// The deformed fluctuation SDE at `c = 2` with its default grid on `[0, 2]`.
pub fn sde_case() -> (SdeSpec, TimeGrid, Vec<f64>) {
    let spec = SdeSpec {
        family: SdeFamily::QPolyaFluct { c: 2.0 },
        a: 1.0,
        b: 1.0,
        k: 1.0,
        theta1: 0.5,
        theta2: -0.3,
    };
    let grid = TimeGrid::covering(2.0, 1e-3).expect("valid grid");
    let noise = brownian_increments(grid, &mut seeded_rng(1));
    (spec, grid, noise)
}
