use crate::market::MarketParams;
use crate::solver::{principal_solution, GridSpec, LadderSpec, SolverError};

use super::{
    check_correlation_figure, check_cross_impact, check_single_asset_statics, check_trajectory_structure,
    check_two_asset_statics, check_value_bounds_construction, diagonal_bounds_battery, matrix_inequality_battery,
    riccati_battery, scalar_riccati_bound_battery, CheckReport, SingleAssetSweep, StructureScenario, TwoAssetSweep,
};

/// Sizes and seed of the full oracle battery.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryConfig {
    pub seed: u64,
    pub matrix_samples: usize,
    pub max_dim: usize,
    pub riccati_specs: usize,
    pub riccati_steps: usize,
    pub scalar_draws: usize,
    pub structure_seeds: usize,
    pub cross_seeds: usize,
    pub figure_points: usize,
    pub grid: GridSpec,
    pub ladder: LadderSpec,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 20_130_715,
            matrix_samples: 10_000,
            max_dim: 6,
            riccati_specs: 100,
            riccati_steps: 1000,
            scalar_draws: 100,
            structure_seeds: 1000,
            cross_seeds: 200,
            figure_points: 81,
            grid: GridSpec::default(),
            ladder: LadderSpec::default(),
        }
    }
}

fn pair_case() -> MarketParams {
    MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], 0.9, 4.0, [0.5, 3.0], 1.0)
}

/// Solves the principal problem for a named market; any validation or
/// solver failure fails the report.
fn market_report(name: &str, p: &MarketParams, cfg: &BatteryConfig) -> CheckReport {
    let mut r = CheckReport::new(format!("principal_solution:{name}"), 1e-6);
    let result = p.derive().map_err(SolverError::from).and_then(|d| {
        let path = principal_solution(p, &d, &cfg.grid, &cfg.ladder)?;
        let l = 4.0 * (2.0 * d.l0).max(1.0);
        let bounds = check_value_bounds_construction(p, &d, l, &cfg.grid)?;
        Ok((path, bounds))
    });
    match result {
        Ok((path, bounds)) => {
            r.expect(path.ladder.len() <= cfg.ladder.max_rungs, || "ladder too long".into());
            r.note(format!("{} rungs, final change {:.3e}", path.ladder.len(), path.ladder.last().map_or(0.0, |x| x.max_change)));
            r.absorb(&bounds);
        }
        Err(e) => r.fail(e.to_string()),
    }
    r
}

/// Runs every oracle, plus a solve and bound construction for each named
/// market. Reports come back in a fixed order.
pub fn run_battery(cfg: &BatteryConfig, markets: &[(String, MarketParams)]) -> Vec<CheckReport> {
    let seed = cfg.seed;
    let mut out = Vec::new();
    for (name, p) in markets {
        out.push(market_report(name, p, cfg));
    }
    out.push(matrix_inequality_battery(cfg.matrix_samples, cfg.max_dim, seed));
    out.push(diagonal_bounds_battery(cfg.matrix_samples, cfg.max_dim, seed.wrapping_add(1)));
    out.push(riccati_battery(cfg.riccati_specs, cfg.riccati_steps, seed.wrapping_add(2)));
    out.push(scalar_riccati_bound_battery(cfg.scalar_draws, cfg.riccati_steps, seed.wrapping_add(3)));
    for (name, p) in [
        ("scalar_case", MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0)),
        ("pair_case", pair_case()),
        ("cross", MarketParams::two_asset([1.0, 2.0], 0.4, [1.0, 0.5], -0.3, 2.0, [1.0, 0.0], 1.0)),
    ] {
        let mut r = market_report(name, &p, cfg);
        r.name = format!("value_bounds_construction:{name}");
        out.push(r);
    }
    out.push(check_single_asset_statics(&SingleAssetSweep::default()));
    out.push(check_two_asset_statics(&TwoAssetSweep { grid: cfg.grid, ladder: cfg.ladder, ..Default::default() }));
    out.push(check_cross_impact(
        &[(0.2, 0.1), (0.2, 0.3), (0.2, 0.6), (0.9, 0.5), (-0.2, -0.3)],
        &cfg.grid,
        &cfg.ladder,
        cfg.cross_seeds,
        seed.wrapping_add(4),
    ));
    let p = pair_case();
    let structure = p
        .derive()
        .map_err(SolverError::from)
        .and_then(|d| principal_solution(&p, &d, &cfg.grid, &cfg.ladder));
    out.push(match structure {
        Ok(path) => {
            let s = seed.wrapping_add(5);
            let scenarios = [
                StructureScenario::new(vec![1.0, -1.0], cfg.structure_seeds, s),
                StructureScenario::new(vec![1.0, 1.0], cfg.structure_seeds, s),
                StructureScenario::new(vec![-0.5, 1.5], cfg.structure_seeds / 4, s),
                StructureScenario::new(vec![-1.0, -0.4], cfg.structure_seeds / 4, s),
            ];
            check_trajectory_structure(&p, &path, &scenarios, 1)
        }
        Err(e) => {
            let mut r = CheckReport::new("trajectory_structure", 0.0);
            r.fail(e.to_string());
            r
        }
    });
    let uncorrelated = MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], 0.0, 4.0, [0.5, 3.0], 1.0);
    let mut r = match uncorrelated
        .derive()
        .map_err(SolverError::from)
        .and_then(|d| principal_solution(&uncorrelated, &d, &cfg.grid, &cfg.ladder))
    {
        Ok(path) => check_trajectory_structure(
            &uncorrelated,
            &path,
            &[StructureScenario::new(vec![1.0, 1.0], cfg.structure_seeds / 10, seed)],
            1,
        ),
        Err(e) => {
            let mut r = CheckReport::new("trajectory_structure", 0.0);
            r.fail(e.to_string());
            r
        }
    };
    r.name = "trajectory_structure_uncorrelated".into();
    out.push(r);
    out.push(check_correlation_figure(cfg.figure_points, &cfg.grid, &cfg.ladder).0);
    out
}
