//! Release criteria. Prints one line per criterion and exits nonzero if any
//! fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use darkpool::checks::{
    check_correlation_figure, check_cross_impact, check_single_asset_statics, check_trajectory_structure,
    check_two_asset_statics, check_value_bounds_construction, diagonal_bounds_battery, matrix_inequality_battery,
    riccati_battery, scalar_riccati_bound_battery, CheckReport, SingleAssetSweep, StructureScenario, TwoAssetSweep,
};
use darkpool::config::RunConfig;
use darkpool::linalg::{congruence, sym_extremes};
use darkpool::market::MarketParams;
use darkpool::sim::{compare_strategies, draw_jumps, liquidation_check, Engine, Perturbation};
use darkpool::solver::{
    bounds_finite, bounds_limit, principal_solution, single_asset_closed_form, solve_finite_penalty, GridSpec,
    LadderSpec, Penalty, ValuePath,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{scalar_case, pair_case, random_market, rel};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    fn from_reports(reports: &[CheckReport]) -> Self {
        let failed: Vec<String> = reports
            .iter()
            .filter(|r| !r.passed)
            .map(|r| format!("{}: {}", r.name, r.witness.as_deref().unwrap_or("")))
            .collect();
        let samples: usize = reports.iter().map(|r| r.samples).sum();
        if failed.is_empty() {
            Self::new(true, format!("{} reports, {samples} samples", reports.len()))
        } else {
            Self::new(false, failed.join("; "))
        }
    }
}

fn principal(p: &MarketParams, grid: &GridSpec) -> ValuePath {
    let d = p.derive().unwrap();
    principal_solution(p, &d, grid, &LadderSpec::default()).unwrap()
}

fn closed_form_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut witness = String::new();
    for k in 0..100 {
        let lam = rng.random_range(0.1..5.0);
        let (alpha_sigma, theta) = match k % 10 {
            0 => (0.0, 0.0),
            1 => (0.0, rng.random_range(0.1..8.0)),
            2 => (rng.random_range(0.1..20.0), 0.0),
            _ => (rng.random_range(0.0..20.0), rng.random_range(0.0..8.0)),
        };
        let horizon = rng.random_range(0.25..3.0);
        let p = MarketParams::scalar(lam, 1.0, alpha_sigma, theta, horizon);
        let d = p.derive().unwrap();
        let l = d.l0.max(0.05) * 10f64.powf(rng.random_range(0.05..4.0));
        let path = match solve_finite_penalty(&p, &d, l, &GridSpec::default()) {
            Ok(path) => path,
            Err(e) => return Outcome::new(false, format!("draw {k}: {e}")),
        };
        for (j, &t) in path.grid().iter().enumerate() {
            let want = single_asset_closed_form(lam, 1.0, alpha_sigma, theta, horizon, t, Penalty::Finite(l)).unwrap();
            let e = rel(path.matrix_at_knot(j)[(0, 0)], want);
            if e > worst {
                worst = e;
                witness = format!("draw {k} (lambda {lam:.3}, alpha sigma {alpha_sigma:.3}, theta {theta:.3}, l {l:.3e}) t = {t:.6}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(worst <= 1e-6 && secs < 10.0, format!("max rel error {worst:.2e} at {witness}; {secs:.1} s"))
}

fn sandwich_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    let mut solved = 0;
    for n in [1, 2, 3, 5] {
        for k in 0..50 {
            let p = random_market(n, &mut rng);
            let d = p.derive().unwrap();
            let l = d.l0.max(0.1) * 10f64.powf(rng.random_range(0.05..3.0));
            let finite = solve_finite_penalty(&p, &d, l, &GridSpec::default());
            let limit = principal_solution(&p, &d, &GridSpec::with_steps(1024), &LadderSpec::default());
            let (finite, limit) = match (finite, limit) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Outcome::new(false, format!("n = {n}, set {k}: {e}")),
            };
            for path in [&finite, &limit] {
                solved += 1;
                for (j, &t) in path.grid().iter().enumerate() {
                    let b = match path.penalty {
                        Penalty::Finite(l) => bounds_finite(&p, &d, l, t).unwrap(),
                        Penalty::Infinite => bounds_limit(&p, &d, t).unwrap(),
                    };
                    let (lo, hi) = sym_extremes(&congruence(&d.lambda_inv_sqrt, &path.matrix_at_knot(j)));
                    // violation in units of q
                    worst = worst.max((b.p - lo) / b.q).max((hi - b.q) / b.q);
                }
            }
        }
    }
    Outcome::new(worst <= 1e-6, format!("{solved} paths, worst excursion {worst:.2e} q"))
}

fn matrix_battery() -> Outcome {
    let start = Instant::now();
    let reports = [matrix_inequality_battery(10_000, 6, 3), diagonal_bounds_battery(10_000, 6, 4)];
    let secs = start.elapsed().as_secs_f64();
    let mut o = Outcome::from_reports(&reports);
    o.pass &= secs < 30.0;
    o.detail = format!("{}; min margin {:.2e}; {secs:.1} s", o.detail, reports[0].margin.min(reports[1].margin));
    o
}

fn shipped_markets() -> Vec<(String, MarketParams)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .filter_map(|f| {
            let cfg = RunConfig::load(&f).unwrap();
            let m = cfg.market.as_ref()?.params().unwrap();
            Some((f.file_stem().unwrap().to_string_lossy().into_owned(), m))
        })
        .collect()
}

fn ladder_convergence() -> Outcome {
    // the ladder asserts x'C(l, t)x nondecreasing at every grid time for each
    // probe direction, to 1e-9 relative
    let ladder = LadderSpec { probes: 100, probe_seed: 5, ..LadderSpec::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut markets = shipped_markets();
    for k in 0..10 {
        let n = 1 + k % 4;
        markets.push((format!("random{k}"), random_market(n, &mut rng)));
    }
    let mut rungs = Vec::new();
    for (name, p) in &markets {
        let d = p.derive().unwrap();
        match principal_solution(p, &d, &GridSpec::default(), &ladder) {
            Ok(path) => {
                let probes: Vec<f64> = path.ladder.iter().map(|r| r.probe_value).collect();
                if probes.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-9)) {
                    return Outcome::new(false, format!("{name}: probe values fall along the ladder"));
                }
                rungs.push(format!("{name} {}", path.ladder.len()));
            }
            Err(e) => return Outcome::new(false, format!("{name}: {e}")),
        }
    }
    Outcome::new(true, format!("rungs: {}", rungs.join(", ")))
}

fn monte_carlo_value() -> Outcome {
    let start = Instant::now();
    let p = scalar_case();
    let path = principal(&p, &GridSpec::default());
    let est = Engine::new(&path, &p, None, 4).unwrap().estimate(&[1.0], 0.0, 100_000, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let z = (est.total_mean - est.analytic_value) / est.total_std_error;
    let ok = z.abs() <= 3.0 && secs < 60.0;

    let q = MarketParams::scalar(1.0, 1.0, 6.0, 0.0, 1.0);
    let qpath = principal(&q, &GridSpec::default());
    let exact = Engine::new(&qpath, &q, None, 4).unwrap().estimate(&[1.0], 0.0, 100_000, 1).unwrap();
    let e = rel(exact.total_mean, exact.analytic_value);
    let ok0 = exact.std_error == 0.0 && exact.total_std_error == 0.0 && e <= 1e-8;
    Outcome::new(
        ok && ok0,
        format!(
            "MC {:.5} +- {:.5} vs {:.5} (z = {z:.2}), {secs:.1} s; theta = 0: se {}, rel error {e:.1e}",
            est.total_mean, est.total_std_error, est.analytic_value, exact.std_error
        ),
    )
}

fn figure_reproduction() -> Outcome {
    let (r, fig) = check_correlation_figure(81, &GridSpec::default(), &LadderSpec::default());
    let mut o = Outcome::from_reports(&[r.clone()]);
    if let Some(f) = fig {
        let last = f.rhos.len() - 1;
        o.detail = format!(
            "v(-1) = {:.4}, v(1) = {:.4}, max {:.4} at rho = {:.3}; eta2 = {:.4} / {} / {:.4}",
            f.value[0],
            f.value[last],
            f.max_value,
            f.argmax,
            f.eta2[0],
            f.eta2[last / 2],
            f.eta2[last]
        );
        if !r.passed {
            o.detail.push_str(&format!("; {}", r.witness.unwrap_or_default()));
        }
    }
    o
}

fn optimality_dominance() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let cases: [(&str, MarketParams, Vec<f64>); 3] =
        [("scalar_case", scalar_case(), vec![1.0]), ("pair_case (1,1)", pair_case(0.9), vec![1.0, 1.0]), ("pair_case (1,-1)", pair_case(0.9), vec![1.0, -1.0])];
    for (name, p, x0) in cases {
        let path = principal(&p, &GridSpec::default());
        let opt = Engine::new(&path, &p, None, 4).unwrap();
        let mut worst = f64::INFINITY;
        for pert in Perturbation::families(p.horizon) {
            let other = Engine::new(&path, &p, Some(pert), 4).unwrap();
            let c = compare_strategies(&opt, &other, &x0, 0.0, 10_000, 7).unwrap();
            let pooled = c.optimal.total_std_error.hypot(c.perturbed.total_std_error);
            let ok = c.mean_difference >= -3.0 * c.difference_std_error && c.mean_difference >= -3.0 * pooled;
            pass &= ok;
            worst = worst.min(c.z_score());
            if !ok {
                lines.push(format!("{name} {}: difference {:.3e} +- {:.3e}", pert.tag(), c.mean_difference, c.difference_std_error));
            }
        }
        lines.push(format!("{name} min z {worst:.1}"));
    }
    Outcome::new(pass, lines.join(", "))
}

fn statics_and_structure() -> Outcome {
    let grid = GridSpec::default();
    let ladder = LadderSpec::default();
    let p = pair_case(0.9);
    let path = principal(&p, &grid);
    let scenarios = [
        StructureScenario::new(vec![1.0, -1.0], 1000, 11),
        StructureScenario::new(vec![1.0, 1.0], 1000, 11),
        StructureScenario::new(vec![-0.5, 1.5], 250, 11),
        StructureScenario::new(vec![-1.0, -0.4], 250, 11),
    ];
    let q = pair_case(0.0);
    let qpath = principal(&q, &grid);
    let reports = [
        check_single_asset_statics(&SingleAssetSweep::default()),
        check_two_asset_statics(&TwoAssetSweep::default()),
        check_cross_impact(&[(0.2, 0.1), (0.2, 0.3), (0.2, 0.6), (0.9, 0.5), (-0.2, -0.3)], &grid, &ladder, 200, 12),
        check_trajectory_structure(&p, &path, &scenarios, 1),
        check_trajectory_structure(&q, &qpath, &[StructureScenario::new(vec![1.0, 1.0], 100, 13)], 1),
    ];
    Outcome::from_reports(&reports)
}

fn riccati_comparison() -> Outcome {
    let grid = GridSpec::default();
    let mut reports = vec![riccati_battery(100, 1000, 21), scalar_riccati_bound_battery(100, 1000, 22)];
    for p in [scalar_case(), pair_case(0.9), MarketParams::two_asset([1.0, 2.0], 0.4, [1.0, 0.5], -0.3, 2.0, [1.0, 0.0], 1.0)] {
        let d = p.derive().unwrap();
        let l = 4.0 * (2.0 * d.l0).max(1.0);
        match check_value_bounds_construction(&p, &d, l, &grid) {
            Ok(r) => reports.push(r),
            Err(e) => return Outcome::new(false, e.to_string()),
        }
    }
    Outcome::from_reports(&reports)
}

fn liquidation_bound() -> Outcome {
    let mut reports = Vec::new();
    for (p, x0) in [(scalar_case(), vec![1.0]), (pair_case(0.9), vec![1.0, 1.0]), (pair_case(0.9), vec![1.0, -1.0])] {
        let d = p.derive().unwrap();
        let path = principal(&p, &GridSpec::default());
        let engine = Engine::new(&path, &p, None, 4).unwrap();
        let mut r = CheckReport::new("liquidation_envelope", 0.0);
        for k in 0..1000u64 {
            let schedule = draw_jumps(&p.theta, 0.0, p.horizon, 500 + k);
            let traj = engine.trajectory(&x0, 0.0, &schedule, Some(500 + k)).unwrap();
            let c = liquidation_check(&traj, &p, &d);
            if r.samples == 0 {
                r.tolerance = c.tolerance;
            }
            r.absorb(&c);
        }
        reports.push(r);
    }
    let mut o = Outcome::from_reports(&reports);
    let margin = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    o.detail = format!("{}; min relative margin {margin:.2e}", o.detail);
    o
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed-form equivalence", closed_form_equivalence),
        ("sandwich bounds", sandwich_bounds),
        ("matrix inequality battery", matrix_battery),
        ("principal ladder monotone convergence", ladder_convergence),
        ("Monte Carlo vs analytic value", monte_carlo_value),
        ("correlation figure reproduction", figure_reproduction),
        ("optimality dominance", optimality_dominance),
        ("comparative statics and structure", statics_and_structure),
        ("Riccati comparison", riccati_comparison),
        ("liquidation envelope", liquidation_bound),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:2} {status} {name} ({:.1} s): {}", k + 1, start.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
