use rayon::prelude::*;

use crate::linalg::Vector;
use crate::market::MarketParams;
use crate::solver::{principal_solution, GridSpec, LadderSpec, SolverError};
use crate::strategy::action_from_matrix;

use super::CheckReport;

/// Relative tolerance for values read off plotted axes.
pub const FIGURE_TOL: f64 = 0.02;

/// Value and order curves over the correlation for `x = (1, 1)` at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFigure {
    pub rhos: Vec<f64>,
    pub value: Vec<f64>,
    /// `eta_2` for the plotted asset order (`lambda = (0.2, 3)`, `theta = (5, 0.5)`).
    pub eta2: Vec<f64>,
    /// `eta_2` with the assets in listed order (`lambda = (3, 0.2)`, `theta = (0.5, 5)`).
    pub eta2_listed: Vec<f64>,
    pub max_value: f64,
    pub argmax: f64,
}

fn market(rho: f64, swapped: bool) -> MarketParams {
    if swapped {
        MarketParams::two_asset([0.2, 3.0], 0.0, [1.0, 1.0], rho, 4.0, [5.0, 0.5], 1.0)
    } else {
        MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], rho, 4.0, [0.5, 5.0], 1.0)
    }
}

/// `(v(0, x), eta(0, x))` for `x = (1, 1)`.
fn point(p: &MarketParams, grid: &GridSpec, ladder: &LadderSpec) -> Result<(f64, Vector), SolverError> {
    let d = p.derive()?;
    let path = principal_solution(p, &d, grid, ladder)?;
    let x = Vector::from_element(2, 1.0);
    let c = path.evaluate(0.0)?;
    let a = action_from_matrix(p, &c, 0.0, &x);
    Ok((x.dot(&(&c * &x)), a.eta))
}

/// Evaluates the correlation curves on `points` equally spaced correlations
/// in `[-1, 1]` and compares them with the plotted axis labels.
pub fn check_correlation_figure(points: usize, grid: &GridSpec, ladder: &LadderSpec) -> (CheckReport, Option<CorrelationFigure>) {
    let mut r = CheckReport::new("correlation_figure", 0.0);
    let points = points.max(3) | 1;
    let half = (points / 2) as f64;
    let rhos: Vec<f64> = (0..points).map(|k| (k as f64 - half) / half).collect();
    let rows: Result<Vec<_>, SolverError> = rhos
        .par_iter()
        .map(|&rho| {
            let (v, eta) = point(&market(rho, true), grid, ladder)?;
            let (_, eta_c) = point(&market(rho, false), grid, ladder)?;
            Ok((v, eta[1], eta_c[1], eta_c[0]))
        })
        .collect();
    let rows = match rows {
        Ok(rows) => rows,
        Err(e) => {
            r.fail(e.to_string());
            return (r, None);
        }
    };
    let value: Vec<f64> = rows.iter().map(|x| x.0).collect();
    let eta2: Vec<f64> = rows.iter().map(|x| x.1).collect();
    let eta2_listed: Vec<f64> = rows.iter().map(|x| x.2).collect();

    // parabolic refinement of the grid maximum
    let k = (0..points).max_by(|&a, &b| value[a].total_cmp(&value[b])).unwrap_or(0);
    let (mut max_value, mut argmax) = (value[k], rhos[k]);
    if k > 0 && k + 1 < points {
        let (a, b, c) = (value[k - 1], value[k], value[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let s = 0.5 * (a - c) / denom;
            let h = rhos[k + 1] - rhos[k];
            argmax = rhos[k] + s * h;
            max_value = b - 0.25 * (a - c) * s;
        }
    }

    let rel = |got: f64, want: f64| FIGURE_TOL - (got / want - 1.0).abs();
    let last = points - 1;
    let mid = points / 2;
    r.record(rel(value[0], 2.44), || format!("v(0, (1, 1)) at rho = -1 is {:.4}, label 2.44", value[0]));
    r.record(rel(value[last], 4.19), || format!("v(0, (1, 1)) at rho = 1 is {:.4}, label 4.19", value[last]));
    r.record(rel(max_value, 4.32), || format!("max of v(0, (1, 1)) is {max_value:.4}, label 4.32"));
    r.expect(eta2[mid] == 1.0, || format!("eta2 at rho = 0 is {:.17}, expected exactly 1", eta2[mid]));
    r.record(rel(eta2[0], 0.84), || format!("eta2 at rho = -1 is {:.4}, label 0.84", eta2[0]));
    r.record(rel(eta2[last], 1.16), || format!("eta2 at rho = 1 is {:.4}, label 1.16", eta2[last]));
    for (j, row) in rows.iter().enumerate() {
        // relabelling the assets maps the plotted eta2 onto the listed order's eta1
        let d = (row.1 - row.3).abs();
        r.record(1e-8 - d, || format!("relabelled eta differs by {d:e} at rho = {}", rhos[j]));
    }
    if !(argmax > 0.0 && argmax < 1.0) {
        r.note(format!("flag: maximum of v lies at rho = {argmax:.3}, expected strictly between 0 and 1"));
    }
    r.note(format!(
        "v(-1) = {:.4}, v(1) = {:.4}, max {max_value:.4} at rho = {argmax:.3}; eta2 = {:.4} / {:.4} / {:.4}; listed-order eta2 = {:.4} / {:.4}",
        value[0], value[last], eta2[0], eta2[mid], eta2[last], eta2_listed[0], eta2_listed[last]
    ));
    let fig = CorrelationFigure { rhos, value, eta2, eta2_listed, max_value, argmax };
    (r, Some(fig))
}
