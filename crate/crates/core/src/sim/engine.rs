use nalgebra::DMatrix;

use crate::linalg::{mat_vec_into, mul_into, quad_flat, to_flat};
use crate::market::MarketParams;
use crate::solver::{bounds_limit, Penalty, SolverError, ValuePath};

use super::{JumpSchedule, SimError};

/// Deviation from the optimal feedback, used as a comparator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `xi -> f xi*`.
    ScaleXi(f64),
    /// `eta -> f eta*`.
    ScaleEta(f64),
    /// `xi(t) = Lambda^-1 C(t + dt) x`, clamped at the end of the path.
    ShiftXi(f64),
}

impl Perturbation {
    pub fn tag(&self) -> String {
        match self {
            Perturbation::ScaleXi(f) => format!("xi*{f}"),
            Perturbation::ScaleEta(f) => format!("eta*{f}"),
            Perturbation::ShiftXi(dt) => format!("xi_shift{dt}"),
        }
    }

    /// The five standard comparator families for a horizon `T`.
    pub fn families(horizon: f64) -> [Perturbation; 5] {
        [
            Perturbation::ScaleXi(0.8),
            Perturbation::ScaleXi(1.2),
            Perturbation::ScaleEta(0.0),
            Perturbation::ScaleEta(0.5),
            Perturbation::ShiftXi(0.05 * horizon),
        ]
    }
}

pub fn perturbation_tag(p: Option<&Perturbation>) -> String {
    p.map_or_else(|| "optimal".to_string(), Perturbation::tag)
}

/// One simulated state at time `t`. `jump_asset` marks the row recorded just
/// before that asset's dark-pool order executes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub jump_asset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    pub asset: usize,
    pub eta: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

/// A simulated path of the controlled position.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpRecord>,
    pub cost_impact: f64,
    pub cost_risk: f64,
    /// `l |X(T)|^2` for a finite penalty, 0 otherwise.
    pub terminal_penalty: f64,
    /// `X^T C X` at the end of a principal path: the optimal cost of the
    /// unsimulated remainder.
    pub cost_to_go: f64,
    /// `q X^T Lambda X` at the end of a principal path; bounds `cost_to_go`.
    pub remainder_bound: f64,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub end_time: f64,
    pub x_end: Vec<f64>,
    pub seed: Option<u64>,
    pub tag: String,
}

impl Trajectory {
    /// `cost_impact + cost_risk + terminal_penalty`.
    pub fn running_cost(&self) -> f64 {
        self.cost_impact + self.cost_risk + self.terminal_penalty
    }

    /// Running cost plus the remainder valued at the optimum.
    pub fn total_cost(&self) -> f64 {
        self.running_cost() + self.cost_to_go
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let n = self.x0.len();
        let mut s = String::from("t");
        for i in 1..=n {
            let _ = write!(s, ",x_{i}");
        }
        for i in 1..=n {
            let _ = write!(s, ",xi_{i}");
        }
        s.push_str(",jump_asset\n");
        for row in &self.samples {
            let _ = write!(s, "{:.16e}", row.t);
            for v in row.x.iter().chain(&row.xi) {
                let _ = write!(s, ",{v:.16e}");
            }
            let tag = row.jump_asset.map_or(-1, |i| i as i64 + 1);
            let _ = writeln!(s, ",{tag}");
        }
        s
    }
}

/// Per-path costs without the sample record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathCosts {
    pub impact: f64,
    pub risk: f64,
    pub terminal_penalty: f64,
    pub cost_to_go: f64,
    pub remainder_bound: f64,
}

impl PathCosts {
    pub fn running(&self) -> f64 {
        self.impact + self.risk + self.terminal_penalty
    }

    pub fn total(&self) -> f64 {
        self.running() + self.cost_to_go
    }
}

/// Controls at one time: `xi = A x`, `eta = G x`, impact rate `x^T K x`.
#[derive(Debug, Clone)]
struct Ctrl {
    a: Vec<f64>,
    g: Vec<f64>,
    k: Vec<f64>,
}

impl Ctrl {
    fn zeros(nn: usize) -> Self {
        Self { a: vec![0.0; nn], g: vec![0.0; nn], k: vec![0.0; nn] }
    }
}

#[derive(Clone, Copy)]
enum Src {
    Table(usize),
    Buf(usize),
}

/// Reusable per-thread buffers.
pub struct Workspace {
    ctrl: [Ctrl; 3],
    st: State,
}

struct State {
    c: Vec<f64>,
    cs: Vec<f64>,
    tmp: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    k: [Vec<f64>; 4],
    xm: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        let nn = n * n;
        let v = vec![0.0; n];
        Self {
            ctrl: [Ctrl::zeros(nn), Ctrl::zeros(nn), Ctrl::zeros(nn)],
            st: State {
                c: vec![0.0; nn],
                cs: vec![0.0; nn],
                tmp: vec![0.0; nn],
                x: v.clone(),
                y: v.clone(),
                k: [v.clone(), v.clone(), v.clone(), v.clone()],
                xm: v,
            },
        }
    }
}

/// Tabulated feedback on the path grid refined by `divisor`, with RK4 flow
/// and Simpson cost quadrature between nodes.
pub struct Engine<'a> {
    path: &'a ValuePath,
    n: usize,
    perturbation: Option<Perturbation>,
    lambda: Vec<f64>,
    lambda_inv: Vec<f64>,
    alpha_sigma: Vec<f64>,
    mask: Vec<bool>,
    theta: Vec<f64>,
    times: Vec<f64>,
    table: Vec<f64>,
    /// Per full step: RK4 transition, then impact and risk cost forms.
    steps: Vec<f64>,
    c_end: Vec<f64>,
    q_end: f64,
}

impl<'a> Engine<'a> {
    pub fn new(
        path: &'a ValuePath,
        params: &MarketParams,
        perturbation: Option<Perturbation>,
        divisor: usize,
    ) -> Result<Self, SimError> {
        let n = params.n();
        if path.n() != n {
            return Err(SimError::DimensionMismatch { expected: path.n(), found: n });
        }
        let derived = params.derive().map_err(SolverError::from)?;
        let divisor = divisor.max(1);
        let grid = path.grid();
        let mut times = Vec::with_capacity(2 * divisor * grid.len());
        for w in grid.windows(2) {
            let h = (w[1] - w[0]) / (2 * divisor) as f64;
            for k in 0..2 * divisor {
                times.push(w[0] + k as f64 * h);
            }
        }
        times.push(path.end());
        let nn = n * n;
        let q_end = match path.penalty {
            Penalty::Infinite => bounds_limit(params, &derived, path.end())?.q,
            Penalty::Finite(_) => 0.0,
        };
        let mut engine = Self {
            path,
            n,
            perturbation,
            lambda: to_flat(&params.lambda),
            lambda_inv: to_flat(&derived.lambda_inv),
            alpha_sigma: to_flat(&(&params.sigma * params.alpha)),
            mask: params.theta.iter().map(|&t| t > 0.0).collect(),
            theta: params.theta.clone(),
            times: Vec::new(),
            table: Vec::new(),
            steps: Vec::new(),
            c_end: path.knot_flat(path.len() - 1).to_vec(),
            q_end,
        };
        let mut ws = Workspace::new(n);
        let mut table = Vec::with_capacity(3 * nn * times.len());
        for &t in &times {
            engine.controls_at(t, &mut ws, 0)?;
            let c = &ws.ctrl[0];
            table.extend_from_slice(&c.a);
            table.extend_from_slice(&c.g);
            table.extend_from_slice(&c.k);
        }
        engine.table = table;
        engine.times = times;
        engine.steps = engine.step_table();
        Ok(engine)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn path(&self) -> &ValuePath {
        self.path
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref()
    }

    /// Controls at an arbitrary `t` into buffer `slot`.
    fn controls_at(&self, t: f64, ws: &mut Workspace, slot: usize) -> Result<(), SimError> {
        let n = self.n;
        let Workspace { ctrl, st } = ws;
        self.path.interpolate_into(t, &mut st.c)?;
        let (mut fx, mut fe) = (1.0, 1.0);
        match self.perturbation {
            Some(Perturbation::ScaleXi(f)) => fx = f,
            Some(Perturbation::ScaleEta(f)) => fe = f,
            Some(Perturbation::ShiftXi(dt)) => {
                let ts = (t + dt).min(self.path.end());
                self.path.interpolate_into(ts, &mut st.cs)?;
            }
            None => {}
        }
        let shifted = matches!(self.perturbation, Some(Perturbation::ShiftXi(_)));
        let ctrl = &mut ctrl[slot];
        mul_into(n, &self.lambda_inv, if shifted { &st.cs } else { &st.c }, &mut ctrl.a);
        if fx != 1.0 {
            ctrl.a.iter_mut().for_each(|v| *v *= fx);
        }
        for i in 0..n {
            let cii = st.c[i * n + i];
            for j in 0..n {
                ctrl.g[i * n + j] = if self.mask[i] { fe * (st.c[i * n + j] / cii) } else { 0.0 };
            }
        }
        mul_into(n, &self.lambda, &ctrl.a, &mut st.tmp);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += ctrl.a[k * n + i] * st.tmp[k * n + j];
                }
                ctrl.k[i * n + j] = s;
            }
        }
        Ok(())
    }

    /// Exact matrix form of one on-node RK4 + Simpson step: with `x1 = P x0`
    /// and Hermite midpoint `xm = M x0`, both cost integrals are quadratic
    /// forms in `x0`.
    fn step_table(&self) -> Vec<f64> {
        let n = self.n;
        let nn = n * n;
        let mat = |src: Src, which: usize| {
            let dummy = [Ctrl::zeros(0), Ctrl::zeros(0), Ctrl::zeros(0)];
            let (a, g, k) = self.slices(&dummy, src);
            DMatrix::from_row_slice(n, n, [a, g, k][which])
        };
        let id = DMatrix::<f64>::identity(n, n);
        let risk = DMatrix::from_row_slice(n, n, &self.alpha_sigma);
        let mut out = Vec::with_capacity(3 * nn * self.times.len() / 2);
        let mut node = 0;
        while node + 2 < self.times.len() {
            let h = self.times[node + 2] - self.times[node];
            let (a0, am, a1) = (mat(Src::Table(node), 0), mat(Src::Table(node + 1), 0), mat(Src::Table(node + 2), 0));
            let (k0, km, k1) = (mat(Src::Table(node), 2), mat(Src::Table(node + 1), 2), mat(Src::Table(node + 2), 2));
            let s1 = -&a0;
            let s2 = -&am * (&id + &s1 * (0.5 * h));
            let s3 = -&am * (&id + &s2 * (0.5 * h));
            let s4 = -&a1 * (&id + &s3 * h);
            let phi = &id + (s1 + s2 * 2.0 + s3 * 2.0 + s4) * (h / 6.0);
            let mid = (&id + &phi) * 0.5 + (-&a0 + &a1 * &phi) * (h / 8.0);
            let quad = |k: &DMatrix<f64>, km: &DMatrix<f64>, k1: &DMatrix<f64>| {
                (k + mid.transpose() * km * &mid * 4.0 + phi.transpose() * k1 * &phi) * (h / 6.0)
            };
            let qi = quad(&k0, &km, &k1);
            let qr = quad(&risk, &risk, &risk);
            for m in [&phi, &qi, &qr] {
                for i in 0..n {
                    for j in 0..n {
                        out.push(m[(i, j)]);
                    }
                }
            }
            node += 2;
        }
        out
    }

    fn slices<'s>(&'s self, ctrl: &'s [Ctrl; 3], src: Src) -> (&'s [f64], &'s [f64], &'s [f64]) {
        let nn = self.n * self.n;
        match src {
            Src::Table(i) => {
                let b = &self.table[3 * nn * i..3 * nn * (i + 1)];
                (&b[..nn], &b[nn..2 * nn], &b[2 * nn..])
            }
            Src::Buf(s) => (&ctrl[s].a, &ctrl[s].g, &ctrl[s].k),
        }
    }

    /// RK4 step of `x' = -A x` over `[0, h]` with Simpson costs.
    fn advance(&self, ws: &mut Workspace, h: f64, src: [Src; 3], costs: &mut PathCosts) {
        let n = self.n;
        let Workspace { ctrl, st } = ws;
        let (a0, _, k0) = self.slices(ctrl, src[0]);
        let (am, _, km) = self.slices(ctrl, src[1]);
        let (a1, _, k1m) = self.slices(ctrl, src[2]);
        let State { x, y, k, xm, .. } = st;
        let neg_mv = |m: &[f64], v: &[f64], out: &mut [f64]| {
            mat_vec_into(n, m, v, out);
            out.iter_mut().for_each(|o| *o = -*o);
        };
        neg_mv(a0, x, &mut k[0]);
        for i in 0..n {
            y[i] = x[i] + 0.5 * h * k[0][i];
        }
        neg_mv(am, y, &mut k[1]);
        for i in 0..n {
            y[i] = x[i] + 0.5 * h * k[1][i];
        }
        neg_mv(am, y, &mut k[2]);
        for i in 0..n {
            y[i] = x[i] + h * k[2][i];
        }
        neg_mv(a1, y, &mut k[3]);
        for i in 0..n {
            y[i] = x[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        // y = x(t + h); k[1] <- x'(t + h)
        neg_mv(a1, y, &mut k[1]);
        for i in 0..n {
            xm[i] = 0.5 * (x[i] + y[i]) + h / 8.0 * (k[0][i] - k[1][i]);
        }
        let imp = quad_flat(n, k0, x) + 4.0 * quad_flat(n, km, xm) + quad_flat(n, k1m, y);
        let risk = quad_flat(n, &self.alpha_sigma, x)
            + 4.0 * quad_flat(n, &self.alpha_sigma, xm)
            + quad_flat(n, &self.alpha_sigma, y);
        costs.impact += h / 6.0 * imp;
        costs.risk += h / 6.0 * risk;
        std::mem::swap(x, y);
    }

    fn record(&self, ws: &Workspace, src: Src, t: f64, jump: Option<usize>, rec: &mut Option<&mut Vec<Sample>>) {
        if let Some(out) = rec.as_deref_mut() {
            let n = self.n;
            let (a, _, _) = self.slices(&ws.ctrl, src);
            let x = &ws.st.x;
            let xi = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect();
            out.push(Sample { t, x: x.clone(), xi, jump_asset: jump });
        }
    }

    /// Runs one path; fills `samples`/`jumps` when given.
    pub(crate) fn run(
        &self,
        ws: &mut Workspace,
        x0: &[f64],
        t0: f64,
        schedule: &JumpSchedule,
        mut samples: Option<&mut Vec<Sample>>,
        mut jumps: Option<&mut Vec<JumpRecord>>,
    ) -> Result<(PathCosts, f64), SimError> {
        let n = self.n;
        if x0.len() != n {
            return Err(SimError::DimensionMismatch { expected: n, found: x0.len() });
        }
        let end = self.path.end();
        if !(t0 >= self.path.start() && t0 <= end) {
            return Err(SolverError::OutOfGridRange { t: t0, start: self.path.start(), end }.into());
        }
        if let Some(&(_, i)) = schedule.events.iter().find(|e| e.1 >= n) {
            return Err(SimError::BadSchedule(format!("asset index {i} for {n} assets")));
        }
        ws.st.x.copy_from_slice(x0);
        let mut costs = PathCosts::default();
        let last = self.times.len() - 1;
        // first even node at or after t0
        let mut node = 2 * (self.times.partition_point(|&s| s < t0) / 2);
        while node < last && self.times[node] < t0 {
            node += 2;
        }
        node = node.min(last);
        let mut t = t0;
        let mut on_node = self.times[node] == t0;
        let mut events = schedule.events.iter().filter(|e| e.0 > t0 && e.0 <= end).peekable();
        let mut zero = ws.st.x.iter().all(|&v| v == 0.0);

        if on_node {
            self.record(ws, Src::Table(node), t, None, &mut samples);
        } else {
            self.controls_at(t, ws, 0)?;
            self.record(ws, Src::Buf(0), t, None, &mut samples);
        }

        while !zero && (t < end) {
            let target = if on_node { (node + 2).min(last) } else { node };
            let tb = self.times[target];
            if let Some(&&(tau, asset)) = events.peek().filter(|e| e.0 <= tb) {
                events.next();
                // t -> tau, then the fill
                let a_src = if on_node { Src::Table(node) } else { self.controls_at(t, ws, 0).map(|_| Src::Buf(0))? };
                self.controls_at(0.5 * (t + tau), ws, 1)?;
                self.controls_at(tau, ws, 2)?;
                if tau > t {
                    self.advance(ws, tau - t, [a_src, Src::Buf(1), Src::Buf(2)], &mut costs);
                }
                self.check_finite(ws, tau)?;
                self.record(ws, Src::Buf(2), tau, Some(asset), &mut samples);
                let before = ws.st.x.clone();
                let (_, g, _) = self.slices(&ws.ctrl, Src::Buf(2));
                let eta: f64 = (0..n).map(|j| g[asset * n + j] * before[j]).sum();
                ws.st.x[asset] = before[asset] - eta;
                if let Some(j) = jumps.as_deref_mut() {
                    j.push(JumpRecord { t: tau, asset, eta, before, after: ws.st.x.clone() });
                }
                self.record(ws, Src::Buf(2), tau, None, &mut samples);
                t = tau;
                node = target;
                on_node = tau == tb;
                zero = ws.st.x.iter().all(|&v| v == 0.0);
                continue;
            }
            if on_node && samples.is_none() {
                // run every full step that ends before the next fill
                let next = events.peek().map_or(f64::INFINITY, |e| e.0);
                let j = self.times.partition_point(|&s| s < next).min(last + 1);
                let stop = if j == 0 { 0 } else { 2 * ((j - 1) / 2) };
                if stop > node {
                    let x = &mut ws.st.x;
                    let (a, b) = (node / 2, stop / 2);
                    let c = &mut costs;
                    match n {
                        1 => block::<1>(&self.steps, a, b, x, c),
                        2 => block::<2>(&self.steps, a, b, x, c),
                        3 => block::<3>(&self.steps, a, b, x, c),
                        _ => block_dyn(n, &self.steps, a, b, x, c, &mut ws.st.y),
                    }
                    node = stop;
                    t = self.times[node];
                    self.check_finite(ws, t)?;
                    zero = ws.st.x.iter().all(|&v| v == 0.0);
                    continue;
                }
            }
            if on_node {
                let nn = n * n;
                let b = &self.steps[3 * nn * (node / 2)..3 * nn * (node / 2 + 1)];
                let x = &mut ws.st.x;
                costs.impact += quad_flat(n, &b[nn..2 * nn], x);
                costs.risk += quad_flat(n, &b[2 * nn..], x);
                mat_vec_into(n, &b[..nn], x, &mut ws.st.y);
                std::mem::swap(&mut ws.st.x, &mut ws.st.y);
            } else {
                self.controls_at(t, ws, 0)?;
                self.controls_at(0.5 * (t + tb), ws, 1)?;
                self.advance(ws, tb - t, [Src::Buf(0), Src::Buf(1), Src::Table(target)], &mut costs);
            }
            t = tb;
            node = target;
            on_node = true;
            self.check_finite(ws, t)?;
            self.record(ws, Src::Table(node), t, None, &mut samples);
            zero = ws.st.x.iter().all(|&v| v == 0.0);
        }

        match self.path.penalty {
            Penalty::Finite(l) => {
                costs.terminal_penalty = l * ws.st.x.iter().map(|v| v * v).sum::<f64>();
            }
            Penalty::Infinite => {
                costs.cost_to_go = quad_flat(n, &self.c_end, &ws.st.x);
                costs.remainder_bound = self.q_end * quad_flat(n, &self.lambda, &ws.st.x);
            }
        }
        Ok((costs, if zero { t } else { end }))
    }

    fn check_finite(&self, ws: &Workspace, t: f64) -> Result<(), SimError> {
        if ws.st.x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::NonFiniteState { t })
        }
    }

    /// Full trajectory record for one schedule.
    pub fn trajectory(
        &self,
        x0: &[f64],
        t0: f64,
        schedule: &JumpSchedule,
        seed: Option<u64>,
    ) -> Result<Trajectory, SimError> {
        let mut ws = Workspace::new(self.n);
        let mut samples = Vec::new();
        let mut jumps = Vec::new();
        let (costs, _) = self.run(&mut ws, x0, t0, schedule, Some(&mut samples), Some(&mut jumps))?;
        Ok(Trajectory {
            samples,
            jumps,
            cost_impact: costs.impact,
            cost_risk: costs.risk,
            terminal_penalty: costs.terminal_penalty,
            cost_to_go: costs.cost_to_go,
            remainder_bound: costs.remainder_bound,
            t0,
            x0: x0.to_vec(),
            end_time: self.path.end(),
            x_end: ws.st.x.clone(),
            seed,
            tag: perturbation_tag(self.perturbation.as_ref()),
        })
    }

    /// Costs only.
    pub fn costs(
        &self,
        ws: &mut Workspace,
        x0: &[f64],
        t0: f64,
        schedule: &JumpSchedule,
    ) -> Result<PathCosts, SimError> {
        self.run(ws, x0, t0, schedule, None, None).map(|r| r.0)
    }
}

/// Steps `from..to` of the transition table for a fixed dimension.
fn block<const N: usize>(steps: &[f64], from: usize, to: usize, x: &mut [f64], costs: &mut PathCosts) {
    let nn = N * N;
    let mut v = [0.0; N];
    v.copy_from_slice(x);
    for b in steps[3 * nn * from..3 * nn * to].chunks_exact(3 * nn) {
        let (p, q) = b.split_at(nn);
        let (qi, qr) = q.split_at(nn);
        let (mut ci, mut cr) = (0.0, 0.0);
        let mut w = [0.0; N];
        for i in 0..N {
            let (mut ri, mut rr, mut rp) = (0.0, 0.0, 0.0);
            for j in 0..N {
                ri += qi[i * N + j] * v[j];
                rr += qr[i * N + j] * v[j];
                rp += p[i * N + j] * v[j];
            }
            ci += v[i] * ri;
            cr += v[i] * rr;
            w[i] = rp;
        }
        costs.impact += ci;
        costs.risk += cr;
        v = w;
    }
    x.copy_from_slice(&v);
}

fn block_dyn(n: usize, steps: &[f64], from: usize, to: usize, x: &mut [f64], costs: &mut PathCosts, y: &mut [f64]) {
    let nn = n * n;
    for b in steps[3 * nn * from..3 * nn * to].chunks_exact(3 * nn) {
        costs.impact += quad_flat(n, &b[nn..2 * nn], x);
        costs.risk += quad_flat(n, &b[2 * nn..], x);
        mat_vec_into(n, &b[..nn], x, y);
        x.copy_from_slice(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{draw_jumps, monte_carlo_value, simulate, DEFAULT_STEP_DIVISOR};
    use crate::solver::{principal_solution, GridSpec, LadderSpec, SingleAsset};

    fn principal(p: &MarketParams) -> ValuePath {
        let d = p.derive().unwrap();
        principal_solution(p, &d, &GridSpec::default(), &LadderSpec::default()).unwrap()
    }

    #[test]
    fn uniform_liquidation_without_pool_or_risk() {
        let p = MarketParams::scalar(1.0, 0.0, 0.0, 0.0, 1.0);
        let path = principal(&p);
        let tr = simulate(&path, &p, &[1.0], 0.0, &JumpSchedule::empty(), DEFAULT_STEP_DIVISOR).unwrap();
        for s in &tr.samples {
            assert!((s.x[0] - (1.0 - s.t)).abs() < 1e-6, "t = {}", s.t);
        }
        assert!((tr.cost_impact - 0.999).abs() < 1e-6);
        assert_eq!(tr.cost_risk, 0.0);
        assert!((tr.total_cost() - 1.0).abs() < 1e-6);
        assert!(tr.remainder_bound >= tr.cost_to_go - 1e-12);
    }

    #[test]
    fn no_fill_path_follows_closed_form() {
        let p = MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0);
        let path = principal(&p);
        let a = SingleAsset::new(1.0, 1.0, 6.0, 4.0, 1.0);
        let tr = simulate(&path, &p, &[1.0], 0.0, &JumpSchedule::empty(), DEFAULT_STEP_DIVISOR).unwrap();
        let worst = tr
            .samples
            .iter()
            .map(|s| (s.x[0] - a.trajectory_no_fill(s.t, 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn fill_stops_trading() {
        let p = MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0);
        let path = principal(&p);
        let sched = JumpSchedule::from_events(vec![(0.3, 0)]);
        let tr = simulate(&path, &p, &[1.0], 0.0, &sched, DEFAULT_STEP_DIVISOR).unwrap();
        assert_eq!(tr.jumps.len(), 1);
        assert_eq!(tr.jumps[0].after, vec![0.0]);
        let after: Vec<_> = tr.samples.iter().filter(|s| s.t >= 0.3 && s.jump_asset.is_none()).collect();
        assert!(!after.is_empty());
        assert!(after.iter().all(|s| s.x[0] == 0.0 && s.xi[0] == 0.0));
        assert_eq!(tr.x_end, vec![0.0]);
        assert_eq!(tr.cost_to_go, 0.0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let p = MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], 0.9, 4.0, [0.5, 3.0], 1.0);
        let path = principal(&p);
        let sched = draw_jumps(&p.theta, 0.0, 1.0, 11);
        let a = simulate(&path, &p, &[1.0, -1.0], 0.0, &sched, 4).unwrap();
        let b = simulate(&path, &p, &[1.0, -1.0], 0.0, &sched, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn off_grid_start_and_csv() {
        let p = MarketParams::scalar(1.0, 0.0, 0.0, 0.0, 1.0);
        let path = principal(&p);
        let sched = JumpSchedule::empty();
        let tr = simulate(&path, &p, &[2.0], 0.123_456_7, &sched, 2).unwrap();
        let expect = 2.0 * (1.0 - 0.999) / (1.0 - 0.123_456_7);
        assert!((tr.x_end[0] - expect).abs() < 1e-6);
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x_1,xi_1,jump_asset\n"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",-1"));
        assert!(simulate(&path, &p, &[2.0], 0.9999, &sched, 2).is_err());
    }

    #[test]
    fn pre_jump_rows_are_tagged() {
        let p = MarketParams::two_asset([1.0, 1.0], 0.0, [1.0, 1.0], 0.5, 1.0, [1.0, 1.0], 1.0);
        let path = principal(&p);
        let sched = JumpSchedule::from_events(vec![(0.25, 1)]);
        let tr = simulate(&path, &p, &[1.0, 1.0], 0.0, &sched, 4).unwrap();
        let k = tr.samples.iter().position(|s| s.jump_asset == Some(1)).unwrap();
        assert_eq!(tr.samples[k].t, 0.25);
        assert_eq!(tr.samples[k + 1].t, 0.25);
        assert_eq!(tr.samples[k + 1].x, tr.jumps[0].after);
        assert!(tr.to_csv().lines().any(|l| l.ends_with(",2")));
    }

    #[test]
    fn deterministic_case_has_zero_variance() {
        let p = MarketParams::scalar(1.0, 0.0, 0.0, 0.0, 1.0);
        let path = principal(&p);
        let est = monte_carlo_value(&path, &p, &[1.0], 0.0, 64, 1, None).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert!((est.total_mean - 1.0).abs() < 1e-6);
        assert!((est.analytic_value - 1.0).abs() < 1e-6);
    }
}
