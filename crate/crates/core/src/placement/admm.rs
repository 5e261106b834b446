//! ADMM iterations for the minimax placement problem.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::antenna_qp::solve_antenna_qp;
use super::epigraph::{update_epigraph_values, EpigraphRule};
use super::projection::project_ball;
use super::DecisionVector;
use crate::crb::{weighted_objective_for, CrbProblem};
use crate::error::{Error, Result};
use crate::optim::newton_cg::{newton_cg, NewtonCgConfig, NewtonCgReport, NewtonModel};
use crate::scene::{ApNode, Scene, TargetState, WaveformConfig};

/// Per-target objective values at a decision vector.
pub trait PlacementObjective {
    fn num_targets(&self) -> usize;
    fn evaluate(&self, z: &DecisionVector) -> Result<Vec<f64>>;
}

/// Weighted CRB over a fixed set of sampled targets.
#[derive(Debug, Clone)]
pub struct CrbObjective<'a> {
    pub wave: &'a WaveformConfig,
    pub samples: &'a [TargetState],
    pub alpha: f64,
    pub psi_p: f64,
    pub psi_a: f64,
}

impl PlacementObjective for CrbObjective<'_> {
    fn num_targets(&self) -> usize {
        self.samples.len()
    }

    fn evaluate(&self, z: &DecisionVector) -> Result<Vec<f64>> {
        weighted_objective_for(self.wave, z, self.samples, self.alpha, self.psi_p, self.psi_a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyAdapt {
    pub enabled: bool,
    pub mu: f64,
    pub tau_inc: f64,
    pub tau_dec: f64,
}

impl Default for PenaltyAdapt {
    fn default() -> Self {
        Self {
            enabled: true,
            mu: 10.0,
            tau_inc: 2.0,
            tau_dec: 2.0,
        }
    }
}

/// Rectangle and motion ranges from which placement targets are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleArea {
    pub min_m: [f64; 2],
    pub max_m: [f64; 2],
    pub count: usize,
    pub speed_mps: [f64; 2],
    pub heading_rad: [f64; 2],
}

impl Default for SampleArea {
    fn default() -> Self {
        Self {
            min_m: [125.0, 125.0],
            max_m: [225.0, 225.0],
            count: 16,
            speed_mps: [90.0, 120.0],
            heading_rad: [0.0, PI],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho: [f64; 3],
    /// Feasibility tolerances for the position, antenna and epigraph
    /// residual pairs.
    pub tolerances: [f64; 3],
    pub max_iters: usize,
    pub ball_radius_m: f64,
    pub antenna_budget: usize,
    pub alpha: f64,
    pub psi_p: f64,
    pub psi_a: f64,
    /// Replace `psi_p`, `psi_a` by reciprocal mean traces at the start point.
    pub normalize_psi: bool,
    pub penalty_adapt: PenaltyAdapt,
    pub epigraph: EpigraphRule,
    pub newton: NewtonCgConfig,
    pub fd_step_position_m: f64,
    pub fd_step_antenna: f64,
    /// Integer 1-swap/add refinement of the rounded allocation.
    pub local_search: bool,
    pub samples: SampleArea,
    pub rng_seed: u64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: [1e-2, 1e-2, 60.0],
            tolerances: [1e-4; 3],
            max_iters: 500,
            ball_radius_m: 10.0,
            antenna_budget: 32,
            alpha: 0.5,
            psi_p: 1.0,
            psi_a: 1.0,
            normalize_psi: true,
            penalty_adapt: PenaltyAdapt::default(),
            epigraph: EpigraphRule::Exact,
            newton: NewtonCgConfig::default(),
            fd_step_position_m: 1e-4,
            fd_step_antenna: 1e-3,
            local_search: true,
            samples: SampleArea::default(),
            rng_seed: 7,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = self
            .rho
            .iter()
            .chain(&self.tolerances)
            .chain([&self.ball_radius_m, &self.psi_p, &self.psi_a]);
        if pos.into_iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "penalties, tolerances, ball radius and psi weights must be positive".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let pa = &self.penalty_adapt;
        if !(pa.mu > 1.0 && pa.tau_inc > 1.0 && pa.tau_dec > 1.0) {
            return Err(Error::Config("penalty adaptation needs mu, tau_inc, tau_dec > 1".into()));
        }
        if !(self.fd_step_position_m > 0.0 && self.fd_step_antenna > 0.0) {
            return Err(Error::Config("finite-difference steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub zeta_p: f64,
    pub phi_p: f64,
    pub upsilon_p: f64,
    pub zeta_d: f64,
    pub phi_d: f64,
    pub upsilon_d: f64,
}

impl Residuals {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.zeta_p,
            self.phi_p,
            self.upsilon_p,
            self.zeta_d,
            self.phi_d,
            self.upsilon_d,
        ]
    }

    pub fn below(&self, tol: &[f64; 3]) -> bool {
        self.zeta_p < tol[0]
            && self.zeta_d < tol[0]
            && self.phi_p < tol[1]
            && self.phi_d < tol[1]
            && self.upsilon_p < tol[2]
            && self.upsilon_d < tol[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residuals: Residuals,
    /// `max_u ϖ_u(z)` at the relaxed iterate.
    pub objective: f64,
    /// Same objective after projecting and rounding to integer antennas.
    pub objective_rounded: f64,
    pub rho: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmmState {
    pub z: DecisionVector,
    pub a: Vec<[f64; 2]>,
    pub b: Vec<f64>,
    pub varpi: Vec<f64>,
    pub mho: f64,
    pub lambda: Vec<[f64; 2]>,
    pub chi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: [f64; 3],
    pub history: Vec<IterationRecord>,
}

const GUARD: f64 = 1e-12;

impl AdmmState {
    /// Consistent start: auxiliaries match `z`, multipliers are zero and
    /// `ϖ` equals the objective at `z`.
    pub fn initial(z: DecisionVector, anchors: &[[f64; 2]], objective: &[f64], rho: [f64; 3]) -> Self {
        let l = z.num_aps();
        let a = (0..l)
            .map(|i| {
                let p = z.position(i);
                [p[0] - anchors[i][0], p[1] - anchors[i][1]]
            })
            .collect();
        let b = z.antennas().to_vec();
        let mho = objective.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            z,
            a,
            b,
            varpi: objective.to_vec(),
            mho,
            lambda: vec![[0.0; 2]; l],
            chi: vec![0.0; l],
            gamma: vec![0.0; objective.len()],
            rho,
            history: Vec::new(),
        }
    }

    fn offset(&self, anchors: &[[f64; 2]], l: usize) -> [f64; 2] {
        let p = self.z.position(l);
        [p[0] - anchors[l][0], p[1] - anchors[l][1]]
    }

    pub fn update_ball_projection(&mut self, anchors: &[[f64; 2]], radius: f64) {
        for l in 0..self.z.num_aps() {
            let d = self.offset(anchors, l);
            let lam = self.lambda[l];
            let v = [d[0] - lam[0] / self.rho[0], d[1] - lam[1] / self.rho[0]];
            self.a[l] = project_ball(v, radius);
        }
    }

    pub fn update_antenna_qp(&mut self, budget: usize) -> Result<()> {
        let targets: Vec<f64> = (0..self.z.num_aps())
            .map(|l| self.z.antenna(l) - self.chi[l] / self.rho[1])
            .collect();
        let (b, _) = solve_antenna_qp(&targets, budget as f64, budget as f64)?;
        self.b = b;
        Ok(())
    }

    pub fn update_epigraph(&mut self, objective: &[f64], rule: EpigraphRule) {
        let (varpi, mho) = update_epigraph_values(objective, &self.gamma, self.rho[2], self.mho, rule);
        self.varpi = varpi;
        self.mho = mho;
    }

    pub fn update_z_truncated_newton<O: PlacementObjective>(
        &mut self,
        objective: &O,
        anchors: &[[f64; 2]],
        config: &AdmmConfig,
    ) -> NewtonCgReport {
        let mut model = ZModel {
            state: self,
            objective,
            anchors,
            steps: [config.fd_step_position_m, config.fd_step_antenna],
        };
        let x0 = model.state.z.as_slice().to_vec();
        let report = newton_cg(&mut model, &x0, &config.newton);
        self.z = DecisionVector::from_slice(&report.x).expect("length preserved");
        report
    }

    /// Dual ascent with the current penalties; `objective` is evaluated at
    /// the freshly updated `z`.
    pub fn update_multipliers(&mut self, anchors: &[[f64; 2]], objective: &[f64]) {
        for l in 0..self.z.num_aps() {
            let d = self.offset(anchors, l);
            self.lambda[l][0] += self.rho[0] * (self.a[l][0] - d[0]);
            self.lambda[l][1] += self.rho[0] * (self.a[l][1] - d[1]);
            self.chi[l] += self.rho[1] * (self.b[l] - self.z.antenna(l));
        }
        for (g, (w, o)) in self.gamma.iter_mut().zip(self.varpi.iter().zip(objective)) {
            *g += self.rho[2] * (w - o);
        }
    }

    /// Max-normalized primal and dual residuals against the previous
    /// auxiliaries.
    pub fn residuals(
        &self,
        anchors: &[[f64; 2]],
        objective: &[f64],
        prev_a: &[[f64; 2]],
        prev_b: &[f64],
        prev_varpi: &[f64],
    ) -> Residuals {
        let norm = |v: [f64; 2]| v[0].hypot(v[1]);
        let mut r = Residuals {
            zeta_p: 0.0,
            phi_p: 0.0,
            upsilon_p: 0.0,
            zeta_d: 0.0,
            phi_d: 0.0,
            upsilon_d: 0.0,
        };
        for l in 0..self.z.num_aps() {
            let d = self.offset(anchors, l);
            let a = self.a[l];
            let an = norm(a) + GUARD;
            r.zeta_p = r.zeta_p.max(norm([a[0] - d[0], a[1] - d[1]]) / an);
            r.zeta_d = r.zeta_d.max(norm([a[0] - prev_a[l][0], a[1] - prev_a[l][1]]) / an);
            let bn = self.b[l].abs() + GUARD;
            r.phi_p = r.phi_p.max((self.b[l] - self.z.antenna(l)).abs() / bn);
            r.phi_d = r.phi_d.max((self.b[l] - prev_b[l]).abs() / bn);
        }
        for (u, w) in self.varpi.iter().enumerate() {
            let wn = w.abs() + GUARD;
            r.upsilon_p = r.upsilon_p.max((w - objective[u]).abs() / wn);
            r.upsilon_d = r.upsilon_d.max((w - prev_varpi[u]).abs() / wn);
        }
        r
    }

    /// Residual-balancing update applied to each penalty independently.
    pub fn adapt_penalties(&mut self, res: &Residuals, adapt: &PenaltyAdapt) {
        if !adapt.enabled {
            return;
        }
        let pairs = [
            (res.zeta_p, res.zeta_d),
            (res.phi_p, res.phi_d),
            (res.upsilon_p, res.upsilon_d),
        ];
        for (rho, (p, d)) in self.rho.iter_mut().zip(pairs) {
            if p > adapt.mu * d {
                *rho *= adapt.tau_inc;
            } else if d > adapt.mu * p {
                *rho /= adapt.tau_dec;
            }
        }
    }
}

/// Augmented-Lagrangian z-subproblem with a Gauss-Newton curvature model
/// for the CRB terms.
struct ZModel<'s, 'o, O> {
    state: &'s AdmmState,
    objective: &'o O,
    anchors: &'s [[f64; 2]],
    steps: [f64; 2],
}

impl<O: PlacementObjective> ZModel<'_, '_, O> {
    fn objective_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let z = DecisionVector::from_slice(x).ok()?;
        let o = self.objective.evaluate(&z).ok()?;
        o.iter().all(|v| v.is_finite()).then_some(o)
    }

    fn quadratic_terms(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let s = self.state;
        let l = s.z.num_aps();
        let mut value = 0.0;
        let mut grad = DVector::zeros(x.len());
        for i in 0..l {
            for k in 0..2 {
                let r = s.a[i][k] - (x[2 * i + k] - self.anchors[i][k]) + s.lambda[i][k] / s.rho[0];
                value += 0.5 * s.rho[0] * r * r;
                grad[2 * i + k] = -s.rho[0] * r;
            }
            let r = s.b[i] - x[2 * l + i] + s.chi[i] / s.rho[1];
            value += 0.5 * s.rho[1] * r * r;
            grad[2 * l + i] = -s.rho[1] * r;
        }
        (value, grad)
    }

    fn epigraph_residual(&self, o: &[f64]) -> Vec<f64> {
        let s = self.state;
        s.varpi
            .iter()
            .zip(o)
            .zip(&s.gamma)
            .map(|((w, ou), g)| w - ou + g / s.rho[2])
            .collect()
    }
}

impl<O: PlacementObjective> NewtonModel for ZModel<'_, '_, O> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        let o = self.objective_at(x)?;
        let (q, _) = self.quadratic_terms(x);
        let r = self.epigraph_residual(&o);
        Some(q + 0.5 * self.state.rho[2] * r.iter().map(|v| v * v).sum::<f64>())
    }

    fn gradient_hessian(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = x.len();
        let l = n / 3;
        let o = self.objective_at(x)?;
        let u = o.len();
        let mut jac = DMatrix::zeros(u, n);
        for j in 0..n {
            let h = if j < 2 * l { self.steps[0] } else { self.steps[1] };
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[j] += h;
            dn[j] -= h;
            let col = match (self.objective_at(&up), self.objective_at(&dn)) {
                (Some(fu), Some(fd)) => fu.iter().zip(&fd).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>(),
                (Some(fu), None) => fu.iter().zip(&o).map(|(a, b)| (a - b) / h).collect(),
                (None, Some(fd)) => o.iter().zip(&fd).map(|(a, b)| (a - b) / h).collect(),
                (None, None) => return None,
            };
            for (i, v) in col.into_iter().enumerate() {
                jac[(i, j)] = v;
            }
        }
        let rho = self.state.rho;
        let (_, mut grad) = self.quadratic_terms(x);
        let r = DVector::from_vec(self.epigraph_residual(&o));
        grad -= jac.transpose() * &r * rho[2];
        let mut hess = jac.transpose() * &jac * rho[2];
        for j in 0..n {
            hess[(j, j)] += if j < 2 * l { rho[0] } else { rho[1] };
        }
        Some((grad, hess))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmmOutcome {
    /// Best integer-feasible decision found (or the initial one).
    pub z: DecisionVector,
    /// Final relaxed iterate.
    pub relaxed: DecisionVector,
    pub initial: DecisionVector,
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when nothing better than the initial decision was found.
    pub improved: bool,
    pub psi: [f64; 2],
    pub state: AdmmState,
}

impl AdmmOutcome {
    pub fn history(&self) -> &[IterationRecord] {
        &self.state.history
    }
}

/// Seeded target samples drawn uniformly from the area and motion ranges.
pub fn sample_targets(area: &SampleArea, seed: u64) -> Result<Vec<TargetState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] };
    (0..area.count)
        .map(|_| {
            let x = draw(&mut rng, [area.min_m[0], area.max_m[0]]);
            let y = draw(&mut rng, [area.min_m[1], area.max_m[1]]);
            let v = draw(&mut rng, area.speed_mps);
            let h = draw(&mut rng, area.heading_rad);
            TargetState::new([x, y], v, h, 1.0)
        })
        .collect()
}

/// Reciprocal mean CRB traces over the samples at `z`, used to bring the
/// position and velocity terms to a common scale.
pub fn normalize_psi(wave: &WaveformConfig, z: &DecisionVector, samples: &[TargetState]) -> Result<(f64, f64)> {
    let problem = CrbProblem::new(wave, z.positions(), z.antennas().to_vec())?;
    let mut tp = 0.0;
    let mut ta = 0.0;
    for t in samples {
        let pair = problem.crb_pair(t)?;
        tp += pair.trace_position();
        ta += pair.trace_velocity();
    }
    let n = samples.len() as f64;
    Ok((n / tp, n / ta))
}

fn equal_split(l: usize, budget: usize) -> Vec<f64> {
    let base = budget / l;
    (0..l)
        .map(|i| (base + usize::from(i < budget % l)) as f64)
        .collect()
}

/// Projects positions into their balls and rounds antenna counts by
/// largest remainder so that each is at least 1 and the total stays within
/// the budget.
pub fn round_decision(z: &DecisionVector, anchors: &[[f64; 2]], radius: f64, budget: usize) -> DecisionVector {
    let l = z.num_aps();
    let positions: Vec<[f64; 2]> = (0..l)
        .map(|i| {
            let p = z.position(i);
            let d = project_ball([p[0] - anchors[i][0], p[1] - anchors[i][1]], radius);
            [anchors[i][0] + d[0], anchors[i][1] + d[1]]
        })
        .collect();
    let b: Vec<f64> = z.antennas().iter().map(|n| n.max(1.0)).collect();
    let mut n: Vec<usize> = b.iter().map(|v| v.floor() as usize).collect();
    let frac: Vec<f64> = b.iter().zip(&n).map(|(v, f)| v - *f as f64).collect();
    let target = (b.iter().sum::<f64>().round() as usize).clamp(l, budget);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&i, &j| frac[j].total_cmp(&frac[i]).then(i.cmp(&j)));
    let mut total: usize = n.iter().sum();
    for &i in order.iter().cycle().take(4 * l * budget.max(1)) {
        if total >= target {
            break;
        }
        n[i] += 1;
        total += 1;
    }
    // over budget: take from the largest allocation, smallest remainder first
    while total > budget {
        let Some(&i) = order.iter().rev().filter(|&&i| n[i] > 1).max_by_key(|&&i| n[i]) else {
            break;
        };
        n[i] -= 1;
        total -= 1;
    }
    let antennas: Vec<f64> = n.into_iter().map(|v| v as f64).collect();
    DecisionVector::new(&positions, &antennas).expect("shape preserved")
}

fn worst_case<O: PlacementObjective>(objective: &O, z: &DecisionVector) -> f64 {
    objective
        .evaluate(z)
        .map(|o| o.into_iter().fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::INFINITY)
}

/// Best-improvement search over single-antenna moves between APs and
/// single-antenna additions while budget remains.
fn integer_local_search<O: PlacementObjective>(
    objective: &O,
    mut z: DecisionVector,
    mut value: f64,
    budget: usize,
) -> (DecisionVector, f64) {
    let l = z.num_aps();
    for _ in 0..4 * budget {
        let pos = z.positions();
        let ant = z.antennas().to_vec();
        let total: f64 = ant.iter().sum();
        let mut best: Option<(DecisionVector, f64)> = None;
        let mut consider = |cand: Vec<f64>| {
            let zc = DecisionVector::new(&pos, &cand).expect("shape preserved");
            let v = worst_case(objective, &zc);
            if v < best.as_ref().map_or(value, |b| b.1) {
                best = Some((zc, v));
            }
        };
        for j in 0..l {
            if total + 1.0 <= budget as f64 {
                let mut cand = ant.clone();
                cand[j] += 1.0;
                consider(cand);
            }
            for i in 0..l {
                if i != j && ant[i] >= 2.0 {
                    let mut cand = ant.clone();
                    cand[i] -= 1.0;
                    cand[j] += 1.0;
                    consider(cand);
                }
            }
        }
        match best {
            Some((zc, v)) => {
                z = zc;
                value = v;
            }
            None => break,
        }
    }
    (z, value)
}

/// Runs the solver from the scene's AP positions with an equal antenna split.
pub fn run_admm(scene: &Scene, config: &AdmmConfig, samples: &[TargetState]) -> Result<AdmmOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Precondition("placement needs at least one target sample".into()));
    }
    let anchors = scene.ap_positions();
    let l = anchors.len();
    if config.antenna_budget < l {
        return Err(Error::Config(format!(
            "antenna budget {} cannot give {l} APs one antenna each",
            config.antenna_budget
        )));
    }
    let z0 = DecisionVector::new(&anchors, &equal_split(l, config.antenna_budget))?;
    let (psi_p, psi_a) = if config.normalize_psi {
        normalize_psi(scene.waveform(), &z0, samples)?
    } else {
        (config.psi_p, config.psi_a)
    };
    let objective = CrbObjective {
        wave: scene.waveform(),
        samples,
        alpha: config.alpha,
        psi_p,
        psi_a,
    };
    let mut out = run_admm_with(&objective, &anchors, z0, config)?;
    out.psi = [psi_p, psi_a];
    Ok(out)
}

/// Runs the solver for an arbitrary per-target objective from `z0`.
pub fn run_admm_with<O: PlacementObjective>(
    objective: &O,
    anchors: &[[f64; 2]],
    z0: DecisionVector,
    config: &AdmmConfig,
) -> Result<AdmmOutcome> {
    config.validate()?;
    if z0.num_aps() != anchors.len() {
        return Err(Error::Precondition("decision vector and anchors differ in AP count".into()));
    }
    if config.antenna_budget < anchors.len() {
        return Err(Error::Config(format!(
            "antenna budget {} cannot give {} APs one antenna each",
            config.antenna_budget,
            anchors.len()
        )));
    }
    let budget = config.antenna_budget;
    let radius = config.ball_radius_m;
    let o0 = objective.evaluate(&z0)?;
    let initial_objective = o0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut state = AdmmState::initial(z0.clone(), anchors, &o0, config.rho);
    let mut o_current = o0;
    let mut best = (z0.clone(), initial_objective);
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=config.max_iters {
        iterations = k;
        let prev_a = state.a.clone();
        let prev_b = state.b.clone();
        let prev_varpi = state.varpi.clone();
        state.update_ball_projection(anchors, radius);
        state.update_antenna_qp(budget)?;
        state.update_epigraph(&o_current, config.epigraph);
        state.update_z_truncated_newton(objective, anchors, config);
        o_current = objective.evaluate(&state.z)?;
        state.update_multipliers(anchors, &o_current);
        let res = state.residuals(anchors, &o_current, &prev_a, &prev_b, &prev_varpi);
        let rounded = round_decision(&state.z, anchors, radius, budget);
        let rounded_value = worst_case(objective, &rounded);
        if rounded_value < best.1 {
            best = (rounded, rounded_value);
        }
        state.history.push(IterationRecord {
            iteration: k,
            residuals: res,
            objective: o_current.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            objective_rounded: rounded_value,
            rho: state.rho,
        });
        if res.below(&config.tolerances) {
            converged = true;
            break;
        }
        state.adapt_penalties(&res, &config.penalty_adapt);
    }
    let (mut z_best, mut v_best) = best;
    if config.local_search {
        let (z, v) = integer_local_search(objective, z_best, v_best, budget);
        z_best = z;
        v_best = v;
    }
    let improved = v_best < initial_objective;
    let (z, objective_value) = if improved {
        (z_best, v_best)
    } else {
        (z0.clone(), initial_objective)
    };
    Ok(AdmmOutcome {
        z,
        relaxed: state.z.clone(),
        initial: z0,
        initial_objective,
        objective: objective_value,
        iterations,
        converged,
        improved,
        psi: [f64::NAN; 2],
        state,
    })
}

/// Scene with APs moved and antenna counts replaced by an integer decision.
pub fn apply_decision(scene: &Scene, z: &DecisionVector) -> Result<Scene> {
    let aps = (0..z.num_aps())
        .map(|l| ApNode::new(z.position(l), z.antenna(l).round().max(1.0) as usize))
        .collect::<Result<Vec<_>>>()?;
    scene.with_aps(aps)
}
