//! Sequential design: gradient-entropy acquisition over a Pareto frontier of
//! (entropy, predictive variance), with a maximum-variance baseline.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emulator::{Emulator, EmulatorBuilder};
use crate::error::{Error, Result};
use crate::gp::{GaussianPrediction, GradientPosterior};
use crate::gradnorm::{exceedance_prob_with, make_dist, NormScale};
use crate::mathcore::{maximin_lhs_with_rng, row, DEFAULT_MAXIMIN_DRAWS};
use crate::testbeds::Testbed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateRefresh {
    PerIteration,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub n0: usize,
    /// Total budget N, including the initial design.
    pub n_total: usize,
    pub n_cand: usize,
    pub delta: f64,
    pub candidate_refresh: CandidateRefresh,
    pub seed: u64,
    /// Emulator snapshots are kept every this many acquisitions.
    pub checkpoint_stride: usize,
    pub max_retries: usize,
    /// Keep every scored candidate in the step log.
    pub keep_candidates: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            n0: 5,
            n_total: 100,
            n_cand: 500,
            delta: 0.85,
            candidate_refresh: CandidateRefresh::PerIteration,
            seed: 0,
            checkpoint_stride: 25,
            max_retries: 3,
            keep_candidates: false,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 || self.n0 > self.n_total {
            return Err(Error::invalid(format!(
                "need 2 <= n0 <= N, got n0 = {}, N = {}",
                self.n0, self.n_total
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.n_cand < 2 || self.checkpoint_stride < 1 {
            return Err(Error::invalid("need at least two candidates and a positive checkpoint stride"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqPoint {
    pub x: Vec<f64>,
    pub p_x: f64,
    pub j_ent: f64,
    pub pred_var: f64,
    pub grad_norm_mean: f64,
}

/// Binary entropy in nats, with `0 log 0 = 0`.
pub fn entropy_criterion(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability outside [0, 1]: {p}")));
    }
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    Ok(h(p) + h(1.0 - p))
}

/// Largest gradient-norm mean over all candidates on the first iteration,
/// otherwise over those with `p_x < delta`; falls back to `prev_l` when that
/// set is empty.
pub fn update_lipschitz(cands: &[AcqPoint], prev_l: f64, delta: f64, first_iter: bool) -> Result<f64> {
    if cands.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    let pool = cands.iter().filter(|c| first_iter || c.p_x < delta);
    Ok(pool.map(|c| c.grad_norm_mean).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))).unwrap_or(prev_l))
}

/// Indices of points not strictly dominated in both coordinates, ascending.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].0.total_cmp(&points[a].0).then(points[b].1.total_cmp(&points[a].1)));
    let mut front = Vec::new();
    // best second coordinate among points with a strictly larger first one
    let mut best = f64::NEG_INFINITY;
    let mut k = 0;
    while k < order.len() {
        let j0 = points[order[k]].0;
        let mut end = k;
        let mut group_best = f64::NEG_INFINITY;
        while end < order.len() && points[order[end]].0 == j0 {
            let i = order[end];
            if !(best > points[i].1) {
                front.push(i);
            }
            group_best = group_best.max(points[i].1);
            end += 1;
        }
        best = best.max(group_best);
        k = end;
    }
    front.sort_unstable();
    front
}

/// Emulator output at one candidate.
#[derive(Debug, Clone)]
pub struct CandidateScore {
    pub x: Vec<f64>,
    pub prediction: GaussianPrediction,
    pub gradient: GradientPosterior,
}

impl CandidateScore {
    pub fn grad_norm_mean(&self) -> f64 {
        self.gradient.mean.norm()
    }
}

#[derive(Debug, Clone)]
pub struct Scoring {
    pub points: Vec<AcqPoint>,
    /// Candidates eligible for selection.
    pub pool: Vec<usize>,
    pub l_dgp: Option<f64>,
}

pub trait AcquisitionStrategy: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, cands: &[CandidateScore], prev_l: Option<f64>, delta: f64) -> Result<Scoring>;
    /// Picks a pool member not in `excluded`.
    fn pick(&self, scoring: &Scoring, excluded: &[usize], rng: &mut dyn RngCore) -> Option<usize>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradEnt {
    pub scale: NormScale,
}

impl GradEnt {
    fn points(&self, cands: &[CandidateScore], l: f64) -> Result<Vec<AcqPoint>> {
        cands
            .iter()
            .map(|c| {
                let p_x = exceedance_prob_with(&make_dist(&c.gradient)?, l, self.scale)?;
                Ok(AcqPoint {
                    x: c.x.clone(),
                    p_x,
                    j_ent: entropy_criterion(p_x)?,
                    pred_var: c.prediction.variance,
                    grad_norm_mean: c.grad_norm_mean(),
                })
            })
            .collect()
    }
}

impl AcquisitionStrategy for GradEnt {
    fn name(&self) -> &str {
        match self.scale {
            NormScale::Sum => "gradent",
            NormScale::Rms => "gradent-rms",
        }
    }

    fn score(&self, cands: &[CandidateScore], prev_l: Option<f64>, delta: f64) -> Result<Scoring> {
        let l = match prev_l {
            None => {
                let pts = self.points(cands, 0.0)?;
                update_lipschitz(&pts, 0.0, delta, true)?
            }
            Some(prev) => update_lipschitz(&self.points(cands, prev)?, prev, delta, false)?,
        };
        let points = self.points(cands, l)?;
        let pool = pareto_front(&points.iter().map(|p| (p.j_ent, p.pred_var)).collect::<Vec<_>>());
        Ok(Scoring {
            points,
            pool,
            l_dgp: Some(l),
        })
    }

    fn pick(&self, scoring: &Scoring, excluded: &[usize], rng: &mut dyn RngCore) -> Option<usize> {
        let open: Vec<usize> = scoring.pool.iter().copied().filter(|i| !excluded.contains(i)).collect();
        if open.is_empty() {
            None
        } else {
            Some(open[rng.gen_range(0..open.len())])
        }
    }
}

/// Maximum predictive variance; ties go to the lowest index.
pub struct Alm;

impl AcquisitionStrategy for Alm {
    fn name(&self) -> &str {
        "alm"
    }

    fn score(&self, cands: &[CandidateScore], _prev_l: Option<f64>, _delta: f64) -> Result<Scoring> {
        let points: Vec<AcqPoint> = cands
            .iter()
            .map(|c| AcqPoint {
                x: c.x.clone(),
                p_x: 0.0,
                j_ent: 0.0,
                pred_var: c.prediction.variance,
                grad_norm_mean: c.grad_norm_mean(),
            })
            .collect();
        let mut pool: Vec<usize> = (0..points.len()).collect();
        pool.sort_by(|&a, &b| points[b].pred_var.total_cmp(&points[a].pred_var).then(a.cmp(&b)));
        Ok(Scoring {
            points,
            pool,
            l_dgp: None,
        })
    }

    fn pick(&self, scoring: &Scoring, excluded: &[usize], _rng: &mut dyn RngCore) -> Option<usize> {
        scoring.pool.iter().copied().find(|i| !excluded.contains(i))
    }
}

pub type StrategyCtor = fn() -> Box<dyn AcquisitionStrategy>;

pub struct StrategyRegistry {
    ctors: BTreeMap<String, StrategyCtor>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self { ctors: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, ctor: StrategyCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.ctors.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn AcquisitionStrategy>> {
        self.ctors
            .get(name)
            .map(|c| c())
            .ok_or_else(|| Error::invalid(format!("unknown acquisition '{name}' (known: {:?})", self.names())))
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("gradent", || Box::new(GradEnt { scale: NormScale::Sum }));
        r.register("gradent-rms", || Box::new(GradEnt { scale: NormScale::Rms }));
        r.register("alm", || Box::new(Alm));
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub l_dgp: Option<f64>,
    pub p_x: f64,
    pub j_ent: f64,
    pub pred_var: f64,
    pub frontier_size: usize,
    /// Whether the chosen point belongs to the selection pool.
    pub in_pool: bool,
    /// Points whose evaluation failed before `x` succeeded.
    pub failed: Vec<Vec<f64>>,
    pub wall_time: f64,
    pub candidates: Option<Vec<AcqPoint>>,
}

#[derive(Clone)]
pub struct DesignState {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub emulator: Arc<dyn Emulator>,
    pub l_hist: Vec<f64>,
    pub iteration: usize,
    pub log: Vec<StepRecord>,
    pub fixed_candidates: Option<DMatrix<f64>>,
}

/// Emulator output at every row of `cands`, in row order.
pub fn score_candidates(em: &dyn Emulator, cands: &DMatrix<f64>) -> Result<Vec<CandidateScore>> {
    (0..cands.nrows())
        .into_par_iter()
        .map(|i| {
            let x = row(cands, i);
            let (prediction, gradient) = em.posterior(&x)?;
            Ok(CandidateScore { x, prediction, gradient })
        })
        .collect()
}

/// One acquisition: score candidates, select, evaluate, grow the data, refit.
pub fn design_step(
    state: &mut DesignState,
    target: &dyn Testbed,
    cfg: &DesignConfig,
    strategy: &dyn AcquisitionStrategy,
    builder: &dyn EmulatorBuilder,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let start = Instant::now();
    let bounds = target.bounds();
    let cands = match (&state.fixed_candidates, cfg.candidate_refresh) {
        (Some(c), CandidateRefresh::Fixed) => c.clone(),
        _ => {
            let c = maximin_lhs_with_rng(rng, cfg.n_cand, &bounds, DEFAULT_MAXIMIN_DRAWS)?;
            if cfg.candidate_refresh == CandidateRefresh::Fixed {
                state.fixed_candidates = Some(c.clone());
            }
            c
        }
    };
    let scores = score_candidates(state.emulator.as_ref(), &cands)?;
    let scoring = strategy.score(&scores, state.l_hist.last().copied(), cfg.delta)?;
    let mut failed_idx = Vec::new();
    let mut failed = Vec::new();
    let (idx, y) = loop {
        let i = strategy
            .pick(&scoring, &failed_idx, rng)
            .ok_or_else(|| Error::invalid("selection pool exhausted"))?;
        match target.evaluate(&scoring.points[i].x) {
            Ok(v) if v.is_finite() => break (i, v),
            outcome => {
                log::warn!("target evaluation failed at {:?}: {:?}", scoring.points[i].x, outcome);
                failed_idx.push(i);
                failed.push(scoring.points[i].x.clone());
                if failed.len() > cfg.max_retries {
                    return Err(Error::Evaluation {
                        x: scoring.points[i].x.clone(),
                        reason: format!("{} consecutive target failures", failed.len()),
                    });
                }
            }
        }
    };
    let chosen = &scoring.points[idx];
    let n = state.x.nrows();
    let mut x = state.x.clone().resize_vertically(n + 1, 0.0);
    for (k, v) in chosen.x.iter().enumerate() {
        x[(n, k)] = *v;
    }
    let mut ys = state.y.clone();
    ys.push(y);
    let emulator = builder.refit(state.emulator.as_ref(), &x, &ys, &bounds, rng.gen())?;
    if let Some(l) = scoring.l_dgp {
        state.l_hist.push(l);
    }
    state.iteration += 1;
    state.log.push(StepRecord {
        iteration: state.iteration,
        x: chosen.x.clone(),
        y,
        l_dgp: scoring.l_dgp,
        p_x: chosen.p_x,
        j_ent: chosen.j_ent,
        pred_var: chosen.pred_var,
        frontier_size: scoring.pool.len(),
        in_pool: scoring.pool.contains(&idx),
        failed,
        wall_time: start.elapsed().as_secs_f64(),
        candidates: cfg.keep_candidates.then(|| scoring.points.clone()),
    });
    state.x = x;
    state.y = ys;
    state.emulator = emulator;
    Ok(())
}

pub fn gradent_step(
    state: &mut DesignState,
    target: &dyn Testbed,
    cfg: &DesignConfig,
    builder: &dyn EmulatorBuilder,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    design_step(state, target, cfg, &GradEnt::default(), builder, rng)
}

pub fn alm_step(
    state: &mut DesignState,
    target: &dyn Testbed,
    cfg: &DesignConfig,
    builder: &dyn EmulatorBuilder,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    design_step(state, target, cfg, &Alm, builder, rng)
}

#[derive(Clone)]
pub struct Snapshot {
    /// Design size the emulator was trained on.
    pub n: usize,
    pub emulator: Arc<dyn Emulator>,
}

#[derive(Clone)]
pub struct DesignTrace {
    pub method: String,
    pub seed: u64,
    pub initial_x: DMatrix<f64>,
    pub initial_y: Vec<f64>,
    pub state: DesignState,
    pub snapshots: Vec<Snapshot>,
}

impl DesignTrace {
    pub fn steps(&self) -> &[StepRecord] {
        &self.state.log
    }
}

pub fn run_design(
    target: &dyn Testbed,
    cfg: &DesignConfig,
    strategy: &dyn AcquisitionStrategy,
    builder: &dyn EmulatorBuilder,
) -> Result<DesignTrace> {
    run_design_with(target, cfg, strategy, builder, &mut |_| Ok(()))
}

/// As [`run_design`], calling `on_step` with the state after every acquisition.
pub fn run_design_with(
    target: &dyn Testbed,
    cfg: &DesignConfig,
    strategy: &dyn AcquisitionStrategy,
    builder: &dyn EmulatorBuilder,
    on_step: &mut dyn FnMut(&DesignState) -> Result<()>,
) -> Result<DesignTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bounds = target.bounds();
    let x0 = maximin_lhs_with_rng(&mut rng, cfg.n0, &bounds, DEFAULT_MAXIMIN_DRAWS)?;
    let y0 = (0..cfg.n0).map(|i| target.evaluate(&row(&x0, i))).collect::<Result<Vec<_>>>()?;
    let emulator = builder.fit(&x0, &y0, &bounds, rng.gen())?;
    let mut state = DesignState {
        x: x0.clone(),
        y: y0.clone(),
        emulator,
        l_hist: Vec::new(),
        iteration: 0,
        log: Vec::new(),
        fixed_candidates: None,
    };
    let mut snapshots = vec![Snapshot {
        n: cfg.n0,
        emulator: state.emulator.clone(),
    }];
    for t in 1..=(cfg.n_total - cfg.n0) {
        design_step(&mut state, target, cfg, strategy, builder, &mut rng)?;
        on_step(&state)?;
        if t % cfg.checkpoint_stride == 0 || cfg.n0 + t == cfg.n_total {
            snapshots.push(Snapshot {
                n: cfg.n0 + t,
                emulator: state.emulator.clone(),
            });
        }
    }
    Ok(DesignTrace {
        method: strategy.name().to_string(),
        seed: cfg.seed,
        initial_x: x0,
        initial_y: y0,
        state,
        snapshots,
    })
}
