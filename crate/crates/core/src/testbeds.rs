//! Target functions and simulators used to exercise the emulators and the
//! design loop, plus a finite-difference gradient.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::std_normal_cdf;

pub const PLATEAU_ALPHA: f64 = 24.0;
pub const PLATEAU_LOCAL_WIDTH: f64 = 0.15;
pub const LORENZ_LOCAL_WIDTH: f64 = 0.05;
pub const LORENZ_PR: (f64, f64) = (0.1, 100.1);
pub const LORENZ_RA: (f64, f64) = (15.0, 115.0);
pub const DIVERGENCE_NORM: f64 = 1e8;

pub trait Testbed: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, _x: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Distance to the transition set, when one is known.
    fn region_distance(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Distance below which a point counts as inside the local test region.
    fn local_width(&self) -> Option<f64> {
        None
    }

    fn in_local_region(&self, x: &[f64]) -> bool {
        match (self.region_distance(x), self.local_width()) {
            (Some(d), Some(w)) => d <= w,
            _ => false,
        }
    }
}

fn check_len(x: &[f64], d: usize) -> Result<()> {
    crate::error::check_dim(d, x.len())
}

/// `sin(1 / prod(0.7 x_i + 0.3))` and its gradient.
pub fn sin_testfn(x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let factors: Vec<f64> = x.iter().map(|v| 0.7 * v + 0.3).collect();
    let p: f64 = factors.iter().product();
    if p == 0.0 || !p.is_finite() {
        return Err(Error::Evaluation {
            x: x.to_vec(),
            reason: "zero product in sin test function".into(),
        });
    }
    let c = (1.0 / p).cos();
    let grad = factors.iter().map(|f| -0.7 * c / (p * f)).collect();
    Ok(((1.0 / p).sin(), grad))
}

/// `2 Phi(sqrt(2) (-4 - alpha sum x)) - 1`.
pub fn plateau(x: &[f64], alpha: f64) -> f64 {
    let s: f64 = x.iter().sum();
    2.0 * std_normal_cdf(std::f64::consts::SQRT_2 * (-4.0 - alpha * s)) - 1.0
}

pub fn plateau_gradient(x: &[f64], alpha: f64) -> Vec<f64> {
    let s: f64 = x.iter().sum();
    let z = std::f64::consts::SQRT_2 * (-4.0 - alpha * s);
    let g = -2.0 * std::f64::consts::SQRT_2 * alpha * crate::mathcore::std_normal_pdf(z);
    vec![g; x.len()]
}

/// Euclidean distance from `x` to the plane `sum x = -4 / alpha`.
pub fn plateau_distance(x: &[f64], alpha: f64) -> f64 {
    let s: f64 = x.iter().sum();
    (s + 4.0 / alpha).abs() / (x.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeConfig {
    pub dt: f64,
    pub t_total: f64,
    pub transient_fraction: f64,
    pub initial: [f64; 3],
    pub beta: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_total: 500.0,
            transient_fraction: 0.2,
            initial: [1.0, 1.0, 1.0],
            beta: 8.0 / 3.0,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_total > self.dt) {
            return Err(Error::invalid(format!("need 0 < dt < T, got dt = {}, T = {}", self.dt, self.t_total)));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(Error::invalid("transient fraction must lie in [0, 1)"));
        }
        if !(self.beta > 0.0) || self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("beta must be positive and the initial state finite"));
        }
        Ok(())
    }
}

fn lorenz_rhs(s: [f64; 3], sigma: f64, rho: f64, beta: f64) -> [f64; 3] {
    [sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2]]
}

fn axpy(a: f64, k: [f64; 3], s: [f64; 3]) -> [f64; 3] {
    [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]]
}

/// Time average of `z` over the retained window of an RK4 trajectory.
pub fn lorenz63_z_average(pr: f64, ra: f64, cfg: &OdeConfig) -> Result<f64> {
    cfg.validate()?;
    let steps = (cfg.t_total / cfg.dt).round() as usize;
    let skip = (steps as f64 * cfg.transient_fraction).floor() as usize;
    let (sigma, rho, beta, h) = (pr, ra, cfg.beta, cfg.dt);
    let mut s = cfg.initial;
    let mut z_sum = 0.0;
    for step in 1..=steps {
        let k1 = lorenz_rhs(s, sigma, rho, beta);
        let k2 = lorenz_rhs(axpy(0.5 * h, k1, s), sigma, rho, beta);
        let k3 = lorenz_rhs(axpy(0.5 * h, k2, s), sigma, rho, beta);
        let k4 = lorenz_rhs(axpy(h, k3, s), sigma, rho, beta);
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { time: step as f64 * h });
        }
        if step > skip {
            z_sum += s[2];
        }
    }
    Ok(z_sum / (steps - skip) as f64)
}

/// Nusselt number `2 (z_inf - z0) / rho` with `sigma = pr`, `rho = ra`.
pub fn lorenz63_nusselt(pr: f64, ra: f64, cfg: &OdeConfig) -> Result<f64> {
    let z_inf = lorenz63_z_average(pr, ra, cfg)?;
    Ok(2.0 * (z_inf - cfg.initial[2]) / ra)
}

/// Smallest distance, in unit-scaled domain coordinates, to the lines
/// `Pr = Ra - 2 (beta + 2)` and `Pr = beta + 1`.
pub fn transition_lines_lorenz(pr: f64, ra: f64, beta: f64) -> f64 {
    let (d1, d2) = line_distances(pr, ra, beta);
    d1.min(d2)
}

fn line_distances(pr: f64, ra: f64, beta: f64) -> (f64, f64) {
    let wp = LORENZ_PR.1 - LORENZ_PR.0;
    let wr = LORENZ_RA.1 - LORENZ_RA.0;
    let u = (pr - LORENZ_PR.0) / wp;
    let v = (ra - LORENZ_RA.0) / wr;
    // line 1 in unit coordinates: wp u - wr v + c = 0
    let c = LORENZ_PR.0 - LORENZ_RA.0 + 2.0 * (beta + 2.0);
    let d1 = (wp * u - wr * v + c).abs() / (wp * wp + wr * wr).sqrt();
    let d2 = (u - (beta + 1.0 - LORENZ_PR.0) / wp).abs();
    (d1, d2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub gradient: Vec<f64>,
    /// Dimensions where a one-sided difference was used.
    pub one_sided: Vec<bool>,
}

/// Central differences, falling back to one-sided steps where `x +- h`
/// would leave `bounds`.
pub fn fd_gradient<F>(mut f: F, x: &[f64], h: f64, bounds: Option<&[(f64, f64)]>) -> Result<FdGradient>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    if let Some(b) = bounds {
        check_len(x, b.len())?;
    }
    let d = x.len();
    let mut gradient = vec![0.0; d];
    let mut one_sided = vec![false; d];
    let mut f0 = None;
    let mut p = x.to_vec();
    for i in 0..d {
        let (lo_ok, hi_ok) = match bounds {
            Some(b) => (x[i] - h >= b[i].0, x[i] + h <= b[i].1),
            None => (true, true),
        };
        let (a, b) = match (lo_ok, hi_ok) {
            (true, true) => (x[i] - h, x[i] + h),
            (false, true) => (x[i], x[i] + h),
            (true, false) => (x[i] - h, x[i]),
            (false, false) => return Err(Error::invalid(format!("domain narrower than 2h in dimension {i}"))),
        };
        one_sided[i] = !(lo_ok && hi_ok);
        let mut eval = |v: f64| -> Result<f64> {
            if v == x[i] {
                if f0.is_none() {
                    f0 = Some(f(x)?);
                }
                return Ok(f0.unwrap());
            }
            p[i] = v;
            let out = f(&p);
            p[i] = x[i];
            out
        };
        let fb = eval(b)?;
        let fa = eval(a)?;
        gradient[i] = (fb - fa) / (b - a);
    }
    Ok(FdGradient { gradient, one_sided })
}

pub struct SinTestbed {
    pub d: usize,
}

impl Testbed for SinTestbed {
    fn name(&self) -> &str {
        "sin"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); self.d]
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_len(x, self.d)?;
        Ok(sin_testfn(x)?.0)
    }
    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(check_len(x, self.d).and_then(|_| sin_testfn(x)).map(|(_, g)| g))
    }
}

pub struct PlateauTestbed {
    pub d: usize,
    pub alpha: f64,
}

impl Testbed for PlateauTestbed {
    fn name(&self) -> &str {
        "plateau"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.d]
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_len(x, self.d)?;
        Ok(plateau(x, self.alpha))
    }
    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(check_len(x, self.d).map(|_| plateau_gradient(x, self.alpha)))
    }
    fn region_distance(&self, x: &[f64]) -> Option<f64> {
        Some(plateau_distance(x, self.alpha))
    }
    fn local_width(&self) -> Option<f64> {
        Some(PLATEAU_LOCAL_WIDTH)
    }
}

/// Inputs are `(Pr, Ra)`.
pub struct Lorenz63Testbed {
    pub ode: OdeConfig,
}

impl Testbed for Lorenz63Testbed {
    fn name(&self) -> &str {
        "lorenz63"
    }
    fn dim(&self) -> usize {
        2
    }
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![LORENZ_PR, LORENZ_RA]
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_len(x, 2)?;
        lorenz63_nusselt(x[0], x[1], &self.ode)
    }
    fn region_distance(&self, x: &[f64]) -> Option<f64> {
        Some(transition_lines_lorenz(x[0], x[1], self.ode.beta))
    }
    fn local_width(&self) -> Option<f64> {
        Some(LORENZ_LOCAL_WIDTH)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestbedSpec {
    pub name: String,
    pub dim: usize,
    pub alpha: f64,
    pub ode: OdeConfig,
}

impl Default for TestbedSpec {
    fn default() -> Self {
        Self {
            name: "plateau".into(),
            dim: 2,
            alpha: PLATEAU_ALPHA,
            ode: OdeConfig::default(),
        }
    }
}

pub type TestbedCtor = fn(&TestbedSpec) -> Result<Box<dyn Testbed>>;

/// Name-indexed testbed constructors.
pub struct TestbedRegistry {
    ctors: BTreeMap<String, TestbedCtor>,
}

impl TestbedRegistry {
    pub fn empty() -> Self {
        Self { ctors: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, ctor: TestbedCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.ctors.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &TestbedSpec) -> Result<Box<dyn Testbed>> {
        let ctor = self
            .ctors
            .get(&spec.name)
            .ok_or_else(|| Error::invalid(format!("unknown testbed '{}' (known: {:?})", spec.name, self.names())))?;
        ctor(spec)
    }
}

impl Default for TestbedRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("sin", |s| {
            if s.dim == 0 {
                return Err(Error::invalid("dimension must be positive"));
            }
            Ok(Box::new(SinTestbed { d: s.dim }))
        });
        r.register("plateau", |s| {
            if s.dim == 0 || !(s.alpha > 0.0) {
                return Err(Error::invalid("plateau needs a positive dimension and alpha"));
            }
            Ok(Box::new(PlateauTestbed { d: s.dim, alpha: s.alpha }))
        });
        r.register("lorenz63", |s| {
            s.ode.validate()?;
            Ok(Box::new(Lorenz63Testbed { ode: s.ode.clone() }))
        });
        r
    }
}
