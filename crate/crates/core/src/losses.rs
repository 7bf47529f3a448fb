//! Differentiable rule losses over Gumbel-Softmax relaxed therblig steps.
//!
//! A relaxed step is a probability vector over the `|C| * 7` joint
//! `(object, verb)` categories followed by one null category. Its first
//! `|C| * 7` entries, read row-major, form the `|C| x 7` effect matrix `G`;
//! the null category has a zero effect matrix.
//!
//! Two loss modes are provided:
//!
//! - `literal`: the printed closed forms. States follow the additive
//!   recursion `a_k = a_{k-1} + G_{k-1} beta` and every component is a sum of
//!   per-step norms.
//! - `corrected` (default): states follow the saturating recursion
//!   `a_k = a_{k-1} + g (1 - a_{k-1}) - r a_{k-1}` (`g`, `r` the grasp and
//!   release columns of `G`), which keeps `a_k` in `[0, 1]` and reproduces
//!   discrete grasp/release set semantics for one-hot steps. It agrees with
//!   the additive recursion on every rule-consistent step. Then
//!   `L_C = |a_L - c_end|`, `L_EC = sum_k <a_k, -G_k gamma>` and
//!   `L_NC = sum_k <1 - a_k, G_k delta>`; on one-hot steps each component is
//!   zero exactly when its rule holds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{ObjectVocabulary, Therblig};

/// Number of object-bearing verbs, i.e. columns of the effect matrix.
pub const VERBS: usize = 7;

const REACH: usize = 0;
const MOVE: usize = 1;
const GRASP: usize = 2;
const RELEASE: usize = 3;
const USE: usize = 4;
const ORIENT: usize = 5;

const SIMPLEX_TOL: f64 = 1e-9;
const KINK_TOL: f64 = 1e-8;

/// Per-verb coefficients, indexed `Re, M, G, R, U, O, H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerbEffects {
    /// Contact change: +1 grasp, -1 release.
    pub beta: [f64; VERBS],
    /// Rule 2 penalty direction: -1 reach and grasp.
    pub gamma: [f64; VERBS],
    /// Rule 3 penalty direction: +1 move, release, use, orient.
    pub delta: [f64; VERBS],
}

impl VerbEffects {
    pub const STANDARD: VerbEffects = VerbEffects {
        beta: [0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0],
        gamma: [-1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        delta: [0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
    };
}

impl Default for VerbEffects {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Literal,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl Norm {
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Gradient of the norm at `v`, refusing kinks.
    fn gradient(self, v: &[f64], component: &'static str, step: Option<usize>) -> Result<Vec<f64>> {
        match self {
            Norm::L1 => v
                .iter()
                .enumerate()
                .map(|(entry, &x)| {
                    if x.abs() < KINK_TOL {
                        Err(Error::NonDifferentiable {
                            component,
                            step,
                            entry: Some(entry),
                        })
                    } else {
                        Ok(x.signum())
                    }
                })
                .collect(),
            Norm::L2 => {
                let n = self.apply(v);
                if n < KINK_TOL {
                    return Err(Error::NonDifferentiable {
                        component,
                        step,
                        entry: None,
                    });
                }
                Ok(v.iter().map(|x| x / n).collect())
            }
        }
    }
}

/// Probability vector over the `|C| * 7 + 1` therblig categories.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedStep {
    probs: Vec<f64>,
    objects: usize,
}

impl RelaxedStep {
    pub fn new(probs: Vec<f64>, objects: usize) -> Result<Self> {
        let expected = objects * VERBS + 1;
        if probs.len() != expected {
            return Err(Error::Dimension {
                what: "relaxed step",
                expected,
                got: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("relaxed step"));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Invalid(format!(
                "relaxed step is not on the probability simplex (sum {sum})"
            )));
        }
        Ok(Self { probs, objects })
    }

    /// Degenerate distribution on a single therblig.
    pub fn one_hot(t: Therblig, objects: usize) -> Result<Self> {
        let mut probs = vec![0.0; objects * VERBS + 1];
        probs[category_index(t, objects)?] = 1.0;
        Ok(Self { probs, objects })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn null_mass(&self) -> f64 {
        self.probs[self.objects * VERBS]
    }

    /// Entry `(object, verb)` of the effect matrix.
    pub fn effect(&self, object: usize, verb: usize) -> f64 {
        self.probs[object * VERBS + verb]
    }

    /// `G v` for a per-verb coefficient vector `v`.
    pub fn project(&self, coeffs: &[f64; VERBS]) -> Vec<f64> {
        self.probs[..self.objects * VERBS]
            .chunks_exact(VERBS)
            .map(|row| row.iter().zip(coeffs).map(|(p, c)| p * c).sum())
            .collect()
    }
}

/// Position of `t` in the relaxed category vector.
pub fn category_index(t: Therblig, objects: usize) -> Result<usize> {
    match (t.object(), t.verb().effect_index()) {
        (Some(o), Some(v)) => {
            if o.index() >= objects {
                return Err(Error::ObjectOutOfRange {
                    index: o,
                    size: objects,
                });
            }
            Ok(o.index() * VERBS + v)
        }
        _ => Ok(objects * VERBS),
    }
}

/// `softmax((logits + noise) / tau)`. The noise is an explicit argument so
/// the relaxation is deterministic; see [`GumbelNoise`] for sampling it.
pub fn gumbel_softmax(logits: &[f64], tau: f64, noise: &[f64]) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Temperature(tau));
    }
    if logits.len() != noise.len() {
        return Err(Error::Dimension {
            what: "gumbel noise",
            expected: logits.len(),
            got: noise.len(),
        });
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    if noise.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gumbel noise"));
    }
    let scaled: Vec<f64> = logits.iter().zip(noise).map(|(l, g)| (l + g) / tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// One-hot at the argmax of `logits + noise` (the straight-through forward).
pub fn hard_one_hot(logits: &[f64], noise: &[f64]) -> Vec<f64> {
    let argmax = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| l + g)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
        .0;
    let mut out = vec![0.0; logits.len()];
    if !out.is_empty() {
        out[argmax] = 1.0;
    }
    out
}

/// Seeded standard-Gumbel sampler.
pub struct GumbelNoise {
    rng: ChaCha8Rng,
    dist: Gumbel<f64>,
}

impl GumbelNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: Gumbel::new(0.0, 1.0).expect("standard Gumbel parameters are valid"),
        }
    }

    pub fn sample(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.dist.sample(&mut self.rng)).collect()
    }

    pub fn sample_matrix(&mut self, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows).map(|_| self.sample(cols)).collect()
    }
}

fn check_steps(dim: usize, steps: &[RelaxedStep]) -> Result<()> {
    for s in steps {
        if s.objects != dim {
            return Err(Error::Dimension {
                what: "relaxed step objects",
                expected: dim,
                got: s.objects,
            });
        }
    }
    Ok(())
}

fn check_vector(what: &'static str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Dimension {
            what,
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Additive state recursion `a_0 = c_start`, `a_k = a_{k-1} + G_{k-1} beta`.
/// Returns `[a_0, ..., a_len]`.
pub fn derive_states(c_start: &[f64], steps: &[RelaxedStep], beta: &[f64; VERBS]) -> Result<Vec<Vec<f64>>> {
    check_steps(c_start.len(), steps)?;
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push(c_start.to_vec());
    for step in steps {
        let delta = step.project(beta);
        let prev = states.last().expect("non-empty");
        states.push(prev.iter().zip(&delta).map(|(a, d)| a + d).collect());
    }
    Ok(states)
}

/// Saturating recursion `a_k = a_{k-1} + g (1 - a_{k-1}) - r a_{k-1}` used by
/// the corrected mode. Returns `[a_0, ..., a_len]`.
pub fn derive_states_saturating(c_start: &[f64], steps: &[RelaxedStep]) -> Result<Vec<Vec<f64>>> {
    check_steps(c_start.len(), steps)?;
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push(c_start.to_vec());
    for step in steps {
        let prev = states.last().expect("non-empty");
        let next = prev
            .iter()
            .enumerate()
            .map(|(o, &a)| {
                let (g, r) = (step.effect(o, GRASP), step.effect(o, RELEASE));
                a * (1.0 - g - r) + g
            })
            .collect();
        states.push(next);
    }
    Ok(states)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rule 1: cross contact-therblig consistency.
pub fn loss_c(c_start: &[f64], c_end: &[f64], steps: &[RelaxedStep], mode: LossMode, norm: Norm) -> Result<f64> {
    check_vector("c_end", c_end, c_start.len())?;
    match mode {
        LossMode::Corrected => {
            let states = derive_states_saturating(c_start, steps)?;
            Ok(norm.apply(&sub(states.last().expect("non-empty"), c_end)))
        }
        LossMode::Literal => {
            check_steps(c_start.len(), steps)?;
            let offset = sub(c_start, c_end);
            Ok(steps
                .iter()
                .map(|s| {
                    let r: Vec<f64> = offset
                        .iter()
                        .zip(s.project(&VerbEffects::STANDARD.beta))
                        .map(|(o, d)| o + d)
                        .collect();
                    norm.apply(&r)
                })
                .sum())
        }
    }
}

/// Rule 2: contact enforcement.
pub fn loss_ec(c_start: &[f64], steps: &[RelaxedStep], mode: LossMode, norm: Norm) -> Result<f64> {
    let fx = VerbEffects::STANDARD;
    match mode {
        LossMode::Corrected => {
            let states = derive_states_saturating(c_start, steps)?;
            Ok(steps
                .iter()
                .zip(&states)
                .map(|(s, a)| {
                    let mass: Vec<f64> = s.project(&fx.gamma).into_iter().map(|x| -x).collect();
                    dot(a, &mass)
                })
                .sum())
        }
        LossMode::Literal => {
            let states = derive_states(c_start, steps, &fx.beta)?;
            Ok(steps
                .iter()
                .zip(&states)
                .map(|(s, a)| norm.apply(&sub(a, &s.project(&fx.gamma))))
                .sum())
        }
    }
}

/// Rule 3: non-contact enforcement.
pub fn loss_nc(c_start: &[f64], steps: &[RelaxedStep], mode: LossMode, norm: Norm) -> Result<f64> {
    let fx = VerbEffects::STANDARD;
    match mode {
        LossMode::Corrected => {
            let states = derive_states_saturating(c_start, steps)?;
            Ok(steps
                .iter()
                .zip(&states)
                .map(|(s, a)| {
                    let missing: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
                    dot(&missing, &s.project(&fx.delta))
                })
                .sum())
        }
        LossMode::Literal => {
            let states = derive_states(c_start, steps, &fx.beta)?;
            Ok(steps
                .iter()
                .zip(&states)
                .map(|(s, a)| norm.apply(&sub(a, &s.project(&fx.delta))))
                .sum())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_c: f64,
    pub l_ec: f64,
    pub l_nc: f64,
    pub total: f64,
    pub mode: LossMode,
    pub norm: Norm,
}

/// `L_C + L_EC + L_NC`.
pub fn combined_rule_loss(
    c_start: &[f64],
    c_end: &[f64],
    steps: &[RelaxedStep],
    mode: LossMode,
    norm: Norm,
) -> Result<LossReport> {
    let l_c = loss_c(c_start, c_end, steps, mode, norm)?;
    let l_ec = loss_ec(c_start, steps, mode, norm)?;
    let l_nc = loss_nc(c_start, steps, mode, norm)?;
    Ok(LossReport {
        l_c,
        l_ec,
        l_nc,
        total: l_c + l_ec + l_nc,
        mode,
        norm,
    })
}

/// Gradient of the combined rule loss with respect to every step's
/// probability vector (null entries included, always zero).
pub fn rule_loss_grad_probs(
    c_start: &[f64],
    c_end: &[f64],
    steps: &[RelaxedStep],
    mode: LossMode,
    norm: Norm,
) -> Result<Vec<Vec<f64>>> {
    let dim = c_start.len();
    check_vector("c_end", c_end, dim)?;
    check_steps(dim, steps)?;
    let fx = VerbEffects::STANDARD;
    let len = steps.len();
    let mut grads: Vec<Vec<f64>> = steps.iter().map(|s| vec![0.0; s.probs.len()]).collect();
    if len == 0 {
        return Ok(grads);
    }

    match mode {
        LossMode::Corrected => {
            let states = derive_states_saturating(c_start, steps)?;
            // dL/da_L from L_C
            let mut adj = norm.gradient(&sub(&states[len], c_end), "L_C", None)?;
            for k in (0..len).rev() {
                let (step, a, grad) = (&steps[k], &states[k], &mut grads[k]);
                let mut prev_adj = vec![0.0; dim];
                for o in 0..dim {
                    let (g, r) = (step.effect(o, GRASP), step.effect(o, RELEASE));
                    let row = &mut grad[o * VERBS..(o + 1) * VERBS];
                    // recursion a_{k+1} = a_k (1 - g - r) + g
                    row[GRASP] += adj[o] * (1.0 - a[o]);
                    row[RELEASE] -= adj[o] * a[o];
                    prev_adj[o] += adj[o] * (1.0 - g - r);
                    // L_EC term <a_k, reach + grasp>
                    row[REACH] += a[o];
                    row[GRASP] += a[o];
                    prev_adj[o] += step.effect(o, REACH) + step.effect(o, GRASP);
                    // L_NC term <1 - a_k, move + release + use + orient>
                    let missing = 1.0 - a[o];
                    let mut manip = 0.0;
                    for v in [MOVE, RELEASE, USE, ORIENT] {
                        row[v] += missing * fx.delta[v];
                        manip += step.effect(o, v) * fx.delta[v];
                    }
                    prev_adj[o] -= manip;
                }
                adj = prev_adj;
            }
        }
        LossMode::Literal => {
            let states = derive_states(c_start, steps, &fx.beta)?;
            let offset = sub(c_start, c_end);
            let mut adj = vec![0.0; dim];
            for k in (0..len).rev() {
                let (step, a) = (&steps[k], &states[k]);
                let grad = &mut grads[k];
                // recursion a_{k+1} = a_k + G_k beta
                for o in 0..dim {
                    for v in 0..VERBS {
                        grad[o * VERBS + v] += adj[o] * fx.beta[v];
                    }
                }
                let residual_c: Vec<f64> = offset.iter().zip(step.project(&fx.beta)).map(|(x, d)| x + d).collect();
                let s_c = norm.gradient(&residual_c, "L_C", Some(k))?;
                let s_ec = norm.gradient(&sub(a, &step.project(&fx.gamma)), "L_EC", Some(k))?;
                let s_nc = norm.gradient(&sub(a, &step.project(&fx.delta)), "L_NC", Some(k))?;
                for o in 0..dim {
                    for v in 0..VERBS {
                        grad[o * VERBS + v] +=
                            s_c[o] * fx.beta[v] - s_ec[o] * fx.gamma[v] - s_nc[o] * fx.delta[v];
                    }
                    adj[o] += s_ec[o] + s_nc[o];
                }
            }
        }
    }
    Ok(grads)
}

/// Backpropagates `dL/dy` through `y = softmax(z / tau)`.
fn softmax_backward(y: &[f64], upstream: &[f64], tau: f64) -> Vec<f64> {
    let inner = dot(y, upstream);
    y.iter()
        .zip(upstream)
        .map(|(yi, ui)| yi * (ui - inner) / tau)
        .collect()
}

/// A resolved loss instance: contacts as indicator vectors, one logit row
/// and one noise row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossProblem {
    pub objects: usize,
    pub c_start: Vec<f64>,
    pub c_end: Vec<f64>,
    pub logits: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub tau: f64,
    pub mode: LossMode,
    pub norm: Norm,
    /// Hard one-hot forward, soft backward. Its gradient is biased by
    /// construction and is not finite-difference checkable.
    pub straight_through: bool,
}

impl LossProblem {
    fn check(&self) -> Result<()> {
        check_vector("c_start", &self.c_start, self.objects)?;
        check_vector("c_end", &self.c_end, self.objects)?;
        if self.noise.len() != self.logits.len() {
            return Err(Error::Dimension {
                what: "noise rows",
                expected: self.logits.len(),
                got: self.noise.len(),
            });
        }
        let width = self.objects * VERBS + 1;
        for row in &self.logits {
            if row.len() != width {
                return Err(Error::Dimension {
                    what: "logit row",
                    expected: width,
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    /// Soft relaxed steps (the backward path in straight-through mode).
    pub fn soft_steps(&self) -> Result<Vec<RelaxedStep>> {
        self.check()?;
        self.logits
            .iter()
            .zip(&self.noise)
            .map(|(l, g)| RelaxedStep::new(gumbel_softmax(l, self.tau, g)?, self.objects))
            .collect()
    }

    /// Steps the loss is evaluated on.
    pub fn forward_steps(&self) -> Result<Vec<RelaxedStep>> {
        if !self.straight_through {
            return self.soft_steps();
        }
        self.check()?;
        self.logits
            .iter()
            .zip(&self.noise)
            .map(|(l, g)| RelaxedStep::new(hard_one_hot(l, g), self.objects))
            .collect()
    }

    pub fn loss(&self) -> Result<LossReport> {
        combined_rule_loss(&self.c_start, &self.c_end, &self.forward_steps()?, self.mode, self.norm)
    }
}

/// Analytic gradient of the combined rule loss with respect to every logit:
/// the probability-space gradient chained through the softmax Jacobian.
pub fn grad_rule_loss(problem: &LossProblem) -> Result<Vec<Vec<f64>>> {
    let soft = problem.soft_steps()?;
    let forward = problem.forward_steps()?;
    let upstream = rule_loss_grad_probs(&problem.c_start, &problem.c_end, &forward, problem.mode, problem.norm)?;
    Ok(soft
        .iter()
        .zip(&upstream)
        .map(|(y, u)| softmax_backward(y.probabilities(), u, problem.tau))
        .collect())
}

/// Compares [`grad_rule_loss`] against central differences of the forward
/// loss, logit by logit. Returns the largest relative error
/// `|a - f| / max(1e-12, |a| + |f|)`.
pub fn finite_diff_check(problem: &LossProblem, h: f64) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::StepSize(h));
    }
    if problem.straight_through {
        return Err(Error::Invalid(
            "straight-through gradients are biased and cannot be finite-difference checked".into(),
        ));
    }
    let analytic = grad_rule_loss(problem)?;
    let mut probe = problem.clone();
    let mut worst = 0.0f64;
    for (k, row) in problem.logits.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            probe.logits[k][j] = x + h;
            let plus = probe.loss()?.total;
            probe.logits[k][j] = x - h;
            let minus = probe.loss()?.total;
            probe.logits[k][j] = x;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("loss"));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k][j];
            if !a.is_finite() {
                return Err(Error::NonFinite("gradient"));
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// JSON form of a loss instance, with contacts given by object name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossInstance {
    pub vocab: ObjectVocabulary,
    #[serde(default)]
    pub c_start: Vec<String>,
    #[serde(default)]
    pub c_end: Vec<String>,
    pub logits: Vec<Vec<f64>>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Missing noise means zero noise.
    #[serde(default)]
    pub noise: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub mode: LossMode,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default)]
    pub straight_through: bool,
}

fn default_tau() -> f64 {
    1.0
}

impl LossInstance {
    pub fn resolve(&self) -> Result<LossProblem> {
        let objects = self.vocab.len();
        let contact = |names: &[String]| -> Result<Vec<f64>> {
            let set = names.iter().map(|n| self.vocab.id(n)).collect::<Result<_>>()?;
            crate::vocab::ContactSet::to_vector(&set, objects)
        };
        let noise = match &self.noise {
            Some(n) => n.clone(),
            None => self.logits.iter().map(|row| vec![0.0; row.len()]).collect(),
        };
        let problem = LossProblem {
            objects,
            c_start: contact(&self.c_start)?,
            c_end: contact(&self.c_end)?,
            logits: self.logits.clone(),
            noise,
            tau: self.tau,
            mode: self.mode,
            norm: self.norm,
            straight_through: self.straight_through,
        };
        problem.check()?;
        Ok(problem)
    }
}
