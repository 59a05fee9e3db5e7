//! Surrogate-assisted constrained differential evolution.
//!
//! Each generation breeds a full DE/rand/1/bin offspring set, ranks it with
//! a cheap surrogate trained on every point simulated so far, and evaluates
//! only the top `k_infill` candidates. Survivors are chosen one-to-one under
//! Deb's feasibility rules. The search stops once enough variables have a
//! small population spread, or when the evaluation budget is spent.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::total_violation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Objective value and signed constraint margins (positive = satisfied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub objective: T,
    pub slack: Vec<T>,
}

impl<T: Scalar> Evaluation<T> {
    pub fn violation(&self) -> T {
        total_violation(&self.slack)
    }

    pub fn is_feasible(&self) -> bool {
        self.violation() == T::zero()
    }
}

/// Constrained minimization problem over a box.
pub trait Problem<T>: Sync {
    fn bounds(&self) -> &[(T, T)];
    fn evaluate(&self, x: &[T]) -> Evaluation<T>;

    fn dim(&self) -> usize {
        self.bounds().len()
    }
}

/// Deb's rules: feasible beats infeasible, feasible pairs compare on
/// objective, infeasible pairs on total violation. Strict.
pub fn feasibility_better<T: Scalar>(a: &Evaluation<T>, b: &Evaluation<T>) -> bool {
    compare_feasibility(a, b) == Ordering::Less
}

fn compare_feasibility<T: Scalar>(a: &Evaluation<T>, b: &Evaluation<T>) -> Ordering {
    let (va, vb) = (a.violation(), b.violation());
    let key = |x: T| if x.is_nan() { T::infinity() } else { x };
    match (va == T::zero(), vb == T::zero()) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => key(a.objective)
            .partial_cmp(&key(b.objective))
            .unwrap_or(Ordering::Equal),
        (false, false) => key(va).partial_cmp(&key(vb)).unwrap_or(Ordering::Equal),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry<T> {
    pub id: usize,
    pub generation: usize,
    pub x: Vec<T>,
    pub eval: Evaluation<T>,
}

/// Predicts objective and slacks from simulated points.
pub trait Surrogate<T>: Send {
    fn train(&mut self, archive: &[ArchiveEntry<T>], bounds: &[(T, T)]);
    fn is_trained(&self) -> bool;
    fn predict(&self, x: &[T]) -> Evaluation<T>;
}

/// Inverse-distance-weighted k-nearest-neighbour regression in
/// range-normalized coordinates, `k = min(5, |archive|)`, weights `1/d^2`.
#[derive(Debug, Clone)]
pub struct IdwSurrogate<T> {
    k: usize,
    inv_range: Vec<T>,
    lo: Vec<T>,
    points: Vec<(Vec<T>, Evaluation<T>)>,
}

impl<T: Scalar> Default for IdwSurrogate<T> {
    fn default() -> Self {
        Self::new(5)
    }
}

impl<T: Scalar> IdwSurrogate<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k: k.max(1),
            inv_range: Vec::new(),
            lo: Vec::new(),
            points: Vec::new(),
        }
    }

    fn normalize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.lo)
            .zip(&self.inv_range)
            .map(|((&v, &lo), &s)| (v - lo) * s)
            .collect()
    }
}

impl<T: Scalar> Surrogate<T> for IdwSurrogate<T> {
    fn train(&mut self, archive: &[ArchiveEntry<T>], bounds: &[(T, T)]) {
        self.lo = bounds.iter().map(|b| b.0).collect();
        self.inv_range = bounds.iter().map(|b| T::one() / (b.1 - b.0)).collect();
        self.points = if archive.len() > bounds.len() {
            archive.iter().map(|e| (self.normalize(&e.x), e.eval.clone())).collect()
        } else {
            Vec::new()
        };
    }

    fn is_trained(&self) -> bool {
        !self.points.is_empty()
    }

    fn predict(&self, x: &[T]) -> Evaluation<T> {
        let q = self.normalize(x);
        let mut dist: Vec<(T, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (p, _))| {
                let d2 = p.iter().zip(&q).fold(T::zero(), |a, (&u, &v)| a + (u - v) * (u - v));
                (d2, i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        let nearest = &dist[..self.k.min(dist.len())];
        if nearest[0].0 == T::zero() {
            return self.points[nearest[0].1].1.clone();
        }
        let m = self.points[0].1.slack.len();
        let mut wsum = T::zero();
        let mut obj = T::zero();
        let mut slack = vec![T::zero(); m];
        for &(d2, i) in nearest {
            let w = T::one() / d2;
            let e = &self.points[i].1;
            wsum += w;
            obj += w * e.objective;
            for (s, &v) in slack.iter_mut().zip(&e.slack) {
                *s += w * v;
            }
        }
        Evaluation {
            objective: obj / wsum,
            slack: slack.into_iter().map(|s| s / wsum).collect(),
        }
    }
}

/// Orders candidates by predicted violation, then predicted objective, and
/// returns the indices of the first `k_infill`. Untrained surrogates pass
/// every candidate through in order.
pub fn surrogate_rank<T: Scalar>(surrogate: &dyn Surrogate<T>, candidates: &[Vec<T>], k_infill: usize) -> Vec<usize> {
    if !surrogate.is_trained() {
        return (0..candidates.len()).collect();
    }
    let preds: Vec<Evaluation<T>> = candidates.iter().map(|c| surrogate.predict(c)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a], &preds[b]);
        pa.violation()
            .partial_cmp(&pb.violation())
            .unwrap_or(Ordering::Equal)
            .then(pa.objective.partial_cmp(&pb.objective).unwrap_or(Ordering::Equal))
    });
    order.truncate(k_infill);
    order
}

/// Latin hypercube: one point per stratum in every dimension.
pub fn init_population<T: Scalar>(bounds: &[(T, T)], size: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if size < 5 {
        return Err(Error::Config(format!("population size must be >= 5, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop = vec![Vec::with_capacity(bounds.len()); size];
    let p = T::of_usize(size);
    for &(lo, hi) in bounds {
        let mut strata: Vec<usize> = (0..size).collect();
        strata.shuffle(&mut rng);
        for (member, &s) in pop.iter_mut().zip(&strata) {
            let u = T::lit(rng.random::<f64>());
            member.push(lo + (T::of_usize(s) + u) / p * (hi - lo));
        }
    }
    Ok(pop)
}

/// `x_a + F (x_b - x_c)`.
pub fn de_mutant<T: Scalar>(pop: &[Vec<T>], (a, b, c): (usize, usize, usize), f: T) -> Vec<T> {
    pop[a]
        .iter()
        .zip(&pop[b])
        .zip(&pop[c])
        .map(|((&xa, &xb), &xc)| xa + f * (xb - xc))
        .collect()
}

/// Binomial crossover: gene `j` comes from the mutant when `u[j] < cr` or
/// `j == forced`.
pub fn binomial_crossover<T: Scalar>(target: &[T], mutant: &[T], cr: T, forced: usize, u: &[T]) -> Vec<T> {
    target
        .iter()
        .zip(mutant)
        .zip(u)
        .enumerate()
        .map(|(j, ((&t, &m), &uj))| if uj < cr || j == forced { m } else { t })
        .collect()
}

fn clip<T: Scalar>(x: &mut [T], bounds: &[(T, T)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.max(lo).min(hi);
    }
}

/// DE/rand/1/bin offspring, one per population member.
pub fn de_offspring<T: Scalar, R: Rng>(pop: &[Vec<T>], bounds: &[(T, T)], f: T, cr: T, rng: &mut R) -> Vec<Vec<T>> {
    let n = pop.len();
    assert!(n >= 4, "DE/rand/1 needs at least 4 members");
    let d = bounds.len();
    (0..n)
        .map(|i| {
            let mut pick = |exclude: &[usize]| loop {
                let r = rng.random_range(0..n);
                if !exclude.contains(&r) {
                    break r;
                }
            };
            let a = pick(&[i]);
            let b = pick(&[i, a]);
            let c = pick(&[i, a, b]);
            let mutant = de_mutant(pop, (a, b, c), f);
            let forced = rng.random_range(0..d);
            let u: Vec<T> = (0..d).map(|_| T::lit(rng.random::<f64>())).collect();
            let mut child = binomial_crossover(&pop[i], &mutant, cr, forced, &u);
            clip(&mut child, bounds);
            child
        })
        .collect()
}

/// `std_j / (hi_j - lo_j) < theta` per dimension (population std).
pub fn detect_convergence<T: Scalar>(pop: &[Vec<T>], bounds: &[(T, T)], theta: T) -> Vec<bool> {
    let n = T::of_usize(pop.len());
    bounds
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi))| {
            let mean = pop.iter().fold(T::zero(), |a, x| a + x[j]) / n;
            let var = pop.iter().fold(T::zero(), |a, x| a + (x[j] - mean) * (x[j] - mean)) / n;
            var.sqrt() / (hi - lo) < theta
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams<T> {
    pub pop_size: usize,
    pub f: T,
    pub cr: T,
    pub k_infill: usize,
    pub theta_conv: T,
    pub n_conv_target: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl<T: Scalar> GlobalParams<T> {
    /// `P = 10 d`, `F = 0.5`, `CR = 0.9`, `k_infill = max(2, P/5)`,
    /// `theta = 0.02`, target `ceil(0.7 d)` converged variables.
    pub fn defaults_for(dim: usize) -> Self {
        let pop_size = (10 * dim).max(5);
        Self {
            pop_size,
            f: T::lit(0.5),
            cr: T::lit(0.9),
            k_infill: (pop_size / 5).max(2),
            theta_conv: T::lit(0.02),
            n_conv_target: (7 * dim).div_ceil(10),
            max_evals: 2000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 5 {
            return Err(Error::Config(format!("pop_size must be >= 5, got {}", self.pop_size)));
        }
        if !(self.f >= T::zero() && self.f <= T::lit(2.0)) {
            return Err(Error::Config(format!("F must be in [0, 2], got {}", self.f)));
        }
        if !(self.cr >= T::zero() && self.cr <= T::one()) {
            return Err(Error::Config(format!("CR must be in [0, 1], got {}", self.cr)));
        }
        if self.k_infill == 0 {
            return Err(Error::Config("k_infill must be >= 1".into()));
        }
        if !(self.theta_conv > T::zero()) {
            return Err(Error::Config(format!(
                "theta_conv must be positive, got {}",
                self.theta_conv
            )));
        }
        Ok(())
    }
}

/// One row of the per-generation convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow<T> {
    pub generation: usize,
    pub evals: usize,
    pub best_objective: T,
    pub best_violation: T,
    pub converged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlobalStatus {
    /// Enough variables converged.
    Converged,
    /// Budget spent with a feasible best.
    BudgetExhausted,
    /// No feasible point found; `best` is the least-violating one (or the
    /// box centre when nothing was evaluated).
    NoFeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<T> {
    pub population: Vec<Vec<T>>,
    pub fitness: Vec<Evaluation<T>>,
    pub archive: Vec<ArchiveEntry<T>>,
    pub best: Option<ArchiveEntry<T>>,
    pub mask: Vec<bool>,
    pub generation: usize,
}

impl<T: Scalar> OptimizerState<T> {
    fn record(&mut self, generation: usize, x: Vec<T>, eval: Evaluation<T>) {
        let entry = ArchiveEntry {
            id: self.archive.len(),
            generation,
            x,
            eval,
        };
        let improves = match &self.best {
            None => true,
            Some(b) => feasibility_better(&entry.eval, &b.eval),
        };
        if improves {
            self.best = Some(entry.clone());
        }
        self.archive.push(entry);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalResult<T> {
    pub x_best: Vec<T>,
    pub best: Option<Evaluation<T>>,
    pub mask: Vec<bool>,
    pub archive: Vec<ArchiveEntry<T>>,
    pub trace: Vec<GenerationRow<T>>,
    pub status: GlobalStatus,
}

impl<T: Scalar> GlobalResult<T> {
    pub fn evals(&self) -> usize {
        self.archive.len()
    }
}

fn evaluate_batch<T: Scalar, P: Problem<T> + ?Sized>(problem: &P, xs: &[Vec<T>]) -> Vec<Evaluation<T>> {
    xs.par_iter().map(|x| problem.evaluate(x)).collect()
}

pub fn run_global<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    params: &GlobalParams<T>,
    surrogate: &mut dyn Surrogate<T>,
) -> Result<GlobalResult<T>> {
    params.validate()?;
    let bounds = problem.bounds().to_vec();
    let d = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    use rand::RngCore;
    let init = init_population(&bounds, params.pop_size, rng.next_u64())?;

    let n0 = init.len().min(params.max_evals);
    let evals0 = evaluate_batch(problem, &init[..n0]);
    let mut state = OptimizerState {
        population: Vec::new(),
        fitness: Vec::new(),
        archive: Vec::new(),
        best: None,
        mask: vec![false; d],
        generation: 0,
    };
    for (x, e) in init[..n0].iter().zip(evals0) {
        state.population.push(x.clone());
        state.fitness.push(e.clone());
        state.record(0, x.clone(), e);
    }

    let mut trace = Vec::new();
    let push_row = |state: &OptimizerState<T>, trace: &mut Vec<GenerationRow<T>>| {
        let (obj, viol) = state
            .best
            .as_ref()
            .map(|b| (b.eval.objective, b.eval.violation()))
            .unwrap_or((T::nan(), T::nan()));
        trace.push(GenerationRow {
            generation: state.generation,
            evals: state.archive.len(),
            best_objective: obj,
            best_violation: viol,
            converged: state.mask.iter().filter(|&&m| m).count(),
        });
    };

    let mut converged = false;
    if state.population.len() >= 4 {
        state.mask = detect_convergence(&state.population, &bounds, params.theta_conv);
        converged = state.mask.iter().filter(|&&m| m).count() >= params.n_conv_target;
        push_row(&state, &mut trace);

        while !converged && state.archive.len() < params.max_evals {
            state.generation += 1;
            surrogate.train(&state.archive, &bounds);
            let offspring = de_offspring(&state.population, &bounds, params.f, params.cr, &mut rng);
            let mut chosen = surrogate_rank(surrogate, &offspring, params.k_infill);
            chosen.truncate(params.max_evals - state.archive.len());
            let xs: Vec<Vec<T>> = chosen.iter().map(|&i| offspring[i].clone()).collect();
            let evals = evaluate_batch(problem, &xs);
            for ((&i, x), e) in chosen.iter().zip(xs).zip(evals) {
                state.record(state.generation, x.clone(), e.clone());
                if !feasibility_better(&state.fitness[i], &e) {
                    state.population[i] = x;
                    state.fitness[i] = e;
                }
            }
            state.mask = detect_convergence(&state.population, &bounds, params.theta_conv);
            converged = state.mask.iter().filter(|&&m| m).count() >= params.n_conv_target;
            push_row(&state, &mut trace);
        }
    } else if !state.population.is_empty() {
        push_row(&state, &mut trace);
    }

    let (x_best, best) = match &state.best {
        Some(b) => (b.x.clone(), Some(b.eval.clone())),
        None => (bounds.iter().map(|&(lo, hi)| (lo + hi) * T::lit(0.5)).collect(), None),
    };
    let feasible = best.as_ref().is_some_and(|b| b.is_feasible());
    let status = if !feasible {
        log::warn!(
            "global phase found no feasible point after {} evaluations",
            state.archive.len()
        );
        GlobalStatus::NoFeasible
    } else if converged {
        GlobalStatus::Converged
    } else {
        GlobalStatus::BudgetExhausted
    };
    Ok(GlobalResult {
        x_best,
        best,
        mask: state.mask,
        archive: state.archive,
        trace,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(objective: f64, slack: Vec<f64>) -> Evaluation<f64> {
        Evaluation { objective, slack }
    }

    #[test]
    fn deb_rules() {
        assert!(feasibility_better(&ev(9.0, vec![0.1]), &ev(1.0, vec![-0.1])));
        assert!(feasibility_better(&ev(3.0, vec![0.0]), &ev(5.0, vec![1.0])));
        assert!(!feasibility_better(
            &ev(0.0, vec![-0.1, -0.1]),
            &ev(9.0, vec![-0.1, 0.3])
        ));
        assert!(!feasibility_better(&ev(1.0, vec![]), &ev(1.0, vec![])));
    }

    #[test]
    fn lhs_strata_and_determinism() {
        let pop = init_population(&[(0.0f64, 1.0)], 5, 3).unwrap();
        let mut strata: Vec<usize> = pop.iter().map(|x| (x[0] * 5.0).floor() as usize).collect();
        strata.sort();
        assert_eq!(strata, vec![0, 1, 2, 3, 4]);
        assert_eq!(pop, init_population(&[(0.0, 1.0)], 5, 3).unwrap());
        assert!(matches!(init_population(&[(0.0f64, 1.0)], 4, 3), Err(Error::Config(_))));

        let b: Vec<(f64, f64)> = (0..8).map(|i| (-(i as f64), 2.0 + i as f64)).collect();
        let pop = init_population(&b, 40, 9).unwrap();
        assert_eq!(pop.len(), 40);
        for x in &pop {
            for (v, &(lo, hi)) in x.iter().zip(&b) {
                assert!(*v >= lo && *v < hi);
            }
        }
    }

    #[test]
    fn mutation_examples() {
        let pop = vec![vec![0.1f64], vec![0.2], vec![0.3], vec![0.4]];
        let v = de_mutant(&pop, (1, 2, 3), 0.5);
        assert!((v[0] - 0.15).abs() < 1e-15);
        assert_eq!(de_mutant(&pop, (1, 2, 2), 0.7), vec![0.2]);
        let v = de_mutant(&pop, (3, 0, 1), 0.0);
        let child = binomial_crossover(&pop[0], &v, 1.0, 0, &[0.99]);
        assert_eq!(child, pop[3]);
        let kept = binomial_crossover(&[1.0f64, 2.0], &[5.0, 6.0], 0.0, 1, &[0.5, 0.5]);
        assert_eq!(kept, vec![1.0, 6.0]);
    }

    #[test]
    fn offspring_stay_in_bounds() {
        let b = vec![(0.0f64, 1.0); 3];
        let pop = init_population(&b, 10, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kids = de_offspring(&pop, &b, 1.5, 0.9, &mut rng);
        assert_eq!(kids.len(), 10);
        assert!(kids.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn convergence_mask() {
        let b = vec![(0.0f64, 1.0), (0.0, 1.0)];
        let pop: Vec<Vec<f64>> = (0..1000).map(|i| vec![0.3, (i as f64 + 0.5) / 1000.0]).collect();
        assert_eq!(detect_convergence(&pop, &b, 0.02), vec![true, false]);
        assert_eq!(detect_convergence(&pop, &b, 1.0), vec![true, true]);
        let spread = {
            let m = detect_convergence(&pop, &b, 0.2887);
            let n = detect_convergence(&pop, &b, 0.2886);
            (m[1], n[1])
        };
        assert_eq!(spread, (true, false));
    }

    fn archive_entry(id: usize, x: Vec<f64>, objective: f64, slack: f64) -> ArchiveEntry<f64> {
        ArchiveEntry {
            id,
            generation: 0,
            x,
            eval: ev(objective, vec![slack]),
        }
    }

    #[test]
    fn idw_ranks_near_feasible_cheap_cluster_first() {
        // Feasible low-power cluster near (0.1, 0.1), infeasible cluster
        // near (0.9, 0.9).
        let archive = vec![
            archive_entry(0, vec![0.1, 0.1], 1.0, 0.5),
            archive_entry(1, vec![0.15, 0.1], 1.2, 0.4),
            archive_entry(2, vec![0.9, 0.9], 0.5, -1.0),
            archive_entry(3, vec![0.85, 0.9], 0.6, -0.8),
        ];
        let bounds = [(0.0, 1.0), (0.0, 1.0)];
        let mut s = IdwSurrogate::default();
        s.train(&archive, &bounds);
        assert!(s.is_trained());
        // Hand computation for q = (0.2, 0.2): squared distances 0.02,
        // 0.0125, 0.98, 0.9125; weights 1/d^2.
        let q = [0.2, 0.2];
        let w: Vec<f64> = [0.02, 0.0125, 0.98, 0.9125].iter().map(|d| 1.0 / d).collect();
        let ws: f64 = w.iter().sum();
        let slack = (w[0] * 0.5 + w[1] * 0.4 - w[2] * 1.0 - w[3] * 0.8) / ws;
        let obj = (w[0] * 1.0 + w[1] * 1.2 + w[2] * 0.5 + w[3] * 0.6) / ws;
        let p = s.predict(&q);
        assert!((p.slack[0] - slack).abs() < 1e-12);
        assert!((p.objective - obj).abs() < 1e-12);

        let cands = vec![vec![0.8, 0.8], vec![0.2, 0.2], vec![0.5, 0.6]];
        assert_eq!(surrogate_rank(&s, &cands, 1), vec![1]);
        let mut all = surrogate_rank(&s, &cands, 3);
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert_eq!(s.predict(&[0.9, 0.9]), archive[2].eval);
    }

    #[test]
    fn untrained_surrogate_passes_through() {
        let mut s = IdwSurrogate::<f64>::default();
        assert_eq!(surrogate_rank(&s, &[vec![0.0], vec![1.0]], 1), vec![0, 1]);
        s.train(&[archive_entry(0, vec![0.5], 1.0, 1.0)], &[(0.0, 1.0)]);
        assert!(!s.is_trained());
    }

    #[test]
    fn default_params() {
        let p = GlobalParams::<f64>::defaults_for(8);
        assert_eq!((p.pop_size, p.k_infill, p.n_conv_target), (80, 16, 6));
        assert_eq!(GlobalParams::<f64>::defaults_for(3).n_conv_target, 3);
        assert!(p.validate().is_ok());
    }
}
