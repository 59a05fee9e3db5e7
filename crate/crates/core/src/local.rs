//! Blended Hooke-Jeeves pattern search with selective rollback.
//!
//! Cheap evaluations drive an ordinary Hooke-Jeeves search over the free
//! (unfrozen) coordinates. After every `lambda`-th successful move the
//! current best is checked with the expensive evaluator; if the blended cost
//! `(1 - w) f_cheap + w a max(0, f_exp - f_backup)` exceeds `f_cheap` the
//! search returns to the last verified point, shrinks its steps and raises
//! `w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which cheap value enters the blend test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendReference {
    /// The freshly accepted point.
    Candidate,
    /// The last verified backup point.
    Backup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalParams<T> {
    /// Initial step per free variable as a fraction of its range.
    pub initial_step: T,
    pub shrink: T,
    /// Successful moves between expensive checks; `None` never checks.
    pub lambda: Option<usize>,
    /// Penalty scale `a`.
    pub penalty_scale: T,
    /// Weight increment after a rollback.
    pub weight_step: T,
    /// Stop when the range-relative step norm over free variables falls
    /// below this.
    pub tolerance: T,
    pub w0: T,
    pub max_iter: usize,
    /// Cap on stride doublings in one pattern move.
    pub max_extrapolations: usize,
    pub blend_reference: BlendReference,
}

impl<T: Scalar> Default for LocalParams<T> {
    fn default() -> Self {
        Self {
            initial_step: T::lit(0.1),
            shrink: T::lit(0.5),
            lambda: Some(5),
            penalty_scale: T::one(),
            weight_step: T::lit(0.1),
            tolerance: T::lit(1e-3),
            w0: T::lit(0.5),
            max_iter: 200,
            max_extrapolations: 8,
            blend_reference: BlendReference::Candidate,
        }
    }
}

impl<T: Scalar> LocalParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lambda == Some(0) {
            return bad("lambda must be >= 1".into());
        }
        if !(self.penalty_scale > T::zero()) {
            return bad(format!("penalty scale must be positive, got {}", self.penalty_scale));
        }
        if !(self.weight_step > T::zero() && self.weight_step <= T::one()) {
            return bad(format!("weight step must be in (0, 1], got {}", self.weight_step));
        }
        if !(self.tolerance > T::zero()) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.w0 >= T::zero() && self.w0 <= T::one()) {
            return bad(format!("w0 must be in [0, 1], got {}", self.w0));
        }
        if !(self.shrink > T::zero() && self.shrink < T::one()) {
            return bad(format!("shrink must be in (0, 1), got {}", self.shrink));
        }
        if !(self.initial_step > T::zero()) {
            return bad(format!("initial step must be positive, got {}", self.initial_step));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendOutcome<T> {
    pub penalty: T,
    pub f_blend: T,
    pub rollback: bool,
}

/// `penalty = a max(0, f_exp - f_backup)`,
/// `f_blend = (1 - w) f_cheap + w penalty`, rollback when
/// `f_blend > f_cheap`. A failed (infinite or NaN) expensive value always
/// rolls back; a failed backup is beaten by any finite value.
pub fn blend_decision<T: Scalar>(f_cheap: T, f_exp: T, f_backup: T, w: T, a: T) -> BlendOutcome<T> {
    if !f_exp.is_finite() {
        return BlendOutcome {
            penalty: T::infinity(),
            f_blend: T::infinity(),
            rollback: true,
        };
    }
    let excess = if f_backup.is_finite() {
        (f_exp - f_backup).max(T::zero())
    } else {
        T::zero()
    };
    let penalty = a * excess;
    let f_blend = (T::one() - w) * f_cheap + w * penalty;
    BlendOutcome {
        penalty,
        f_blend,
        rollback: f_blend > f_cheap,
    }
}

/// Classic Hooke-Jeeves coordinate probe: for each free coordinate try
/// `+step` then `-step` (clipped to bounds), keeping the first improvement.
/// Returns the improved point and value, or `None`.
pub fn exploratory_search<T: Scalar, F: FnMut(&[T]) -> T>(
    x: &[T],
    fx: T,
    step: &[T],
    frozen: &[bool],
    bounds: &[(T, T)],
    f: &mut F,
) -> Option<(Vec<T>, T)> {
    let mut cur = x.to_vec();
    let mut f_cur = fx;
    for i in 0..x.len() {
        if frozen[i] {
            continue;
        }
        for dir in [T::one(), -T::one()] {
            let (lo, hi) = bounds[i];
            let v = (cur[i] + dir * step[i]).max(lo).min(hi);
            if v == cur[i] {
                continue;
            }
            let mut trial = cur.clone();
            trial[i] = v;
            let ft = f(&trial);
            if ft < f_cur {
                cur = trial;
                f_cur = ft;
                break;
            }
        }
    }
    (f_cur < fx).then_some((cur, f_cur))
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRow<T> {
    pub iteration: usize,
    pub f_cheap: T,
    pub f_expensive: Option<T>,
    pub w: T,
    pub step_norm: T,
    pub rollback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult<T> {
    pub x_best: Vec<T>,
    pub f_cheap: T,
    pub f_expensive: T,
    pub iterations: usize,
    pub rollbacks: usize,
    pub cheap_evals: usize,
    pub expensive_evals: usize,
    pub final_w: T,
    pub final_step: Vec<T>,
    pub trace: Vec<LocalRow<T>>,
}

fn step_norm<T: Scalar>(step: &[T], frozen: &[bool], bounds: &[(T, T)]) -> T {
    step.iter()
        .zip(frozen)
        .zip(bounds)
        .filter(|((_, &fr), _)| !fr)
        .fold(T::zero(), |a, ((&s, _), &(lo, hi))| {
            let r = s / (hi - lo);
            a + r * r
        })
        .sqrt()
}

pub fn run_local<T, C, E>(
    x0: &[T],
    frozen: &[bool],
    bounds: &[(T, T)],
    mut f_cheap: C,
    mut f_expensive: E,
    params: &LocalParams<T>,
) -> Result<LocalResult<T>>
where
    T: Scalar,
    C: FnMut(&[T]) -> T,
    E: FnMut(&[T]) -> T,
{
    params.validate()?;
    let d = x0.len();
    if frozen.len() != d || bounds.len() != d {
        return Err(Error::Config(format!(
            "dimension mismatch: x0 {d}, mask {}, bounds {}",
            frozen.len(),
            bounds.len()
        )));
    }
    let mut cheap_evals = 0usize;
    let mut expensive_evals = 0usize;
    let mut cheap = |x: &[T]| {
        cheap_evals += 1;
        f_cheap(x)
    };
    let mut expensive = |x: &[T]| {
        expensive_evals += 1;
        let v = f_expensive(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut step: Vec<T> = bounds
        .iter()
        .zip(frozen)
        .map(|(&(lo, hi), &fr)| if fr { T::zero() } else { params.initial_step * (hi - lo) })
        .collect();
    let mut x_best = x0.to_vec();
    let mut fc_best = cheap(&x_best);
    let mut fe_best = if params.lambda.is_some() {
        expensive(&x_best)
    } else {
        T::nan()
    };
    let mut x_backup = x_best.clone();
    let mut fc_backup = fc_best;
    let mut f_backup = fe_best;
    let mut fe_at: Option<Vec<T>> = params.lambda.map(|_| x_best.clone());
    let mut w = params.w0;
    let mut successes = 0usize;
    let mut rollbacks = 0usize;
    let mut trace = Vec::new();
    let mut iterations = 0;

    for k in 1..=params.max_iter {
        iterations = k;
        let mut row_exp = None;
        let mut rolled = false;
        match exploratory_search(&x_best, fc_best, &step, frozen, bounds, &mut cheap) {
            Some((x_new, f_new)) => {
                let (x_cur, f_cur) = pattern_move(&x_best, x_new, f_new, bounds, params.max_extrapolations, &mut cheap);
                x_best = x_cur;
                fc_best = f_cur;
                successes += 1;
                if let Some(lambda) = params.lambda {
                    if successes.is_multiple_of(lambda) {
                        let fe = expensive(&x_best);
                        row_exp = Some(fe);
                        let fc_ref = match params.blend_reference {
                            BlendReference::Candidate => fc_best,
                            BlendReference::Backup => fc_backup,
                        };
                        let out = blend_decision(fc_ref, fe, f_backup, w, params.penalty_scale);
                        if out.rollback {
                            x_best = x_backup.clone();
                            fc_best = fc_backup;
                            fe_best = f_backup;
                            fe_at = Some(x_best.clone());
                            for (s, &fr) in step.iter_mut().zip(frozen) {
                                if !fr {
                                    *s *= params.shrink;
                                }
                            }
                            w = (w + params.weight_step).min(T::one());
                            rollbacks += 1;
                            rolled = true;
                        } else {
                            x_backup = x_best.clone();
                            fc_backup = fc_best;
                            f_backup = fe;
                            fe_best = fe;
                            fe_at = Some(x_best.clone());
                        }
                    }
                }
            }
            None => {
                for (s, &fr) in step.iter_mut().zip(frozen) {
                    if !fr {
                        *s *= params.shrink;
                    }
                }
            }
        }
        let norm = step_norm(&step, frozen, bounds);
        trace.push(LocalRow {
            iteration: k,
            f_cheap: fc_best,
            f_expensive: row_exp,
            w,
            step_norm: norm,
            rollback: rolled,
        });
        if norm < params.tolerance {
            break;
        }
    }

    if params.lambda.is_some() && fe_at.as_deref() != Some(&x_best[..]) {
        fe_best = expensive(&x_best);
    }
    Ok(LocalResult {
        x_best,
        f_cheap: fc_best,
        f_expensive: fe_best,
        iterations,
        rollbacks,
        cheap_evals,
        expensive_evals,
        final_w: w,
        final_step: step,
        trace,
    })
}

/// Extrapolates along `x_new - x_base`, doubling the stride while the cheap
/// value keeps improving.
fn pattern_move<T: Scalar, F: FnMut(&[T]) -> T>(
    x_base: &[T],
    x_new: Vec<T>,
    f_new: T,
    bounds: &[(T, T)],
    max_extrapolations: usize,
    f: &mut F,
) -> (Vec<T>, T) {
    let mut stride: Vec<T> = x_new.iter().zip(x_base).map(|(&a, &b)| a - b).collect();
    let mut cur = x_new;
    let mut f_cur = f_new;
    for _ in 0..max_extrapolations {
        let trial: Vec<T> = cur
            .iter()
            .zip(&stride)
            .zip(bounds)
            .map(|((&c, &s), &(lo, hi))| (c + s).max(lo).min(hi))
            .collect();
        if trial == cur {
            break;
        }
        let ft = f(&trial);
        if ft < f_cur {
            cur = trial;
            f_cur = ft;
            stride.iter_mut().for_each(|s| *s = *s + *s);
        } else {
            break;
        }
    }
    (cur, f_cur)
}
