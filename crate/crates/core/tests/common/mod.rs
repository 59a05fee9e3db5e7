//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use sar_sizing::global::{Evaluation, Problem};

/// min sum x^2 s.t. x_1 >= 0.5; optimum (0.5, 0, 0) with objective 0.25.
pub struct ConstrainedSphere {
    pub bounds: Vec<(f64, f64)>,
}

impl ConstrainedSphere {
    pub fn new() -> Self {
        Self {
            bounds: vec![(-2.0, 2.0); 3],
        }
    }
}

impl Problem<f64> for ConstrainedSphere {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation<f64> {
        Evaluation {
            objective: x.iter().map(|v| v * v).sum(),
            slack: vec![x[0] - 0.5],
        }
    }
}

/// Textbook Hooke-Jeeves written independently of the library: base point,
/// coordinate probes, pattern point with doubling stride, halve on failure.
/// Clipping mirrors the library's bound handling.
pub fn reference_hj(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    init_frac: f64,
    tol: f64,
    max_iter: usize,
    log: &mut Vec<Vec<f64>>,
) -> Vec<f64> {
    let eval = |p: &[f64], log: &mut Vec<Vec<f64>>| {
        log.push(p.to_vec());
        f(p)
    };
    let n = x0.len();
    let mut h: Vec<f64> = bounds.iter().map(|(a, b)| init_frac * (b - a)).collect();
    let mut base = x0.to_vec();
    let mut fb = eval(&base, log);
    for _ in 0..max_iter {
        let mut p = base.clone();
        let mut fp = fb;
        for i in 0..n {
            let up = (p[i] + h[i]).clamp(bounds[i].0, bounds[i].1);
            if up != p[i] {
                let mut q = p.clone();
                q[i] = up;
                let fq = eval(&q, log);
                if fq < fp {
                    p = q;
                    fp = fq;
                    continue;
                }
            }
            let dn = (p[i] - h[i]).clamp(bounds[i].0, bounds[i].1);
            if dn != p[i] {
                let mut q = p.clone();
                q[i] = dn;
                let fq = eval(&q, log);
                if fq < fp {
                    p = q;
                    fp = fq;
                }
            }
        }
        if fp < fb {
            let mut dir: Vec<f64> = (0..n).map(|i| p[i] - base[i]).collect();
            let mut tries = 0;
            while tries < 8 {
                tries += 1;
                let q: Vec<f64> = (0..n)
                    .map(|i| (p[i] + dir[i]).clamp(bounds[i].0, bounds[i].1))
                    .collect();
                if q == p {
                    break;
                }
                let fq = eval(&q, log);
                if fq >= fp || fq.is_nan() {
                    break;
                }
                p = q;
                fp = fq;
                for d in dir.iter_mut() {
                    *d *= 2.0;
                }
            }
            base = p;
            fb = fp;
        } else {
            for v in h.iter_mut() {
                *v *= 0.5;
            }
        }
        let norm = h
            .iter()
            .zip(bounds)
            .map(|(v, (a, b))| (v / (b - a)).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm < tol {
            break;
        }
    }
    base
}

pub type TestFn = (&'static str, fn(&[f64]) -> f64, Vec<f64>, Vec<(f64, f64)>);

pub fn test_functions() -> Vec<TestFn> {
    vec![
        (
            "sphere",
            |x| x.iter().map(|v| v * v).sum(),
            vec![1.3, -0.7, 2.1],
            vec![(-3.0, 3.0); 3],
        ),
        (
            "rosenbrock",
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            vec![-1.2, 1.0],
            vec![(-2.0, 2.0); 2],
        ),
        (
            "booth",
            |x| (x[0] + 2.0 * x[1] - 7.0).powi(2) + (2.0 * x[0] + x[1] - 5.0).powi(2),
            vec![-4.0, 6.0],
            vec![(-10.0, 10.0); 2],
        ),
        (
            "matyas",
            |x| 0.26 * (x[0] * x[0] + x[1] * x[1]) - 0.48 * x[0] * x[1],
            vec![7.0, -3.0],
            vec![(-10.0, 10.0); 2],
        ),
        (
            "three_hump_camel",
            |x| 2.0 * x[0].powi(2) - 1.05 * x[0].powi(4) + x[0].powi(6) / 6.0 + x[0] * x[1] + x[1] * x[1],
            vec![1.5, -1.8],
            vec![(-5.0, 5.0); 2],
        ),
    ]
}

pub const QUADRATIC_OPTIMUM: [f64; 5] = [0.123, -0.456, 0.789, -0.321, 0.654];

pub fn quadratic_10d(x: &[f64]) -> f64 {
    // Convex, mildly coupled; optimum at c on the free coordinates 0..5
    // (frozen coordinates enter only as constants).
    let c = QUADRATIC_OPTIMUM;
    let d: Vec<f64> = (0..5).map(|i| x[i] - c[i]).collect();
    let mut s = 0.0;
    for (i, di) in d.iter().enumerate() {
        s += (1.0 + i as f64) * di * di;
    }
    s += 0.3 * d[0] * d[1] + 0.2 * d[2] * d[3];
    s + x[5..].iter().map(|v| v * v).sum::<f64>()
}
