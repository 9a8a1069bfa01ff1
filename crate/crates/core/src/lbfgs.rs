//! Limited-memory BFGS with a Wolfe line search.
//!
//! The line search brackets and zooms (cubic interpolation, bisection
//! fallback) until the strong Wolfe conditions hold. Close to an optimum the
//! sufficient-decrease test can drown in rounding error; there a step is also
//! accepted when the objective rises by at most `FLAT_TOLERANCE` (relative)
//! and the approximate Wolfe conditions on the directional derivative hold.

use std::collections::VecDeque;

/// Relative objective increase tolerated by the approximate Wolfe test.
pub const FLAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the gradient infinity norm is at most this.
    pub gradient_tolerance: f64,
    /// Armijo constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimizer of the cubic through two points with known slopes, if it lies
/// strictly inside the interval; otherwise the midpoint.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (min, max) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (max - min);
    if t.is_finite() && t > min + margin && t < max - margin {
        t
    } else {
        mid
    }
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    g0: f64,
    opts: &'a LbfgsOptions,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn eval(&mut self, alpha: f64) -> Point {
        self.evaluations += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        let (value, grad) = (self.f)(&x);
        let slope = dot(&grad, self.dir);
        Point {
            alpha,
            value,
            slope,
            x,
            grad,
        }
    }

    fn armijo(&self, p: &Point) -> bool {
        p.value <= self.f0 + self.opts.c1 * p.alpha * self.g0
    }

    fn strong_wolfe(&self, p: &Point) -> bool {
        self.armijo(p) && p.slope.abs() <= -self.opts.c2 * self.g0
    }

    fn approximate_wolfe(&self, p: &Point) -> bool {
        p.value <= self.f0 + FLAT_TOLERANCE * self.f0.abs()
            && p.slope <= (2.0 * self.opts.c1 - 1.0) * self.g0
            && p.slope >= self.opts.c2 * self.g0
    }

    fn acceptable(&self, p: &Point) -> bool {
        p.value.is_finite() && (self.strong_wolfe(p) || self.approximate_wolfe(p))
    }

    fn run(&mut self, alpha0: f64) -> Option<Point> {
        let start = Point {
            alpha: 0.0,
            value: self.f0,
            slope: self.g0,
            x: self.x.to_vec(),
            grad: Vec::new(),
        };
        let mut prev = start;
        let mut alpha = alpha0;
        // bracketing phase
        loop {
            if self.evaluations >= self.opts.max_line_search {
                return None;
            }
            let p = self.eval(alpha);
            if !p.value.is_finite() {
                // step overshot into overflow; shrink
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if self.acceptable(&p) {
                return Some(p);
            }
            if !self.armijo(&p) || (prev.alpha > 0.0 && p.value >= prev.value) {
                return self.zoom(prev, p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            prev = p;
            alpha *= 2.0;
        }
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        while self.evaluations < self.opts.max_line_search {
            if (hi.alpha - lo.alpha).abs() <= 4.0 * f64::EPSILON * lo.alpha.abs().max(hi.alpha.abs()) {
                break;
            }
            let alpha = interpolate(&lo, &hi);
            let p = self.eval(alpha);
            if self.acceptable(&p) {
                return Some(p);
            }
            if !p.value.is_finite() || !self.armijo(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        // the best decreasing point found is still progress
        (lo.alpha > 0.0 && lo.value < self.f0).then_some(lo)
    }
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    let mut history = vec![value];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let termination = loop {
        if inf_norm(&grad) <= opts.gradient_tolerance {
            break Termination::Converged;
        }
        if iterations == opts.max_iterations {
            break Termination::MaxIterations;
        }

        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / inf_norm(&grad)).min(1.0)
        } else {
            1.0
        };

        let mut search = LineSearch {
            f: &mut f,
            x: &x,
            dir: &dir,
            f0: value,
            g0: slope,
            opts,
            evaluations: 0,
        };
        let Some(step) = search.run(alpha0) else {
            break Termination::LineSearchFailed;
        };

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        value = step.value;
        grad = step.grad;
        history.push(value);
        iterations += 1;
    };
    LbfgsResult {
        x,
        value,
        gradient: grad,
        iterations,
        termination,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (v, g)
    }

    #[test]
    fn solves_rosenbrock() {
        let r = minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsOptions::default());
        assert_eq!(r.termination, Termination::Converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + FLAT_TOLERANCE * w[0].abs()));
    }

    #[test]
    fn quadratic_in_few_steps() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let f = |x: &[f64]| {
            let v = x.iter().zip(&diag).map(|(x, d)| 0.5 * d * (x - 1.0).powi(2)).sum();
            let g = x.iter().zip(&diag).map(|(x, d)| d * (x - 1.0)).collect();
            (v, g)
        };
        let r = minimize(f, vec![0.0; 4], &LbfgsOptions::default());
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.iterations < 30);
    }

    #[test]
    fn iteration_cap() {
        let opts = LbfgsOptions {
            max_iterations: 2,
            ..LbfgsOptions::default()
        };
        let r = minimize(rosenbrock, vec![-1.2, 1.0], &opts);
        assert_eq!(r.termination, Termination::MaxIterations);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn already_optimal() {
        let r = minimize(|x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]), vec![0.0], &LbfgsOptions::default());
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::Converged);
    }
}
