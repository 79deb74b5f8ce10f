//! Sparse minimization over the probability simplex ("spmin").
//!
//! Minimizes `cᵀp + Υ Σ_i p_i ((p_i / q_i)^(r-1) - 1)` subject to `Σp = 1`,
//! `p ≥ 0`, where `q` is a reference distribution and `Υ = T / (r - 1)`.
//! The KKT conditions give the thresholded form
//!
//! ```text
//! p_i = q_i · ((μ - c_i)₊ / (rΥ))^(1/(r-1))
//! ```
//!
//! so every entry whose cost reaches the threshold `μ` is exactly zero. For
//! `r = 2` the threshold is found by a linear sweep over the sorted costs;
//! otherwise by bisection on `μ`, using that `‖p(μ)‖₁` is strictly
//! increasing on `[min c, max c + rΥ]`.
//!
//! Entries with a zero reference probability are treated as absent: their
//! probability is fixed to zero and they do not take part in the search.

use serde::Serialize;

use crate::error::{Error, Result};

/// Bisection stops once `|‖p‖₁ - 1|` drops to this level.
pub const BISECTION_TOLERANCE: f64 = 1e-12;
/// Bisection also stops once the bracket shrinks to this fraction of its initial width.
pub const BISECTION_RELATIVE_WIDTH: f64 = 1e-14;
pub const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexProblem {
    costs: Vec<f64>,
    reference: Vec<f64>,
    r: f64,
    temperature: f64,
}

impl SimplexProblem {
    pub fn new(costs: Vec<f64>, reference: Vec<f64>, r: f64, temperature: f64) -> Result<Self> {
        validate(&costs, &reference, r, temperature)?;
        Ok(SimplexProblem {
            costs,
            reference,
            r,
            temperature,
        })
    }

    /// Problem with the uniform reference `1/m`.
    pub fn with_uniform_reference(costs: Vec<f64>, r: f64, temperature: f64) -> Result<Self> {
        let m = costs.len().max(1);
        let reference = vec![1.0 / m as f64; costs.len()];
        Self::new(costs, reference, r, temperature)
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// `Υ = T / (r - 1)`
    pub fn upsilon(&self) -> f64 {
        self.temperature / (self.r - 1.0)
    }

    /// Value of the regularized objective at `p` (the constant `-Υ` included).
    pub fn objective(&self, p: &[f64]) -> f64 {
        objective(&self.costs, &self.reference, self.r, self.temperature, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexSolution {
    pub p: Vec<f64>,
    /// Threshold multiplier of the sum-to-one constraint.
    pub mu: f64,
    /// Indices with `p_i > 0`, ascending.
    pub support: Vec<usize>,
    pub kkt_residual: f64,
}

impl SimplexSolution {
    fn assemble(problem: &SimplexProblem, p: Vec<f64>, mu: f64) -> Self {
        let support = p.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i).collect();
        let kkt_residual = kkt_residual(problem, &p, mu);
        SimplexSolution {
            p,
            mu,
            support,
            kkt_residual,
        }
    }
}

/// Solves the problem, with the linear sweep when `r = 2` and bisection otherwise.
pub fn spmin(problem: &SimplexProblem) -> Result<SimplexSolution> {
    let mut p = vec![0.0; problem.costs.len()];
    let mu = solve_into(
        &problem.costs,
        &problem.reference,
        problem.r,
        problem.temperature,
        &mut p,
    )?;
    Ok(SimplexSolution::assemble(problem, p, mu))
}

/// Linear search over sorted costs; requires `r = 2`.
pub fn spmin_quadratic(problem: &SimplexProblem) -> Result<SimplexSolution> {
    if problem.r != 2.0 {
        return Err(Error::invalid("r", problem.r, "the linear search requires r = 2"));
    }
    let mut p = vec![0.0; problem.costs.len()];
    let mu = quadratic_into(&problem.costs, &problem.reference, problem.temperature, &mut p);
    Ok(SimplexSolution::assemble(problem, p, mu))
}

/// Bisection on the threshold; valid for any `r > 1`.
pub fn spmin_bisection(problem: &SimplexProblem) -> Result<SimplexSolution> {
    let mut p = vec![0.0; problem.costs.len()];
    let mu = bisection_into(
        &problem.costs,
        &problem.reference,
        problem.r,
        problem.temperature,
        &mut p,
    )?;
    Ok(SimplexSolution::assemble(problem, p, mu))
}

/// Largest violation of the KKT system at `(p, μ)`: stationarity on the
/// support, `μ ≤ c_i` off it, and the sum-to-one constraint.
pub fn kkt_residual(problem: &SimplexProblem, p: &[f64], mu: f64) -> f64 {
    let r = problem.r;
    let scale = r * problem.upsilon();
    let mut worst = (p.iter().sum::<f64>() - 1.0).abs();
    for ((&c, &q), &pi) in problem.costs.iter().zip(&problem.reference).zip(p) {
        if q == 0.0 {
            continue;
        }
        let v = if pi > 0.0 {
            (c + scale * (pi / q).powf(r - 1.0) - mu).abs()
        } else {
            (mu - c).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

pub(crate) fn objective(costs: &[f64], reference: &[f64], r: f64, temperature: f64, p: &[f64]) -> f64 {
    let upsilon = temperature / (r - 1.0);
    costs
        .iter()
        .zip(reference)
        .zip(p)
        .filter(|(_, &pi)| pi > 0.0)
        .map(|((&c, &q), &pi)| c * pi + upsilon * pi * ((pi / q).powf(r - 1.0) - 1.0))
        .sum()
}

/// Allocation-free entry point used by the policy iteration. Writes the
/// solution into `out` and returns `μ`. Inputs must already satisfy the
/// problem invariants.
pub(crate) fn solve_into(costs: &[f64], reference: &[f64], r: f64, temperature: f64, out: &mut [f64]) -> Result<f64> {
    if r == 2.0 {
        Ok(quadratic_into(costs, reference, temperature, out))
    } else {
        bisection_into(costs, reference, r, temperature, out)
    }
}

fn quadratic_into(costs: &[f64], reference: &[f64], temperature: f64, out: &mut [f64]) -> f64 {
    let mut order: Vec<usize> = (0..costs.len()).filter(|&i| reference[i] > 0.0).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));

    // L1(k) = (c_(k) W_k - S_k) / 2T with W_k = Σ q, S_k = Σ q c over the k cheapest.
    let two_t = 2.0 * temperature;
    let (mut weight, mut weighted_cost) = (0.0, 0.0);
    let mut support = 0;
    for &i in &order {
        let (w, s) = (weight + reference[i], weighted_cost + reference[i] * costs[i]);
        if support > 0 && (costs[i] * w - s) / two_t >= 1.0 {
            break;
        }
        weight = w;
        weighted_cost = s;
        support += 1;
    }
    let mu = (two_t + weighted_cost) / weight;

    out.fill(0.0);
    let mut total = 0.0;
    for &i in &order[..support] {
        let v = (reference[i] * (mu - costs[i]) / two_t).max(0.0);
        out[i] = v;
        total += v;
    }
    for &i in &order[..support] {
        out[i] /= total;
    }
    mu
}

fn bisection_into(costs: &[f64], reference: &[f64], r: f64, temperature: f64, out: &mut [f64]) -> Result<f64> {
    let scale = r * temperature / (r - 1.0);
    let exponent = 1.0 / (r - 1.0);
    let active = || (0..costs.len()).filter(|&i| reference[i] > 0.0);
    let (mut lo, mut hi) = active().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
        (lo.min(costs[i]), hi.max(costs[i]))
    });
    hi += scale;
    let mass = |mu: f64| -> f64 {
        active()
            .map(|i| reference[i] * ((mu - costs[i]).max(0.0) / scale).powf(exponent))
            .sum()
    };

    let width = hi - lo;
    let mut mu = 0.5 * (lo + hi);
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..BISECTION_MAX_ITER {
        mu = 0.5 * (lo + hi);
        let total = mass(mu);
        residual = (total - 1.0).abs();
        if residual <= BISECTION_TOLERANCE || hi - lo <= BISECTION_RELATIVE_WIDTH * width {
            converged = true;
            break;
        }
        if total < 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "spmin bisection",
            iterations: BISECTION_MAX_ITER,
            residual,
        });
    }

    out.fill(0.0);
    let mut total = 0.0;
    for i in active() {
        let v = reference[i] * ((mu - costs[i]).max(0.0) / scale).powf(exponent);
        out[i] = v;
        total += v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    // Threshold consistent with the normalized p: mean stationarity value on the support.
    let mu = active()
        .filter(|&i| out[i] > 0.0)
        .map(|i| out[i] * (costs[i] + scale * (out[i] / reference[i]).powf(r - 1.0)))
        .sum();
    Ok(mu)
}

fn validate(costs: &[f64], reference: &[f64], r: f64, temperature: f64) -> Result<()> {
    if costs.is_empty() {
        return Err(Error::invalid("costs", "[]", "need at least one entry"));
    }
    if costs.len() != reference.len() {
        return Err(Error::invalid(
            "ref",
            reference.len(),
            format!("length differs from costs ({})", costs.len()),
        ));
    }
    if let Some(c) = costs.iter().find(|c| !c.is_finite()) {
        return Err(Error::invalid("costs", c, "costs must be finite"));
    }
    if let Some(q) = reference.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
        return Err(Error::invalid("ref", q, "reference probabilities must be non-negative"));
    }
    let total: f64 = reference.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("ref", total, "reference probabilities must sum to 1"));
    }
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::invalid("r", r, "must be finite and > 1"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid("T", temperature, "must be finite and > 0"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(costs: &[f64], r: f64, t: f64) -> SimplexProblem {
        SimplexProblem::with_uniform_reference(costs.to_vec(), r, t).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    const LINEAR: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

    #[test]
    fn quadratic_closed_form_on_linear_costs() {
        let sol = spmin_quadratic(&uniform(&LINEAR, 2.0, 1.0)).unwrap();
        assert_eq!(sol.support, vec![0, 1, 2, 3]);
        assert!((sol.mu - 5.0).abs() < 1e-12);
        assert_close(&sol.p, &[0.4, 0.3, 0.2, 0.1, 0.0], 1e-12);
        assert_eq!(sol.p[4], 0.0);
    }

    #[test]
    fn unsorted_costs_at_tiny_temperature_pick_the_minimum() {
        let sol = spmin(&uniform(&[3.0, 1.0], 2.0, 1e-9)).unwrap();
        assert_eq!(sol.p, vec![0.0, 1.0]);
    }

    #[test]
    fn skewed_reference_keeps_single_entry() {
        let problem = SimplexProblem::new(vec![1.0, 2.0], vec![0.9, 0.1], 2.0, 0.05).unwrap();
        let sol = spmin_quadratic(&problem).unwrap();
        assert_eq!(sol.p, vec![1.0, 0.0]);
        assert!((sol.mu - (1.0 + 0.1 / 0.9)).abs() < 1e-12);
        let bis = spmin_bisection(&problem).unwrap();
        assert_close(&bis.p, &sol.p, 1e-9);
    }

    #[test]
    fn bisection_threshold_for_r_three_halves() {
        let sol = spmin_bisection(&uniform(&LINEAR, 1.5, 1.0)).unwrap();
        assert!((sol.mu - (3.0 + 7f64.sqrt())).abs() < 1e-9, "{}", sol.mu);
    }

    #[test]
    fn huge_temperature_returns_reference() {
        let problem = SimplexProblem::new(LINEAR.to_vec(), vec![0.1, 0.2, 0.3, 0.25, 0.15], 1.5, 1e6).unwrap();
        let sol = spmin(&problem).unwrap();
        assert_close(&sol.p, problem.reference(), 1e-6);
    }

    #[test]
    fn equal_costs_return_reference() {
        for r in [1.3, 2.0, 3.5] {
            for t in [0.01, 1.0, 100.0] {
                let problem = SimplexProblem::new(vec![1.0, 1.0], vec![0.3, 0.7], r, t).unwrap();
                assert_close(&spmin(&problem).unwrap().p, &[0.3, 0.7], 1e-12);
            }
        }
    }

    #[test]
    fn single_entry() {
        for r in [1.5, 2.0, 4.0] {
            let problem = uniform(&[2.5], r, 0.7);
            let sol = spmin(&problem).unwrap();
            assert_eq!(sol.p, vec![1.0]);
            assert!((sol.mu - (2.5 + r * problem.upsilon())).abs() < 1e-12);
            assert!(sol.kkt_residual < 1e-12);
        }
    }

    #[test]
    fn zero_reference_entries_stay_zero() {
        let problem = SimplexProblem::new(vec![5.0, 1.0, 2.0], vec![0.0, 0.5, 0.5], 2.0, 10.0).unwrap();
        for sol in [spmin_quadratic(&problem).unwrap(), spmin_bisection(&problem).unwrap()] {
            assert_eq!(sol.p[0], 0.0);
            assert!(!sol.support.contains(&0));
            assert!(sol.kkt_residual < 1e-9);
        }
    }

    #[test]
    fn boundary_element_gets_zero() {
        // Σ q (c_4 - c_i) / 2T = 0.25 · 6 / 1.5 = 1 exactly, so mu = c_4 = 4.
        let problem = uniform(&[1.0, 2.0, 3.0, 4.0], 2.0, 0.75);
        let sol = spmin_quadratic(&problem).unwrap();
        assert_eq!(sol.support, vec![0, 1, 2]);
        assert!((sol.mu - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_solution_has_large_residual() {
        let problem = uniform(&LINEAR, 2.0, 1.0);
        let sol = spmin(&problem).unwrap();
        assert!(sol.kkt_residual <= 1e-9);
        let mut p = sol.p.clone();
        p[0] += 0.01;
        p[1] -= 0.01;
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        assert!(kkt_residual(&problem, &p, sol.mu) > 1e-3);
    }

    #[test]
    fn invalid_problems() {
        assert!(SimplexProblem::new(vec![], vec![], 2.0, 1.0).is_err());
        assert!(SimplexProblem::new(vec![1.0], vec![1.0], 1.0, 1.0).is_err());
        assert!(SimplexProblem::new(vec![1.0], vec![1.0], 2.0, 0.0).is_err());
        assert!(SimplexProblem::new(vec![1.0, 2.0], vec![0.5, 0.6], 2.0, 1.0).is_err());
        assert!(SimplexProblem::new(vec![f64::NAN], vec![1.0], 2.0, 1.0).is_err());
        assert!(spmin_quadratic(&uniform(&LINEAR, 3.0, 1.0)).is_err());
    }
}
