//! Small dense convex QP with group-sum equalities and optional
//! nonnegativity:
//!
//! ```text
//! minimize   ½ xᵀ H x + gᵀ x
//! subject to Σ_{j ∈ G} x_j = 1   for every group G
//!            x ≥ 0                (when `nonnegative`)
//! ```
//!
//! Groups are disjoint. Solved with a primal active-set method over the
//! bound constraints; every iteration solves the equality-constrained KKT
//! system of the current working set exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Entries of an equality-constrained subproblem solution below this are
/// treated as zero rather than as a blocking violation.
const ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct SimplexQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub groups: Vec<Vec<usize>>,
    pub nonnegative: bool,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
}

impl SimplexQp {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    fn group_of(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.dim()];
        for (g, members) in self.groups.iter().enumerate() {
            for &j in members {
                owner[j] = Some(g);
            }
        }
        owner
    }

    /// Feasible starting point: uniform weights inside each group, zero
    /// elsewhere.
    pub fn default_start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for members in &self.groups {
            for &j in members {
                x[j] = 1.0 / members.len() as f64;
            }
        }
        x
    }

    pub fn solve(&self) -> Result<QpSolution> {
        self.solve_from(self.default_start())
    }

    /// Solves from a caller-supplied feasible start.
    pub fn solve_from(&self, start: DVector<f64>) -> Result<QpSolution> {
        let n = self.dim();
        if self.groups.iter().any(|g| g.is_empty()) {
            return Err(Error::usage("empty equality group"));
        }
        if !self.nonnegative {
            let free: Vec<usize> = (0..n).collect();
            let x = self.solve_equality(&free)?;
            return Ok(QpSolution { x, iterations: 1 });
        }
        if start.len() != n || start.iter().any(|&v| v < 0.0) {
            return Err(Error::usage("active-set start must be nonnegative"));
        }

        let scale = self
            .hessian
            .amax()
            .max(self.linear.amax())
            .max(1.0);
        let dual_tol = 1e-12 * scale;
        let max_iter = 10 * n.max(1);

        let mut x = start;
        // Working set: bounds held at zero.
        let mut fixed = vec![false; n];
        for iter in 1..=max_iter {
            let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
            let target = self.solve_equality(&free)?;

            let blocking = free.iter().any(|&j| target[j] < -ZERO_TOL);
            if !blocking {
                x = target.map(|v| if v < 0.0 { 0.0 } else { v });
                let grad = &self.hessian * &x + &self.linear;
                let nu = self.group_multipliers(&grad, &free);
                let owner = self.group_of();
                // Bound multiplier μ_j = ∂L/∂x_j for j in the working set.
                let mut release: Option<(usize, f64)> = None;
                for j in (0..n).filter(|&j| fixed[j]) {
                    let mu = grad[j] - owner[j].map_or(0.0, |g| nu[g]);
                    if mu < -dual_tol && release.map_or(true, |(_, best)| mu < best) {
                        release = Some((j, mu));
                    }
                }
                match release {
                    None => return Ok(QpSolution { x, iterations: iter }),
                    Some((j, _)) => fixed[j] = false,
                }
            } else {
                // Step toward the subproblem solution until the first bound
                // becomes active; ties go to the smallest index.
                let mut alpha = 1.0;
                let mut block = None;
                for &j in &free {
                    if target[j] < -ZERO_TOL {
                        let a = x[j] / (x[j] - target[j]);
                        if a < alpha {
                            alpha = a;
                            block = Some(j);
                        }
                    }
                }
                x = &x + (&target - &x) * alpha;
                let j = block.ok_or_else(|| Error::solver("active set: no blocking bound"))?;
                x[j] = 0.0;
                fixed[j] = true;
                for v in x.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        Err(Error::solver(format!(
            "active-set method did not converge within {max_iter} iterations"
        )))
    }

    /// Minimizes over the `free` variables (others fixed at zero) subject
    /// to the group sums.
    fn solve_equality(&self, free: &[usize]) -> Result<DVector<f64>> {
        let n = self.dim();
        let groups: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| g.iter().copied().filter(|j| free.contains(j)).collect::<Vec<_>>())
            .collect();
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::solver("working set removed every member of a group"));
        }
        let f = free.len();
        let m = groups.len();
        if f + m == 0 {
            return Ok(DVector::zeros(n));
        }
        let mut pos = vec![usize::MAX; n];
        for (k, &j) in free.iter().enumerate() {
            pos[j] = k;
        }

        let mut kkt = DMatrix::zeros(f + m, f + m);
        let mut rhs = DVector::zeros(f + m);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = self.hessian[(i, j)];
            }
            rhs[a] = -self.linear[i];
        }
        for (g, members) in groups.iter().enumerate() {
            for &j in members {
                kkt[(pos[j], f + g)] = -1.0;
                kkt[(f + g, pos[j])] = 1.0;
            }
            rhs[f + g] = 1.0;
        }

        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) && (&kkt * &s - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()) => s,
            // Singular KKT (e.g. zero penalty with duplicate series):
            // fall back to the minimum-norm least-squares solution.
            _ => {
                let svd = kkt.clone().svd(true, true);
                let eps = 1e-12 * svd.singular_values.max().max(1.0);
                let s = svd
                    .solve(&rhs, eps)
                    .map_err(|e| Error::solver(format!("KKT solve failed: {e}")))?;
                if (&kkt * &s - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
                    return Err(Error::solver("inconsistent KKT system"));
                }
                s
            }
        };

        let mut x = DVector::zeros(n);
        for (a, &j) in free.iter().enumerate() {
            x[j] = sol[a];
        }
        Ok(x)
    }

    /// Least-squares equality multipliers: per group, the mean gradient
    /// over the members in `support`.
    fn group_multipliers(&self, grad: &DVector<f64>, support: &[usize]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|members| {
                let inside: Vec<f64> = members
                    .iter()
                    .filter(|j| support.contains(j))
                    .map(|&j| grad[j])
                    .collect();
                if inside.is_empty() {
                    0.0
                } else {
                    inside.iter().sum::<f64>() / inside.len() as f64
                }
            })
            .collect()
    }

    /// Max-norm of the KKT violations at `x`: group-sum feasibility,
    /// sign feasibility, and the stationarity/complementarity natural
    /// residual `min(x_j, ∂L/∂x_j)` (plain `∂L/∂x_j` for free-sign
    /// variables).
    pub fn kkt_residual(&self, x: &DVector<f64>) -> f64 {
        let n = self.dim();
        if x.len() != n {
            return f64::INFINITY;
        }
        let grad = &self.hessian * x + &self.linear;
        let support: Vec<usize> = if self.nonnegative {
            (0..n).filter(|&j| x[j] > 0.0).collect()
        } else {
            (0..n).collect()
        };
        let nu = self.group_multipliers(&grad, &support);
        let owner = self.group_of();

        let mut worst = 0.0_f64;
        for members in &self.groups {
            let s: f64 = members.iter().map(|&j| x[j]).sum();
            worst = worst.max((s - 1.0).abs());
        }
        for j in 0..n {
            let d = grad[j] - owner[j].map_or(0.0, |g| nu[g]);
            if self.nonnegative {
                worst = worst.max((-x[j]).max(0.0));
                worst = worst.max(x[j].min(d).abs());
            } else {
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(h: &[&[f64]], g: &[f64], groups: Vec<Vec<usize>>, nonnegative: bool) -> SimplexQp {
        let n = g.len();
        SimplexQp {
            hessian: DMatrix::from_fn(n, n, |i, j| h[i][j]),
            linear: DVector::from_column_slice(g),
            groups,
            nonnegative,
        }
    }

    #[test]
    fn interior_optimum() {
        // ½(x0² + x1²) on the simplex → (½, ½)
        let p = qp(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], vec![vec![0, 1]], true);
        let s = p.solve().unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-14);
        assert!(p.kkt_residual(&s.x) < 1e-14);
    }

    #[test]
    fn bound_becomes_active() {
        // ½‖x‖² + (0, 0, 3)·x: unconstrained-sign optimum has x2 < 0.
        let p = qp(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            &[0.0, 0.0, 3.0],
            vec![vec![0, 1, 2]],
            true,
        );
        let s = p.solve().unwrap();
        assert_eq!(s.x[2], 0.0);
        assert!((s.x[0] - 0.5).abs() < 1e-14);
        assert!(p.kkt_residual(&s.x) < 1e-14);

        let free = SimplexQp { nonnegative: false, ..p.clone() };
        let u = free.solve().unwrap();
        assert!(u.x[2] < 0.0);
        assert!(free.objective(&u.x) <= p.objective(&s.x));
    }

    #[test]
    fn ungrouped_variables_are_plain_ridge() {
        // ½·2x² − 2x → x = 1
        let p = qp(&[&[2.0]], &[-2.0], vec![], false);
        assert!((p.solve().unwrap().x[0] - 1.0).abs() < 1e-14);
        let q = qp(&[&[2.0]], &[2.0], vec![], true);
        let s = q.solve_from(DVector::zeros(1)).unwrap();
        assert_eq!(s.x[0], 0.0);
    }

    #[test]
    fn residual_flags_infeasible_sums() {
        let p = qp(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], vec![vec![0, 1]], true);
        let r = p.kkt_residual(&DVector::from_vec(vec![0.7, 0.7]));
        assert!(r >= 0.4 - 1e-15);
    }

    #[test]
    fn negative_start_rejected() {
        let p = qp(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], vec![vec![0, 1]], true);
        assert!(p.solve_from(DVector::from_vec(vec![-0.5, 1.5])).is_err());
    }
}
