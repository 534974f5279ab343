//! Exact MILP search: LP relaxation plus best-first branch and bound on
//! the binary exclusivity indicators.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::{Result, SimError};
use crate::lp::{solve_lp, LpOutcome, LpProblem};

const INT_TOL: f64 = 1e-7;

/// A mixed-integer model: an LP plus the indices of binary variables.
/// Names are kept for infeasibility certificates and the LP-format dump.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub lp: LpProblem,
    pub binaries: Vec<usize>,
    pub var_names: Vec<String>,
    pub row_names: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Proven upper bound on the optimum.
    pub bound: f64,
    /// False when the time limit stopped the search early.
    pub optimal: bool,
    pub nodes: usize,
}

struct Node {
    bound: f64,
    // (binary var index, fixed value)
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound)
    }
}

fn solve_with_fixes(model: &MilpModel, fixes: &[(usize, f64)]) -> Result<LpOutcome> {
    if fixes.is_empty() {
        return solve_lp(&model.lp);
    }
    let mut lp = model.lp.clone();
    for &(j, v) in fixes {
        lp.lower[j] = v;
        lp.upper[j] = v;
    }
    solve_lp(&lp)
}

fn most_fractional(model: &MilpModel, x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in &model.binaries {
        let frac = (x[j] - x[j].round()).abs();
        if frac > INT_TOL {
            let dist = (x[j] - 0.5).abs();
            match best {
                Some((_, d)) if d <= dist => {}
                _ => best = Some((j, dist)),
            }
        }
    }
    best.map(|(j, _)| j)
}

/// Solve to proven optimality within `gap_tol` (relative), or return the
/// best incumbent flagged suboptimal when the time limit strikes.
pub fn solve_milp(
    model: &MilpModel,
    gap_tol: f64,
    time_limit: Option<Duration>,
) -> Result<MilpSolution> {
    let start = Instant::now();
    let root = match solve_with_fixes(model, &[])? {
        LpOutcome::Optimal { x, objective } => (x, objective),
        LpOutcome::Infeasible { violated_rows } => {
            return Err(infeasibility_certificate(model, &violated_rows))
        }
        LpOutcome::Unbounded => return Err(SimError::Solver("model is unbounded".into())),
    };

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: root.1,
        fixes: Vec::new(),
    });
    let mut best_bound = root.1;

    while let Some(node) = heap.pop() {
        best_bound = node.bound;
        if let Some((_, inc_obj)) = &incumbent {
            let gap = (best_bound - inc_obj) / inc_obj.abs().max(1.0);
            if gap <= gap_tol {
                break;
            }
        }
        if let Some(limit) = time_limit {
            if start.elapsed() > limit {
                break;
            }
        }

        nodes += 1;
        let (x, objective) = match solve_with_fixes(model, &node.fixes)? {
            LpOutcome::Optimal { x, objective } => (x, objective),
            LpOutcome::Infeasible { .. } => continue,
            LpOutcome::Unbounded => return Err(SimError::Solver("node relaxation unbounded".into())),
        };
        if let Some((_, inc_obj)) = &incumbent {
            if objective <= inc_obj + inc_obj.abs().max(1.0) * gap_tol {
                continue;
            }
        }
        match most_fractional(model, &x) {
            None => {
                let better = incumbent
                    .as_ref()
                    .map(|(_, obj)| objective > *obj)
                    .unwrap_or(true);
                if better {
                    incumbent = Some((x, objective));
                }
            }
            Some(j) => {
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node {
                        bound: objective,
                        fixes,
                    });
                }
            }
        }
    }

    match incumbent {
        Some((x, objective)) => {
            let finished = heap.is_empty()
                || (best_bound - objective) / objective.abs().max(1.0) <= gap_tol;
            Ok(MilpSolution {
                x,
                objective,
                bound: best_bound.max(objective),
                optimal: finished,
                nodes,
            })
        }
        None => Err(SimError::Solver(
            "no integral solution found within limits".into(),
        )),
    }
}

fn infeasibility_certificate(model: &MilpModel, violated: &[usize]) -> SimError {
    let names: Vec<&str> = violated
        .iter()
        .map(|&i| model.row_names.get(i).map(String::as_str).unwrap_or("?"))
        .collect();
    SimError::Infeasible(format!("unsatisfiable constraints: {}", names.join(", ")))
}

/// Dump the model in LP text format (debug aid for external solvers).
pub fn write_lp_format(model: &MilpModel) -> String {
    let mut out = String::from("Maximize\n obj:");
    let term = |c: f64, name: &str| format!(" {}{} {}", if c >= 0.0 { "+" } else { "-" }, c.abs(), name);
    for (j, &c) in model.lp.obj.iter().enumerate() {
        if c != 0.0 {
            out.push_str(&term(c, &model.var_names[j]));
        }
    }
    out.push_str("\nSubject To\n");
    for (i, row) in model.lp.rows.iter().enumerate() {
        let name = model
            .row_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("r{i}"));
        let body: String = row
            .coeffs
            .iter()
            .map(|&(j, v)| term(v, &model.var_names[j]))
            .collect();
        if row.lb == row.ub {
            out.push_str(&format!(" {name}:{body} = {}\n", row.lb));
        } else {
            if row.ub.is_finite() {
                out.push_str(&format!(" {name}_u:{body} <= {}\n", row.ub));
            }
            if row.lb.is_finite() {
                out.push_str(&format!(" {name}_l:{body} >= {}\n", row.lb));
            }
        }
    }
    out.push_str("Bounds\n");
    for j in 0..model.lp.obj.len() {
        out.push_str(&format!(
            " {} <= {} <= {}\n",
            model.lp.lower[j], model.var_names[j], model.lp.upper[j]
        ));
    }
    if !model.binaries.is_empty() {
        out.push_str("Binaries\n");
        for &j in &model.binaries {
            out.push_str(&format!(" {}\n", model.var_names[j]));
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::LpRow;

    fn model(lp: LpProblem, binaries: Vec<usize>) -> MilpModel {
        let n = lp.obj.len();
        let m = lp.rows.len();
        MilpModel {
            lp,
            binaries,
            var_names: (0..n).map(|j| format!("x{j}")).collect(),
            row_names: (0..m).map(|i| format!("r{i}")).collect(),
        }
    }

    #[test]
    fn pure_lp_returns_relaxation() {
        let lp = LpProblem {
            obj: vec![1.0, 1.0],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            rows: vec![LpRow::le(vec![(0, 1.0), (1, 1.0)], 1.5)],
        };
        let sol = solve_milp(&model(lp, vec![]), 1e-6, None).unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-8);
        assert!(sol.optimal);
    }

    #[test]
    fn knapsack_toy_solved_exactly() {
        // max 5a + 4b + 3c, a+b+c binaries, 2a + 3b + c <= 3.
        // Enumeration: best is a + c = 8 (weight 3).
        let lp = LpProblem {
            obj: vec![5.0, 4.0, 3.0],
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
            rows: vec![LpRow::le(vec![(0, 2.0), (1, 3.0), (2, 1.0)], 3.0)],
        };
        let sol = solve_milp(&model(lp, vec![0, 1, 2]), 1e-6, None).unwrap();
        assert!((sol.objective - 8.0).abs() < 1e-7);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!((sol.x[2] - 1.0).abs() < 1e-6);
        assert!(sol.optimal);
        assert!(sol.bound >= sol.objective - 1e-9);
    }

    #[test]
    fn infeasible_model_yields_certificate() {
        let lp = LpProblem {
            obj: vec![0.0],
            lower: vec![0.0],
            upper: vec![1.0],
            rows: vec![LpRow {
                coeffs: vec![(0, 1.0)],
                lb: 2.0,
                ub: f64::INFINITY,
            }],
        };
        let err = solve_milp(&model(lp, vec![]), 1e-6, None).unwrap_err();
        assert!(matches!(err, SimError::Infeasible(_)));
        assert!(err.to_string().contains("r0"));
    }

    #[test]
    fn random_binaries_match_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let nb = rng.gen_range(1..4);
            let nc = rng.gen_range(0..3);
            let n = nb + nc;
            let obj: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let lower = vec![0.0; n];
            let upper: Vec<f64> = (0..n)
                .map(|j| if j < nb { 1.0 } else { rng.gen_range(0.5..3.0) })
                .collect();
            let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-2.0..2.0))).collect();
            let rhs = rng.gen_range(0.5..4.0);
            let lp = LpProblem {
                obj: obj.clone(),
                lower: lower.clone(),
                upper: upper.clone(),
                rows: vec![LpRow::le(coeffs.clone(), rhs)],
            };
            let m = model(lp, (0..nb).collect());

            // Oracle: enumerate the binary assignments, per-branch LP.
            let mut best = f64::NEG_INFINITY;
            for mask in 0..(1usize << nb) {
                let mut lp = m.lp.clone();
                for j in 0..nb {
                    let v = ((mask >> j) & 1) as f64;
                    lp.lower[j] = v;
                    lp.upper[j] = v;
                }
                if let LpOutcome::Optimal { objective, .. } = solve_lp(&lp).unwrap() {
                    best = best.max(objective);
                }
            }
            if best.is_finite() {
                let sol = solve_milp(&m, 1e-9, None).unwrap();
                let gap = (sol.objective - best).abs() / best.abs().max(1.0);
                assert!(gap < 1e-6, "milp {} vs oracle {}", sol.objective, best);
            }
        }
    }

    #[test]
    fn lp_dump_mentions_binaries() {
        let lp = LpProblem {
            obj: vec![1.0, -2.0],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 5.0],
            rows: vec![LpRow::eq(vec![(0, 1.0), (1, 1.0)], 2.0)],
        };
        let text = write_lp_format(&model(lp, vec![0]));
        assert!(text.contains("Maximize"));
        assert!(text.contains("Binaries"));
        assert!(text.contains("x0"));
        assert!(text.contains("= 2"));
    }
}
