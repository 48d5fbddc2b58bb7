//! Exact balanced optimal transport between NL and FOL token embeddings.
//!
//! The plan is found with the transportation simplex: a northwest-corner
//! starting basis, potentials from the basis tree, Bland's rule for both
//! the entering and the leaving cell. The result is a vertex of the
//! transportation polytope, so every non-basic cell is exactly zero.

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::embedding::TokenMatrix;

/// Entries of the plan below this value count as "not aligned".
pub const ZERO_THRESHOLD: f64 = 1e-9;

const MARGINAL_TOLERANCE: f64 = 1e-12;
const REDUCED_COST_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("row {index} of the {side} matrix has zero norm")]
    ZeroNormRow { index: usize, side: &'static str },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("marginals are infeasible: {0}")]
    InfeasibleMarginals(String),
    #[error("cost matrix entry ({row}, {col}) = {value} outside [0, 2]")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("solver did not converge within {0} pivots")]
    NumericalFailure(usize),
}

/// Cosine-distance cost matrix: `C[i][j] = 1 - cos(h_i, z_j)`, clamped to `[0, 2]`.
pub fn build_cost_matrix(h: &TokenMatrix, z: &TokenMatrix) -> Result<Array2<f64>, OtError> {
    if h.dim() != z.dim() {
        return Err(OtError::DimensionMismatch(format!(
            "NL rows have dimension {}, FOL rows {}",
            h.dim(),
            z.dim()
        )));
    }
    let norms = |m: &TokenMatrix, side: &'static str| -> Result<Vec<f64>, OtError> {
        (0..m.rows())
            .map(|i| {
                let n = m.row(i).dot(&m.row(i)).sqrt();
                if n > 0.0 && n.is_finite() {
                    Ok(n)
                } else {
                    Err(OtError::ZeroNormRow { index: i, side })
                }
            })
            .collect()
    };
    let hn = norms(h, "NL")?;
    let zn = norms(z, "FOL")?;
    let mut cost = Array2::zeros((h.rows(), z.rows()));
    for i in 0..h.rows() {
        for j in 0..z.rows() {
            let cos = h.row(i).dot(&z.row(j)) / (hn[i] * zn[j]);
            cost[[i, j]] = (1.0 - cos).clamp(0.0, 2.0);
        }
    }
    Ok(cost)
}

/// `a_i = 1/m`, `b_j = 1/n`.
pub fn uniform_marginals(m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![1.0 / m as f64; m], vec![1.0 / n as f64; n])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    cost: Array2<f64>,
    source: Vec<f64>,
    target: Vec<f64>,
}

impl TransportProblem {
    pub fn new(cost: Array2<f64>, source: Vec<f64>, target: Vec<f64>) -> Result<Self, OtError> {
        let (m, n) = cost.dim();
        if m == 0 || n == 0 {
            return Err(OtError::DimensionMismatch("empty cost matrix".into()));
        }
        if source.len() != m || target.len() != n {
            return Err(OtError::DimensionMismatch(format!(
                "cost is {m}x{n}, marginals have lengths {} and {}",
                source.len(),
                target.len()
            )));
        }
        for ((row, col), &value) in cost.indexed_iter() {
            if !(0.0..=2.0).contains(&value) {
                return Err(OtError::InvalidCost { row, col, value });
            }
        }
        if source.iter().chain(&target).any(|&x| !x.is_finite() || x < 0.0) {
            return Err(OtError::InfeasibleMarginals("negative or non-finite mass".into()));
        }
        let (sa, sb): (f64, f64) = (source.iter().sum(), target.iter().sum());
        if (sa - 1.0).abs() > MARGINAL_TOLERANCE || (sb - 1.0).abs() > MARGINAL_TOLERANCE {
            return Err(OtError::InfeasibleMarginals(format!(
                "marginal sums {sa} and {sb} are not both 1"
            )));
        }
        Ok(TransportProblem { cost, source, target })
    }

    /// Problem with uniform marginals over the cost matrix's rows and columns.
    pub fn uniform(cost: Array2<f64>) -> Result<Self, OtError> {
        let (a, b) = uniform_marginals(cost.nrows(), cost.ncols());
        Self::new(cost, a, b)
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentPlan {
    pub plan: Array2<f64>,
    pub objective: f64,
    pub zero_mask: Array2<bool>,
}

impl AlignmentPlan {
    fn from_plan(plan: Array2<f64>, cost: &Array2<f64>) -> Self {
        let objective = (&plan * cost).sum();
        let zero_mask = plan.mapv(|p| p < ZERO_THRESHOLD);
        AlignmentPlan {
            plan,
            objective,
            zero_mask,
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.zero_mask.iter().filter(|z| !**z).count()
    }
}

/// Solves the balanced transport problem exactly.
pub fn solve_ot(problem: &TransportProblem) -> Result<AlignmentPlan, OtError> {
    let (m, n) = problem.cost.dim();
    let cost = &problem.cost;

    if m == 1 || n == 1 {
        let mut plan = Array2::zeros((m, n));
        for i in 0..m {
            for j in 0..n {
                plan[[i, j]] = if m == 1 { problem.target[j] } else { problem.source[i] };
            }
        }
        return Ok(AlignmentPlan::from_plan(plan, cost));
    }

    let mut basis = northwest_corner(&problem.source, &problem.target);
    let max_pivots = 50 * m * n + 1000;
    let mut pivots = 0;

    loop {
        let (u, v) = basis.potentials(m, n, cost);
        let entering = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| {
                !basis.contains(i, j) && cost[[i, j]] - u[i] - v[j] < -REDUCED_COST_TOLERANCE
            });
        let Some((ei, ej)) = entering else { break };

        pivots += 1;
        if pivots > max_pivots {
            return Err(OtError::NumericalFailure(max_pivots));
        }

        // Tree path from column ej back to row ei; odd positions lose mass.
        let path = basis.path(m, n, ei, ej);
        let donors: Vec<usize> = path.iter().step_by(2).copied().collect();
        let theta = donors
            .iter()
            .map(|&k| basis.flow[k])
            .fold(f64::INFINITY, f64::min);
        let leaving = donors
            .iter()
            .copied()
            .filter(|&k| basis.flow[k] <= theta + 1e-15)
            .min_by_key(|&k| basis.cells[k])
            .expect("cycle has at least one donor");

        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[k] -= theta;
            } else {
                basis.flow[k] += theta;
            }
        }
        basis.cells[leaving] = (ei, ej);
        basis.flow[leaving] = theta;
    }

    // Recompute basic flows from the tree to shed accumulated rounding.
    let flows = basis.tree_flows(m, n, &problem.source, &problem.target);
    let mut plan = Array2::zeros((m, n));
    for (&(i, j), f) in basis.cells.iter().zip(flows) {
        plan[[i, j]] = f.max(0.0);
    }
    Ok(AlignmentPlan::from_plan(plan, cost))
}

/// A spanning tree of `m + n - 1` cells over the bipartite row/column graph.
struct Basis {
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
}

fn northwest_corner(a: &[f64], b: &[f64]) -> Basis {
    let (m, n) = (a.len(), b.len());
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut cells = Vec::with_capacity(m + n - 1);
    let mut flow = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]).max(0.0);
        cells.push((i, j));
        flow.push(x);
        supply[i] -= x;
        demand[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || supply[i] < demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Basis { cells, flow }
}

impl Basis {
    fn contains(&self, i: usize, j: usize) -> bool {
        self.cells.contains(&(i, j))
    }

    /// Node ids: rows are `0..m`, columns `m..m+n`.
    fn adjacency(&self, m: usize, n: usize) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); m + n];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push(k);
            adj[m + j].push(k);
        }
        adj
    }

    fn potentials(&self, m: usize, n: usize, cost: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency(m, n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &k in &adj[node] {
                let (i, j) = self.cells[k];
                let other = if node < m { m + j } else { i };
                if pot[other].is_nan() {
                    // u_i + v_j = c_ij
                    pot[other] = cost[[i, j]] - pot[node];
                    stack.push(other);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }

    /// Basis cells on the tree path from column node `col` to row node `row`,
    /// ordered starting at the column end.
    fn path(&self, m: usize, n: usize, row: usize, col: usize) -> Vec<usize> {
        let adj = self.adjacency(m, n);
        let start = m + col;
        let mut via: Vec<Option<usize>> = vec![None; m + n];
        let mut seen = vec![false; m + n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if node == row {
                break;
            }
            for &k in &adj[node] {
                let (i, j) = self.cells[k];
                let other = if node < m { m + j } else { i };
                if !seen[other] {
                    seen[other] = true;
                    via[other] = Some(k);
                    stack.push(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = row;
        while node != start {
            let k = via[node].expect("basis is a spanning tree");
            path.push(k);
            let (i, j) = self.cells[k];
            node = if node < m { m + j } else { i };
        }
        path.reverse();
        path
    }

    /// Flows implied by the tree and the marginals, by repeated leaf peeling.
    fn tree_flows(&self, m: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let adj = self.adjacency(m, n);
        let mut residual: Vec<f64> = a.iter().chain(b).copied().collect();
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut assigned = vec![false; self.cells.len()];
        let mut flows = vec![0.0; self.cells.len()];
        let mut leaves: Vec<usize> = (0..m + n).filter(|&v| degree[v] == 1).collect();
        while let Some(node) = leaves.pop() {
            if degree[node] != 1 {
                continue;
            }
            let k = *adj[node]
                .iter()
                .find(|&&k| !assigned[k])
                .expect("leaf has one open edge");
            let (i, j) = self.cells[k];
            let other = if node < m { m + j } else { i };
            flows[k] = residual[node];
            assigned[k] = true;
            residual[other] -= residual[node];
            residual[node] = 0.0;
            degree[node] = 0;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
        }
        flows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cost_matrix_extremes() {
        let h = TokenMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let z = TokenMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let c = build_cost_matrix(&h, &z).unwrap();
        assert_eq!(c, array![[0.0, 1.0, 2.0]]);
    }

    #[test]
    fn cost_matrix_errors() {
        let h = TokenMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let z = TokenMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(
            build_cost_matrix(&h, &z),
            Err(OtError::ZeroNormRow { index: 0, side: "NL" })
        );
        let z3 = TokenMatrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(build_cost_matrix(&z, &z3), Err(OtError::DimensionMismatch(_))));
    }

    #[test]
    fn uniform() {
        assert_eq!(uniform_marginals(1, 1), (vec![1.0], vec![1.0]));
        assert_eq!(uniform_marginals(2, 4), (vec![0.5, 0.5], vec![0.25; 4]));
        let (a, b) = uniform_marginals(3, 3);
        assert_eq!(a, vec![1.0 / 3.0; 3]);
        assert_eq!(a, b);
    }

    #[test]
    fn single_cell() {
        let p = solve_ot(&TransportProblem::uniform(array![[0.7]]).unwrap()).unwrap();
        assert_eq!(p.plan, array![[1.0]]);
        assert!((p.objective - 0.7).abs() < 1e-15);
    }

    #[test]
    fn diagonal_two_by_two() {
        let p = solve_ot(&TransportProblem::uniform(array![[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(p.plan, array![[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(p.objective, 0.0);
        assert_eq!(p.zero_mask, array![[false, true], [true, false]]);
    }

    #[test]
    fn anti_diagonal_requires_pivot() {
        let p = solve_ot(&TransportProblem::uniform(array![[1.0, 0.0], [0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(p.plan, array![[0.0, 0.5], [0.5, 0.0]]);
        assert_eq!(p.objective, 0.0);
    }

    #[test]
    fn closed_form_row_and_column() {
        let p = solve_ot(&TransportProblem::uniform(array![[0.1, 0.2, 0.3]]).unwrap()).unwrap();
        assert_eq!(p.plan, array![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]);
        let p = solve_ot(&TransportProblem::uniform(array![[0.1], [0.2]]).unwrap()).unwrap();
        assert_eq!(p.plan, array![[0.5], [0.5]]);
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(matches!(
            TransportProblem::new(array![[0.0, 0.0]], vec![1.0], vec![0.5, 0.6]),
            Err(OtError::InfeasibleMarginals(_))
        ));
        assert!(matches!(
            TransportProblem::new(array![[2.5]], vec![1.0], vec![1.0]),
            Err(OtError::InvalidCost { .. })
        ));
        assert!(matches!(
            TransportProblem::new(array![[0.0]], vec![1.0, 0.0], vec![1.0]),
            Err(OtError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_uniform_marginals() {
        // Cheapest cells (0,1) and (1,0); row 0 has more mass than column 1 can take.
        let c = array![[0.5, 0.0], [0.0, 0.5]];
        let p = solve_ot(&TransportProblem::new(c, vec![0.7, 0.3], vec![0.4, 0.6]).unwrap()).unwrap();
        let expected = array![[0.1, 0.6], [0.3, 0.0]];
        for (x, y) in p.plan.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((p.objective - 0.05).abs() < 1e-12);
    }
}
