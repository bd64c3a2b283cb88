//! Minimum-cost perfect matching on square matrices with forbidden cells.
//!
//! [`solve`] is a shortest-augmenting-path Hungarian method (O(n³)) that
//! treats [`Cost::Infinite`] cells as missing edges instead of big-M values.
//! [`solve_bruteforce`] enumerates permutations and exists as a test oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Largest matrix side accepted by [`solve_bruteforce`].
pub const BRUTEFORCE_MAX: usize = 9;

/// A matrix cell: a finite cost or the `+∞` sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cost<T> {
    Finite(T),
    Infinite,
}

impl<T: Copy> Cost<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Cost::Finite(c) => Some(c),
            Cost::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Cost::Infinite)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignError {
    #[error("cost matrix is empty")]
    Empty,
    #[error("cost matrix has {rows} rows of unequal or non-square length")]
    NotSquare { rows: usize },
    #[error("no perfect matching avoids the forbidden cells")]
    Infeasible,
    #[error("matrix side {n} exceeds the brute-force limit {max}")]
    SizeExceeded { n: usize, max: usize },
}

/// Dense square cost matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix<T> {
    n: usize,
    cells: Vec<Cost<T>>,
}

impl<T: Scalar> CostMatrix<T> {
    /// An `n × n` matrix with every cell forbidden.
    pub fn forbidden(n: usize) -> Self {
        Self {
            n,
            cells: vec![Cost::Infinite; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Cost<T>>>) -> Result<Self, AssignError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(AssignError::NotSquare { rows: n });
        }
        Ok(Self {
            n,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds a matrix with no forbidden cell.
    pub fn from_finite(rows: Vec<Vec<T>>) -> Result<Self, AssignError> {
        Self::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(Cost::Finite).collect())
                .collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Cost<T> {
        self.cells[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, cost: Cost<T>) {
        self.cells[row * self.n + col] = cost;
    }

    /// Sum of the selected cells in row order, `None` if any is forbidden.
    pub fn assignment_cost(&self, y: &[usize]) -> Option<T> {
        let mut total = T::zero();
        for (row, &col) in y.iter().enumerate() {
            total += self.get(row, col).finite()?;
        }
        Some(total)
    }

    /// Square sub-matrix picking the given rows and columns in order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self, AssignError> {
        if rows.len() != cols.len() {
            return Err(AssignError::NotSquare { rows: rows.len() });
        }
        let mut cells = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                cells.push(self.get(r, c));
            }
        }
        Ok(Self {
            n: rows.len(),
            cells,
        })
    }
}

/// A perfect matching: `y[row]` is the column chosen for `row` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult<T> {
    pub y: Vec<usize>,
    pub total_cost: T,
}

/// Global minimum-cost perfect matching.
///
/// Rows are inserted one at a time and each insertion runs a Dijkstra-like
/// search over reduced costs; forbidden cells are never relaxed, so an empty
/// frontier proves that no perfect matching exists.
pub fn solve<T: Scalar>(cost: &CostMatrix<T>) -> Result<MatchResult<T>, AssignError> {
    let n = cost.size();
    if n == 0 {
        return Err(AssignError::Empty);
    }
    // 1-based potentials and matching; index 0 is the virtual source column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv: Vec<Option<T>> = vec![None; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = None);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0usize;
            let base = (i0 - 1) * n;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                if let Cost::Finite(c) = cost.cells[base + j - 1] {
                    let reduced = c - u[i0] - v[j];
                    if minv[j].is_none_or(|m| reduced < m) {
                        minv[j] = Some(reduced);
                        way[j] = j0;
                    }
                }
                if let Some(m) = minv[j] {
                    if delta.is_none_or(|d| m < d) {
                        delta = Some(m);
                        j1 = j;
                    }
                }
            }
            let Some(delta) = delta else {
                return Err(AssignError::Infeasible);
            };
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else if let Some(m) = minv[j].as_mut() {
                    *m -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut y = vec![0usize; n];
    for j in 1..=n {
        y[owner[j] - 1] = j - 1;
    }
    let total_cost = cost
        .assignment_cost(&y)
        .expect("augmenting search only uses finite cells");
    Ok(MatchResult { y, total_cost })
}

/// Exhaustive minimum over all permutations, `n ≤ 9`.
///
/// Permutations are visited in lexicographic order and only strict
/// improvements replace the incumbent, so among optimal matchings the
/// lexicographically smallest `y` is returned.
pub fn solve_bruteforce<T: Scalar>(cost: &CostMatrix<T>) -> Result<MatchResult<T>, AssignError> {
    let n = cost.size();
    if n == 0 {
        return Err(AssignError::Empty);
    }
    if n > BRUTEFORCE_MAX {
        return Err(AssignError::SizeExceeded {
            n,
            max: BRUTEFORCE_MAX,
        });
    }

    struct Search<'a, T> {
        cost: &'a CostMatrix<T>,
        current: Vec<usize>,
        taken: Vec<bool>,
        best: Option<(T, Vec<usize>)>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, row: usize) {
            let n = self.cost.size();
            if row == n {
                let total = self
                    .cost
                    .assignment_cost(&self.current)
                    .expect("only finite cells are chosen");
                if self.best.as_ref().is_none_or(|(b, _)| total < *b) {
                    self.best = Some((total, self.current.clone()));
                }
                return;
            }
            for col in 0..n {
                if self.taken[col] || self.cost.get(row, col).is_infinite() {
                    continue;
                }
                self.taken[col] = true;
                self.current.push(col);
                self.visit(row + 1);
                self.current.pop();
                self.taken[col] = false;
            }
        }
    }

    let mut search = Search {
        cost,
        current: Vec::with_capacity(n),
        taken: vec![false; n],
        best: None,
    };
    search.visit(0);
    let (total_cost, y) = search.best.ok_or(AssignError::Infeasible)?;
    Ok(MatchResult { y, total_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: Cost<f64> = Cost::Infinite;

    fn f(c: f64) -> Cost<f64> {
        Cost::Finite(c)
    }

    fn is_permutation(y: &[usize]) -> bool {
        let mut seen = vec![false; y.len()];
        y.iter().all(|&c| c < y.len() && !std::mem::replace(&mut seen[c], true))
    }

    #[test]
    fn diagonal_zero() {
        let m = CostMatrix::from_finite(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = solve(&m).unwrap();
        assert_eq!(r.y, vec![0, 1]);
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(solve_bruteforce(&m).unwrap().total_cost, 0.0);
    }

    #[test]
    fn only_feasible_matching() {
        let m = CostMatrix::from_rows(vec![vec![f(5.0), INF], vec![INF, f(5.0)]]).unwrap();
        let r = solve(&m).unwrap();
        assert_eq!(r.y, vec![0, 1]);
        assert_eq!(r.total_cost, 10.0);
    }

    #[test]
    fn single_cell() {
        let m = CostMatrix::from_finite(vec![vec![3.5]]).unwrap();
        assert_eq!(solve(&m).unwrap().total_cost, 3.5);
        assert_eq!(solve_bruteforce(&m).unwrap().total_cost, 3.5);
    }

    #[test]
    fn infeasible_is_reported() {
        // Both rows can only use column 0.
        let m = CostMatrix::from_rows(vec![vec![f(1.0), INF], vec![f(2.0), INF]]).unwrap();
        assert_eq!(solve(&m), Err(AssignError::Infeasible));
        assert_eq!(solve_bruteforce(&m), Err(AssignError::Infeasible));
        let all = CostMatrix::<f64>::forbidden(3);
        assert_eq!(solve(&all), Err(AssignError::Infeasible));
    }

    #[test]
    fn shape_errors() {
        assert_eq!(
            CostMatrix::from_finite(vec![vec![1.0, 2.0]]).unwrap_err(),
            AssignError::NotSquare { rows: 1 }
        );
        assert_eq!(solve(&CostMatrix::<f64>::forbidden(0)), Err(AssignError::Empty));
        let big = CostMatrix::from_finite(vec![vec![0.0; 10]; 10]).unwrap();
        assert_eq!(
            solve_bruteforce(&big),
            Err(AssignError::SizeExceeded { n: 10, max: 9 })
        );
    }

    #[test]
    fn random_six_by_six_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
                .collect();
            let m = CostMatrix::from_finite(rows).unwrap();
            let fast = solve(&m).unwrap();
            let exact = solve_bruteforce(&m).unwrap();
            assert_eq!(fast.total_cost, exact.total_cost);
        }
    }

    #[test]
    fn exact_rationals() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..=6);
            let rows: Vec<Vec<Cost<Ratio<i64>>>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if rng.random::<f64>() < 0.2 {
                                Cost::Infinite
                            } else {
                                Cost::Finite(Ratio::new(rng.random_range(-50..50), rng.random_range(1..9)))
                            }
                        })
                        .collect()
                })
                .collect();
            let m = CostMatrix::from_rows(rows).unwrap();
            match (solve(&m), solve_bruteforce(&m)) {
                (Ok(a), Ok(b)) => assert_eq!(a.total_cost, b.total_cost),
                (Err(a), Err(b)) => assert_eq!(a, b),
                (a, b) => panic!("solver disagreement {a:?} vs {b:?}"),
            }
        }
    }

    fn matrix_strategy() -> impl Strategy<Value = CostMatrix<f64>> {
        (1usize..=6).prop_flat_map(|n| {
            proptest::collection::vec(prop_oneof![4 => (0.0f64..1.0).prop_map(Cost::Finite), 1 => Just(Cost::Infinite)], n * n)
                .prop_map(move |cells| CostMatrix { n, cells })
        })
    }

    proptest! {
        #[test]
        fn matches_oracle_and_never_selects_sentinel(m in matrix_strategy()) {
            match (solve(&m), solve_bruteforce(&m)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!(is_permutation(&a.y));
                    prop_assert!(a.y.iter().enumerate().all(|(r, &c)| !m.get(r, c).is_infinite()));
                    prop_assert!((a.total_cost - b.total_cost).abs() < 1e-12);
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "disagreement {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn row_shift_keeps_optimal_cost_rank(m in matrix_strategy(), row in 0usize..6, shift in -3.0f64..3.0) {
            let Ok(base) = solve(&m) else { return Ok(()); };
            let row = row % m.size();
            let mut shifted = m.clone();
            for c in 0..m.size() {
                if let Cost::Finite(v) = m.get(row, c) {
                    shifted.set(row, c, Cost::Finite(v + shift));
                }
            }
            let after = solve(&shifted).unwrap();
            // The old optimum is still optimal under the shifted costs.
            let old_in_new = shifted.assignment_cost(&base.y).unwrap();
            prop_assert!((old_in_new - after.total_cost).abs() < 1e-9);
        }
    }
}
