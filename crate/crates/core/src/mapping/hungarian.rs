//! O(n³) Hungarian algorithm with row/column potentials (shortest
//! augmenting paths). Columns are scanned in increasing index order and a
//! column only replaces the current best on a strictly smaller reduced cost,
//! so ties resolve to the lowest index.

use super::{Assignment, CostMatrix};

/// Strategy interface for the assignment step.
pub trait AssignmentSolver {
    fn solve(&self, cost: &CostMatrix) -> Assignment;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Hungarian;

impl AssignmentSolver for Hungarian {
    fn solve(&self, cost: &CostMatrix) -> Assignment {
        hungarian(cost)
    }
}

pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let row_to_col = solve_square(cost.k, |i, j| cost.get(i, j));
    let total_cost = row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.get(i, j))
        .sum();
    Assignment {
        row_to_col,
        total_cost,
    }
}

/// Minimum-cost perfect matching of an n×n matrix given by `c`.
pub fn solve_square(n: usize, c: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // 1-based: index 0 is the virtual root of each augmenting search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn symmetric_two_by_two() {
        let a = hungarian(&square(&[&[1., 2.], &[2., 1.]]));
        assert_eq!(a.row_to_col, vec![0, 1]);
        assert_eq!(a.total_cost, 2.0);
    }

    /// Reference value from enumerating all 3! permutations by hand:
    /// (0,1,2)=4+0+2=6, (0,2,1)=4+5+2=11, (1,0,2)=1+2+2=5,
    /// (1,2,0)=1+5+3=9, (2,0,1)=3+2+2=7, (2,1,0)=3+0+3=6.
    #[test]
    fn three_by_three() {
        let a = hungarian(&square(&[&[4., 1., 3.], &[2., 0., 5.], &[3., 2., 2.]]));
        assert_eq!(a.row_to_col, vec![1, 0, 2]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn dominant_diagonal() {
        let a = hungarian(&square(&[&[0., 1., 1.], &[1., 0., 1.], &[1., 1., 0.]]));
        assert_eq!(a.row_to_col, vec![0, 1, 2]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn all_equal_picks_identity() {
        let a = hungarian(&square(&[&[1., 1.], &[1., 1.]]));
        assert_eq!(a.row_to_col, vec![0, 1]);
    }

    #[test]
    fn empty() {
        assert!(solve_square(0, |_, _| 0.0).is_empty());
    }
}
