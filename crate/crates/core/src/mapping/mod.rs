//! Identity mapping: VD tracks (rows) against AD identities (columns) as a
//! minimum-cost bipartite assignment.
//!
//! The cost of a pair is the reciprocal of its similarity. Pairs below the
//! similarity threshold and any pair involving a padding ("virtual")
//! identity get the sentinel [`C_BIG`]; an assignment through the sentinel
//! is decoded as unmatched.

pub mod hungarian;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::{similarity, FeatureWeights, IdentityConfig, Pid};

pub use hungarian::{hungarian, AssignmentSolver, Hungarian};

pub const C_BIG: f64 = 1e9;
/// Floor added to the similarity before taking the reciprocal.
pub const EPS_C: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Real(usize),
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub k: usize,
    /// Row-major K×K costs.
    pub data: Vec<f64>,
    pub rows: Vec<Slot>,
    pub cols: Vec<Slot>,
    /// Similarity of each real pair, row-major over |VD|×|AD|.
    pub similarity: Vec<f64>,
    pub n_vd: usize,
    pub n_ad: usize,
}

impl CostMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    /// Plain square matrix with every slot real; used for direct solver input.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let k = rows.len();
        assert!(
            rows.iter().all(|r| r.len() == k),
            "cost matrix must be square"
        );
        Self {
            k,
            data: rows.concat(),
            rows: (0..k).map(Slot::Real).collect(),
            cols: (0..k).map(Slot::Real).collect(),
            similarity: Vec::new(),
            n_vd: k,
            n_ad: k,
        }
    }

    pub fn sim(&self, vd: usize, ad: usize) -> f64 {
        self.similarity[vd * self.n_ad + ad]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOutcome {
    Matched {
        vd: usize,
        ad: usize,
        similarity: f64,
    },
    UnmatchedVd(usize),
    UnmatchedAd(usize),
}

fn check_threshold(sim_threshold: f64, k: usize) -> Result<()> {
    if !(sim_threshold > 0.0 && sim_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "similarity threshold must be in (0, 1), got {sim_threshold}"
        )));
    }
    // Largest feasible cost times K must stay below the sentinel.
    if k as f64 / (sim_threshold + EPS_C) >= C_BIG {
        return Err(Error::InvalidArgument(format!(
            "threshold {sim_threshold} too small for {k} identities"
        )));
    }
    Ok(())
}

/// Cost matrix from a precomputed |VD|×|AD| similarity table (row-major).
pub fn cost_matrix_from_similarity(
    similarity: Vec<f64>,
    n_vd: usize,
    n_ad: usize,
    sim_threshold: f64,
) -> Result<CostMatrix> {
    if n_vd == 0 && n_ad == 0 {
        return Err(Error::EmptyProblem);
    }
    assert_eq!(similarity.len(), n_vd * n_ad);
    let k = n_vd.max(n_ad);
    check_threshold(sim_threshold, k)?;
    let slot = |i: usize, n: usize| if i < n { Slot::Real(i) } else { Slot::Virtual };
    let rows: Vec<Slot> = (0..k).map(|i| slot(i, n_vd)).collect();
    let cols: Vec<Slot> = (0..k).map(|j| slot(j, n_ad)).collect();
    let mut data = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            data[i * k + j] = match (rows[i], cols[j]) {
                (Slot::Real(r), Slot::Real(c)) => {
                    let s = similarity[r * n_ad + c];
                    if s >= sim_threshold {
                        1.0 / (s + EPS_C)
                    } else {
                        C_BIG
                    }
                }
                (Slot::Virtual, Slot::Virtual) => 0.0,
                _ => C_BIG,
            };
        }
    }
    Ok(CostMatrix {
        k,
        data,
        rows,
        cols,
        similarity,
        n_vd,
        n_ad,
    })
}

pub fn build_cost_matrix(
    vd_pids: &[Pid],
    ad_pids: &[Pid],
    w: &FeatureWeights,
    sim_threshold: f64,
    cfg: &IdentityConfig,
) -> Result<CostMatrix> {
    let mut sims = Vec::with_capacity(vd_pids.len() * ad_pids.len());
    for v in vd_pids {
        for a in ad_pids {
            sims.push(similarity(v, a, w, cfg)?);
        }
    }
    cost_matrix_from_similarity(sims, vd_pids.len(), ad_pids.len(), sim_threshold)
}

/// Decodes an assignment into outcomes: matched rows in VD order, then
/// unmatched VD, then unmatched AD in index order.
pub fn decode(cost: &CostMatrix, assignment: &Assignment) -> Vec<MatchOutcome> {
    let mut matched = Vec::new();
    let mut unmatched_vd = Vec::new();
    let mut ad_used = vec![false; cost.n_ad];
    for (i, &j) in assignment.row_to_col.iter().enumerate() {
        let Slot::Real(vd) = cost.rows[i] else {
            continue;
        };
        match cost.cols[j] {
            Slot::Real(ad) if cost.get(i, j) < C_BIG => {
                ad_used[ad] = true;
                matched.push(MatchOutcome::Matched {
                    vd,
                    ad,
                    similarity: cost.sim(vd, ad),
                });
            }
            _ => unmatched_vd.push(MatchOutcome::UnmatchedVd(vd)),
        }
    }
    matched.extend(unmatched_vd);
    matched.extend(
        ad_used
            .iter()
            .enumerate()
            .filter(|(_, used)| !**used)
            .map(|(ad, _)| MatchOutcome::UnmatchedAd(ad)),
    );
    matched
}

pub fn map_identities(
    vd_pids: &[Pid],
    ad_pids: &[Pid],
    w: &FeatureWeights,
    sim_threshold: f64,
    cfg: &IdentityConfig,
) -> Result<Vec<MatchOutcome>> {
    map_identities_with(&Hungarian, vd_pids, ad_pids, w, sim_threshold, cfg)
}

pub fn map_identities_with(
    solver: &dyn AssignmentSolver,
    vd_pids: &[Pid],
    ad_pids: &[Pid],
    w: &FeatureWeights,
    sim_threshold: f64,
    cfg: &IdentityConfig,
) -> Result<Vec<MatchOutcome>> {
    let cost = build_cost_matrix(vd_pids, ad_pids, w, sim_threshold, cfg)?;
    Ok(decode(&cost, &solver.solve(&cost)))
}

/// Assignment straight from a similarity table, skipping PID construction.
pub fn map_similarity(
    similarity: Vec<f64>,
    n_vd: usize,
    n_ad: usize,
    sim_threshold: f64,
) -> Result<Vec<MatchOutcome>> {
    let cost = cost_matrix_from_similarity(similarity, n_vd, n_ad, sim_threshold)?;
    Ok(decode(&cost, &hungarian(&cost)))
}
