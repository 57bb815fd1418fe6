use serde::{Deserialize, Serialize};

use super::RetrievalParams;
use crate::error::{Error, Result};
use crate::indexer::{GraphIndex, TransitionMatrix};

/// Per-node scores in graph node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub iteration_count: usize,
    pub converged: bool,
}

impl ScoreVector {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Restart distribution plus the seeds it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Restart {
    pub values: Vec<f64>,
    pub used: Vec<String>,
    pub skipped: Vec<String>,
}

/// Spreads unit mass over the seed entity nodes: uniformly, or in proportion
/// to node score when `use_node_score_restart` is set.
pub fn restart_distribution(seeds: &[String], index: &GraphIndex, params: &RetrievalParams) -> Result<Restart> {
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    let mut weights = Vec::new();
    for s in seeds {
        match (index.entity_node(s), index.entity(s)) {
            (Some(node), Some(e)) => {
                if used.contains(s) {
                    continue;
                }
                used.push(s.clone());
                let w = if params.use_node_score_restart { e.node_score } else { 1.0 };
                weights.push((node, w));
            }
            _ => {
                log::warn!("restart: seed `{s}` is not in the index");
                skipped.push(s.clone());
            }
        }
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if used.is_empty() || total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NoSeeds);
    }
    let mut values = vec![0.0; index.n_nodes()];
    for (node, w) in weights {
        values[node] = w / total;
    }
    Ok(Restart { values, used, skipped })
}

/// Power iteration `v' = (1 - alpha) (P v + d(v) v0) + alpha v0`, where
/// `d(v)` is the mass sitting on dangling nodes. Stops when the total
/// variation between successive vectors (half their L1 distance) drops below
/// `tol`; that distance shrinks by at least `1 - alpha` per step from at most
/// 1, so convergence takes at most `ceil(ln tol / ln(1 - alpha)) + 1` steps.
pub fn run_ppr(transition: &TransitionMatrix, v0: &[f64], params: &RetrievalParams) -> Result<ScoreVector> {
    run_ppr_observed(transition, v0, params, |_, _| {})
}

/// [`run_ppr`] calling `observer(iteration, v)` after every update.
pub fn run_ppr_observed(
    transition: &TransitionMatrix,
    v0: &[f64],
    params: &RetrievalParams,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<ScoreVector> {
    params.validate()?;
    let n = transition.n();
    if v0.len() != n {
        return Err(Error::InvalidParam(format!("restart vector has {} entries for {n} nodes", v0.len())));
    }
    if v0.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParam("restart vector must be finite and non-negative".into()));
    }
    let mass: f64 = v0.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!("restart vector sums to {mass}, not 1")));
    }

    let alpha = params.alpha;
    let dangling = transition.dangling();
    let mut v = v0.to_vec();
    let mut next = vec![0.0; n];
    let mut spread = vec![0.0; n];
    for it in 1..=params.max_iter {
        transition.matrix().mul_vec(&v, &mut spread);
        let lost: f64 = v.iter().zip(dangling).filter(|(_, &d)| d).map(|(x, _)| x).sum();
        let mut diff = 0.0;
        for i in 0..n {
            let x = (1.0 - alpha) * (spread[i] + lost * v0[i]) + alpha * v0[i];
            if !x.is_finite() {
                return Err(Error::Numerical { iteration: it });
            }
            diff += 0.5 * (x - v[i]).abs();
            next[i] = x;
        }
        std::mem::swap(&mut v, &mut next);
        observer(it, &v);
        if diff < params.tol {
            return Ok(ScoreVector {
                values: v,
                iteration_count: it,
                converged: true,
            });
        }
    }
    Ok(ScoreVector {
        values: v,
        iteration_count: params.max_iter,
        converged: false,
    })
}
