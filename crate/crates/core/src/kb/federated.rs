use crate::error::{Error, Result};
use crate::nn::{ModelParams, ParamArray};
use crate::scalar::Scalar;

/// Element-wise weighted arithmetic mean of equally laid-out parameter sets.
/// Weights must be non-negative and sum to 1 within 1e-9. Accumulation runs
/// in f64 regardless of `T`.
pub fn fed_avg<T: Scalar>(params: &[ModelParams<T>], weights: &[f64]) -> Result<ModelParams<T>> {
    let first = params.first().ok_or_else(|| Error::invalid("fed_avg needs at least one model"))?;
    if weights.len() != params.len() {
        return Err(Error::invalid("one weight per model is required"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights must be >= 0 and sum to 1"));
    }
    for p in &params[1..] {
        first.check_layout(p)?;
    }
    let arrays = first
        .arrays
        .iter()
        .enumerate()
        .map(|(a, arr)| {
            let values = (0..arr.values.len())
                .map(|i| {
                    let v: f64 = params.iter().zip(weights).map(|(p, w)| w * p.arrays[a].values[i].as_f64()).sum();
                    T::from_f64_lossy(v)
                })
                .collect();
            ParamArray { dims: arr.dims.clone(), values }
        })
        .collect();
    Ok(ModelParams { arrays })
}

/// Metropolis-Hastings mixing weights for an undirected graph on `n` nodes.
/// Row `i` lists `(j, w_ij)` including the self weight; rows sum to 1 and the
/// matrix is symmetric, so repeated mixing preserves the mean.
pub fn metropolis_weights(n: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(Error::invalid(format!("bad edge ({a}, {b}) for {n} nodes")));
        }
        if !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> =
                adj[i].iter().map(|&j| (j, 1.0 / (1 + adj[i].len().max(adj[j].len())) as f64)).collect();
            row.sort_by_key(|&(j, _)| j);
            let own = 1.0 - row.iter().map(|&(_, w)| w).sum::<f64>();
            row.push((i, own));
            row
        })
        .collect())
}

/// One synchronous neighbour-averaging round.
pub fn neighbor_round<T: Scalar>(states: &[ModelParams<T>], mixing: &[Vec<(usize, f64)>]) -> Result<Vec<ModelParams<T>>> {
    mixing
        .iter()
        .map(|row| {
            let group: Vec<ModelParams<T>> = row.iter().map(|&(j, _)| states[j].clone()).collect();
            let w: Vec<f64> = row.iter().map(|&(_, w)| w).collect();
            fed_avg(&group, &w)
        })
        .collect()
}

/// Runs neighbour rounds until every element's spread across servers is at
/// most `tol`. Returns the final states and the number of rounds taken.
pub fn consensus<T: Scalar>(
    states: &[ModelParams<T>],
    edges: &[(usize, usize)],
    tol: f64,
    max_rounds: usize,
) -> Result<(Vec<ModelParams<T>>, usize)> {
    let mixing = metropolis_weights(states.len(), edges)?;
    let mut cur = states.to_vec();
    for round in 0..=max_rounds {
        if spread(&cur) <= tol {
            return Ok((cur, round));
        }
        if round < max_rounds {
            cur = neighbor_round(&cur, &mixing)?;
        }
    }
    Err(Error::invalid(format!("no consensus within {max_rounds} rounds (graph disconnected?)")))
}

fn spread<T: Scalar>(states: &[ModelParams<T>]) -> f64 {
    let flat: Vec<Vec<f64>> = states.iter().map(|s| s.iter_values().map(|v| v.as_f64()).collect()).collect();
    let len = flat.first().map_or(0, Vec::len);
    (0..len)
        .map(|i| {
            let (lo, hi) = flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[i]), hi.max(v[i])));
            hi - lo
        })
        .fold(0.0, f64::max)
}
