//! Brute-force references used to cross-check the analyses.
//!
//! Nothing here shares code with the module it checks beyond the model interface and
//! the toxic spec's scoring: windows are plain vectors, transitions are rebuilt from
//! logits at every node, and nothing is memoised.

use crate::dynamics::{next_token_distribution, Temperature};
use crate::error::Result;
use crate::models::Discriminant;
use crate::par;
use crate::safeguard::ToxicSpec;
use crate::token::TokenId;

/// Full minimax tree for the adversary's expected arrival time, to `depth` compressed
/// steps: 0 on toxic windows, ∞ when the depth runs out, otherwise
/// `1 + min_u Σ_b p_b · value(child)`.
pub fn game_tree_value<M: Discriminant + ?Sized>(model: &M, spec: &ToxicSpec, x: &[TokenId], depth: usize, t: Temperature) -> Result<f64> {
    if spec.is_toxic(x) {
        return Ok(0.0);
    }
    if depth == 0 {
        return Ok(f64::INFINITY);
    }
    let k = model.alphabet().k();
    let pad = model.alphabet().pad();
    let dist = next_token_distribution(model, x, t)?;
    let mut best = f64::INFINITY;
    for u in 0..k {
        let mut e = 0.0;
        for (b, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut seq: Vec<TokenId> = x[2..].to_vec();
            seq.push(b);
            if spec.censor_output && spec.score(&seq) >= spec.threshold {
                *seq.last_mut().expect("just pushed") = pad;
            }
            seq.push(u);
            if spec.censor_input && spec.score(&seq) >= spec.threshold {
                *seq.last_mut().expect("just pushed") = pad;
            }
            e += p * game_tree_value(model, spec, &seq, depth - 1, t)?;
        }
        let v = 1.0 + e;
        if v < best {
            best = v;
        }
    }
    Ok(best)
}

/// [`game_tree_value`] for many starts, in parallel.
pub fn game_tree_values<M: Discriminant + ?Sized>(
    model: &M,
    spec: &ToxicSpec,
    starts: &[Vec<TokenId>],
    depth: usize,
    t: Temperature,
) -> Result<Vec<f64>> {
    par::try_map_range(starts.len(), |i| game_tree_value(model, spec, &starts[i], depth, t))
}
