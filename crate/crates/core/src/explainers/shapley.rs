//! Permutation-sampling Shapley values.
//!
//! Each cycle draws a random order of features (or square patches), starts
//! from the all-baseline input and inserts the original values one group at a
//! time; a group is credited with the resulting change of every logit. Cycle
//! `c` draws its permutation from stream `c` of the seed, so any cycle can be
//! recomputed in isolation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyParams {
    pub cycles: usize,
    /// Value a removed feature is set to (0 is a black pixel).
    pub baseline_value: f64,
    pub seed: u64,
    /// Side of the square patches inserted together; 1 for single pixels.
    pub patch_size: usize,
}

impl ShapleyParams {
    pub fn new(cycles: usize, seed: u64) -> Self {
        ShapleyParams {
            cycles,
            baseline_value: 0.0,
            seed,
            patch_size: 1,
        }
    }
}

/// Feature groups: `p×p` spatial patches spanning all channels for `[C, H, W]`
/// inputs, runs of `p` consecutive features otherwise.
pub(crate) fn feature_groups(shape: &[usize], p: usize) -> Vec<Vec<usize>> {
    if let [c, h, w] = *shape {
        let mut groups = Vec::new();
        for py in (0..h).step_by(p) {
            for px in (0..w).step_by(p) {
                let mut g = Vec::new();
                for ch in 0..c {
                    for y in py..(py + p).min(h) {
                        for x in px..(px + p).min(w) {
                            g.push((ch * h + y) * w + x);
                        }
                    }
                }
                groups.push(g);
            }
        }
        groups
    } else {
        let d: usize = shape.iter().product();
        (0..d).step_by(p).map(|s| (s..(s + p).min(d)).collect()).collect()
    }
}

/// Group contributions of one permutation cycle, `[group][output]`.
pub(crate) fn shapley_cycle(
    net: &Network,
    x: &Tensor,
    groups: &[Vec<usize>],
    params: &ShapleyParams,
    cycle: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(cycle as u64);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);

    let mut current = Tensor::filled(x.shape().to_vec(), params.baseline_value);
    let mut prev = net.logits(&current)?.into_data();
    let mut out = vec![Vec::new(); groups.len()];
    for g in order {
        for &i in &groups[g] {
            current.data_mut()[i] = x.data()[i];
        }
        let next = net.logits(&current)?.into_data();
        out[g] = next.iter().zip(&prev).map(|(a, b)| a - b).collect();
        prev = next;
    }
    Ok(out)
}

/// Shapley estimates for every output; each group's value is spread evenly
/// over its features.
pub fn shapley_sampling_all(net: &Network, x: &Tensor, params: &ShapleyParams) -> Result<Vec<Tensor>> {
    if params.cycles == 0 || params.patch_size == 0 {
        return Err(Error::invalid("shapley sampling needs cycles ≥ 1 and patch size ≥ 1"));
    }
    if !params.baseline_value.is_finite() {
        return Err(Error::invalid("baseline value must be finite"));
    }
    x.ensure_shape(net.input_shape())?;
    let h = net.output_dim();
    let groups = feature_groups(x.shape(), params.patch_size);
    let mut totals = vec![vec![0.0; h]; groups.len()];
    for cycle in 0..params.cycles {
        for (t, c) in totals.iter_mut().zip(shapley_cycle(net, x, &groups, params, cycle)?) {
            t.iter_mut().zip(c).for_each(|(t, c)| *t += c);
        }
    }
    (0..h)
        .map(|j| {
            let mut v = vec![0.0; x.len()];
            for (g, t) in groups.iter().zip(&totals) {
                let share = t[j] / (params.cycles * g.len()) as f64;
                for &i in g {
                    v[i] = share;
                }
            }
            Tensor::new(x.shape().to_vec(), v)
        })
        .collect()
}

pub fn shapley_sampling(net: &Network, x: &Tensor, target: usize, params: &ShapleyParams) -> Result<Tensor> {
    net.check_target(target)?;
    Ok(shapley_sampling_all(net, x, params)?.swap_remove(target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_partition_the_input() {
        let groups = feature_groups(&[2, 5, 5], 2);
        assert_eq!(groups.len(), 9);
        let mut all: Vec<usize> = groups.concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(feature_groups(&[5], 2), vec![vec![0, 1], vec![2, 3], vec![4]]);
    }

    #[test]
    fn cycles_are_independent_of_each_other() {
        let net = Network::mlp(6, &[5], 3, true, 2).unwrap();
        let x = Tensor::from_vec(vec![0.1, 0.5, -0.3, 0.9, 0.2, -0.7]);
        let groups = feature_groups(&[6], 1);
        let p = ShapleyParams::new(4, 11);
        let a = shapley_cycle(&net, &x, &groups, &p, 3).unwrap();
        let b = shapley_cycle(&net, &x, &groups, &p, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, shapley_cycle(&net, &x, &groups, &p, 2).unwrap());
    }
}
