//! Layer-wise relevance propagation with the γ, ε and z^B rules.
//!
//! Biases act as extra input neurons: they enter every denominator and the
//! relevance they receive is dropped, so conservation is exact only for
//! bias-free layers. Each denominator `z` is stabilized to
//! `z + stab·sign(z)` with `sign(0) = +1`.

use crate::error::{Error, Result};
use crate::model::{ForwardTrace, Layer, Network};
use crate::numerics::Tensor;

pub const DEFAULT_STABILIZER: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LrpRule {
    /// `R_{j|k} ∝ a_j (w_jk + γ w⁺_jk)`.
    Gamma(f64),
    /// `R_{j|k} = a_j w_jk / (z_k + ε·sign(z_k))`.
    Epsilon(f64),
    /// z^B rule with per-feature input bounds; first layer only.
    ZBox { low: Vec<f64>, high: Vec<f64> },
}

/// One rule per dense/conv layer, in forward order.
#[derive(Clone, Debug, PartialEq)]
pub struct LrpPlan {
    rules: Vec<LrpRule>,
    stabilizer: f64,
}

impl LrpPlan {
    pub fn new(net: &Network, rules: Vec<LrpRule>, stabilizer: f64) -> Result<Self> {
        let params = net.parametric_layers();
        if rules.len() != params.len() {
            return Err(Error::invalid(format!(
                "plan has {} rules for {} weighted layers",
                rules.len(),
                params.len()
            )));
        }
        if !(stabilizer >= 0.0) || !stabilizer.is_finite() {
            return Err(Error::invalid("stabilizer must be finite and ≥ 0"));
        }
        for (i, (rule, &l)) in rules.iter().zip(&params).enumerate() {
            match rule {
                LrpRule::Gamma(v) | LrpRule::Epsilon(v) => {
                    if !(*v >= 0.0) || !v.is_finite() {
                        return Err(Error::invalid(format!("rule {i}: parameter must be finite and ≥ 0")));
                    }
                }
                LrpRule::ZBox { low, high } => {
                    if i != 0 {
                        return Err(Error::invalid("the z^B rule is only allowed on the first layer"));
                    }
                    let n: usize = net.activation_shape(l).iter().product();
                    if low.len() != n || high.len() != n {
                        return Err(Error::invalid(format!("z^B bounds need {n} entries")));
                    }
                    if low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                        return Err(Error::invalid("z^B bounds need low ≤ high"));
                    }
                }
            }
        }
        Ok(LrpPlan { rules, stabilizer })
    }

    pub fn uniform_gamma(net: &Network, gamma: f64) -> Result<Self> {
        let n = net.parametric_layers().len();
        LrpPlan::new(net, vec![LrpRule::Gamma(gamma); n], DEFAULT_STABILIZER)
    }

    pub fn rules(&self) -> &[LrpRule] {
        &self.rules
    }

    pub fn stabilizer(&self) -> f64 {
        self.stabilizer
    }

    pub fn with_stabilizer(mut self, stabilizer: f64) -> Self {
        self.stabilizer = stabilizer;
        self
    }
}

/// Network-independent description of a plan, resolved by [`LrpConfig::plan`].
#[derive(Clone, Debug, PartialEq)]
pub struct LrpConfig {
    pub gamma: f64,
    /// Rule of the final layer: `Some(ε)` for the ε-rule, `None` for γ.
    pub last_layer_epsilon: Option<f64>,
    /// Uniform `(low, high)` pixel bounds for a z^B first layer.
    pub first_layer_bounds: Option<(f64, f64)>,
    pub stabilizer: f64,
}

impl LrpConfig {
    /// γ on every layer except the last, which uses ε = 1e-9.
    pub fn gamma(gamma: f64) -> Self {
        LrpConfig {
            gamma,
            last_layer_epsilon: Some(1e-9),
            first_layer_bounds: None,
            stabilizer: DEFAULT_STABILIZER,
        }
    }

    pub fn uniform_gamma(gamma: f64) -> Self {
        LrpConfig {
            last_layer_epsilon: None,
            ..LrpConfig::gamma(gamma)
        }
    }

    pub fn plan(&self, net: &Network) -> Result<LrpPlan> {
        let n = net.parametric_layers().len();
        let mut rules = vec![LrpRule::Gamma(self.gamma); n];
        if let Some(eps) = self.last_layer_epsilon {
            rules[n - 1] = LrpRule::Epsilon(eps);
        }
        if let Some((lo, hi)) = self.first_layer_bounds {
            let first = net.parametric_layers()[0];
            let d: usize = net.activation_shape(first).iter().product();
            rules[0] = LrpRule::ZBox {
                low: vec![lo; d],
                high: vec![hi; d],
            };
        }
        LrpPlan::new(net, rules, self.stabilizer)
    }
}

pub(crate) fn stabilize(z: f64, eps: f64) -> f64 {
    if z >= 0.0 {
        z + eps
    } else {
        z - eps
    }
}

/// `s_k = R_k / (z_k + eps·sign(z_k))`, zero where `R_k = 0`.
fn divide(relevance: &[f64], z: &[f64], eps: f64, layer: usize) -> Result<Vec<f64>> {
    relevance
        .iter()
        .zip(z)
        .enumerate()
        .map(|(k, (&r, &z))| {
            let den = stabilize(z, eps);
            if r == 0.0 {
                Ok(0.0)
            } else if den == 0.0 {
                Err(Error::DegenerateNeuron { layer, neuron: k })
            } else {
                Ok(r / den)
            }
        })
        .collect()
}

fn positive(v: &[f64]) -> Vec<f64> {
    v.iter().map(|w| w.max(0.0)).collect()
}

fn negative(v: &[f64]) -> Vec<f64> {
    v.iter().map(|w| w.min(0.0)).collect()
}

/// `v + γ v⁺`.
pub(crate) fn gamma_weights(v: &[f64], gamma: f64) -> Vec<f64> {
    v.iter().map(|&w| w + gamma * w.max(0.0)).collect()
}

/// One relevance step through a dense/conv layer. `index` is the layer's
/// position in the network, used in diagnostics.
pub fn lrp_step(
    layer: &Layer,
    index: usize,
    input: &Tensor,
    rule: &LrpRule,
    stabilizer: f64,
    relevance: &[f64],
) -> Result<Vec<f64>> {
    let (w, b) = layer
        .params()
        .ok_or_else(|| Error::invalid(format!("layer {index} has no weights")))?;
    let shape = input.shape();
    let a = input.data();
    match rule {
        LrpRule::Gamma(gamma) => {
            let wg = gamma_weights(w.data(), *gamma);
            let bg = b.map(|b| gamma_weights(b.data(), *gamma));
            let z = layer.linear_forward(shape, &wg, bg.as_deref(), a)?;
            let s = divide(relevance, &z, stabilizer, index)?;
            let c = layer.linear_transpose(shape, &wg, &s)?;
            Ok(a.iter().zip(c).map(|(a, c)| a * c).collect())
        }
        LrpRule::Epsilon(eps) => {
            let z = layer.linear_forward(shape, w.data(), b.map(Tensor::data), a)?;
            let s = divide(relevance, &z, eps + stabilizer, index)?;
            let c = layer.linear_transpose(shape, w.data(), &s)?;
            Ok(a.iter().zip(c).map(|(a, c)| a * c).collect())
        }
        LrpRule::ZBox { low, high } => {
            if low.len() != a.len() || high.len() != a.len() {
                return Err(Error::ShapeMismatch {
                    expected: vec![a.len()],
                    actual: vec![low.len()],
                });
            }
            let (wp, wn) = (positive(w.data()), negative(w.data()));
            let z_x = layer.linear_forward(shape, w.data(), b.map(Tensor::data), a)?;
            let z_l = layer.linear_forward(shape, &wp, None, low)?;
            let z_h = layer.linear_forward(shape, &wn, None, high)?;
            let z: Vec<f64> = (0..z_x.len()).map(|k| z_x[k] - z_l[k] - z_h[k]).collect();
            let s = divide(relevance, &z, stabilizer, index)?;
            let c_x = layer.linear_transpose(shape, w.data(), &s)?;
            let c_l = layer.linear_transpose(shape, &wp, &s)?;
            let c_h = layer.linear_transpose(shape, &wn, &s)?;
            Ok((0..a.len())
                .map(|j| a[j] * c_x[j] - low[j] * c_l[j] - high[j] * c_h[j])
                .collect())
        }
    }
}

/// Propagates an arbitrary output relevance vector back to the input.
pub fn lrp_relevance(net: &Network, trace: &ForwardTrace, seed: &[f64], plan: &LrpPlan) -> Result<Tensor> {
    let layers = net.layers();
    if trace.activations.len() != layers.len() + 1 || trace.input().shape() != net.input_shape() {
        return Err(Error::invalid("trace does not belong to this network"));
    }
    if seed.len() != net.output_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![net.output_dim()],
            actual: vec![seed.len()],
        });
    }
    if plan.rules.len() != net.parametric_layers().len() {
        return Err(Error::invalid("plan does not match the network"));
    }
    let mut rule_index = plan.rules.len();
    let mut r = seed.to_vec();
    for (i, layer) in layers.iter().enumerate().rev() {
        let input = trace.layer_input(i);
        r = match layer {
            Layer::Dense(_) | Layer::Conv2d(_) => {
                rule_index -= 1;
                lrp_step(layer, i, input, &plan.rules[rule_index], plan.stabilizer, &r)?
            }
            Layer::Relu | Layer::Flatten => r,
            Layer::MaxPool2d(_) => layer.backward_input(input, &r)?,
        };
    }
    Tensor::new(net.input_shape().to_vec(), r)
}

/// Relevance of output `target`, initialized to its logit `z_j`.
pub fn lrp(net: &Network, trace: &ForwardTrace, target: usize, plan: &LrpPlan) -> Result<Tensor> {
    net.check_target(target)?;
    let h = net.output_dim();
    let mut seed = vec![0.0; h];
    seed[target] = trace.logits().data()[target];
    lrp_relevance(net, trace, &seed, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dense;

    fn dense(w: Vec<f64>, out: usize, inp: usize) -> Layer {
        Layer::Dense(Dense::new(Tensor::new(vec![out, inp], w).unwrap(), None).unwrap())
    }

    #[test]
    fn positive_layer_is_gamma_independent() {
        let net = Network::new(vec![3], vec![dense(vec![1.0, 2.0, 0.5], 1, 3)]).unwrap();
        let x = Tensor::from_vec(vec![1.0, 1.0, 2.0]);
        let trace = net.forward(&x).unwrap();
        for gamma in [0.0, 0.3, 5.0] {
            let plan = LrpPlan::uniform_gamma(&net, gamma).unwrap().with_stabilizer(0.0);
            let r = lrp(&net, &trace, 0, &plan).unwrap();
            for (a, b) in r.data().iter().zip([1.0, 2.0, 1.0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_denominator_without_stabilizer_is_degenerate() {
        let net = Network::new(vec![2], vec![dense(vec![1.0, -1.0], 1, 2)]).unwrap();
        let trace = net.forward(&Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        let plan = LrpPlan::new(&net, vec![LrpRule::Epsilon(0.0)], 0.0).unwrap();
        let err = lrp_relevance(&net, &trace, &[1.0], &plan).unwrap_err();
        assert!(matches!(err, Error::DegenerateNeuron { layer: 0, neuron: 0 }));
        let stabilized = plan.with_stabilizer(1e-9);
        assert!(lrp_relevance(&net, &trace, &[1.0], &stabilized).is_ok());
    }

    #[test]
    fn plan_validation() {
        let net = Network::mlp(3, &[4], 2, true, 0).unwrap();
        assert!(LrpPlan::new(&net, vec![LrpRule::Gamma(0.1)], 0.0).is_err());
        assert!(LrpPlan::new(&net, vec![LrpRule::Gamma(-1.0), LrpRule::Gamma(0.0)], 0.0).is_err());
        let zb = LrpRule::ZBox {
            low: vec![0.0; 3],
            high: vec![1.0; 3],
        };
        assert!(LrpPlan::new(&net, vec![zb.clone(), LrpRule::Gamma(0.0)], 0.0).is_ok());
        assert!(LrpPlan::new(&net, vec![LrpRule::Gamma(0.0), zb], 0.0).is_err());
        let cfg = LrpConfig::gamma(0.25);
        assert_eq!(
            cfg.plan(&net).unwrap().rules(),
            &[LrpRule::Gamma(0.25), LrpRule::Epsilon(1e-9)]
        );
    }
}
