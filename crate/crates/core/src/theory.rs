//! Operator-norm analysis of LRP-γ.
//!
//! For a layer with input activations `a ≥ 0`, weights `w` and output neuron
//! `k`, let `p_k = Σ_j [a_j w_jk]⁺` and `n_k = Σ_j [a_j w_jk]⁻`, biases counted
//! as an extra input with activation 1. Column `k` of the γ-rule matrix has
//! L1 norm `(p_k(1+γ) + |n_k|) / |p_k(1+γ) − |n_k||`, which for an active
//! neuron (`c_k = |n_k|/p_k < 1`) is `1 + 2c_k/(1 − c_k + γ)`.
//!
//! Explicit matrices here are the plain γ rule without stabilizer; the bias
//! entry of each column is reported separately as `bias_share`.

use crate::error::{Error, Result};
use crate::explainers::{lrp_relevance, LrpPlan, LrpRule};
use crate::model::{Layer, Network};
use crate::numerics::{l1_operator_norm, Matrix, Tensor};

/// Per-layer redistribution matrix `R_{j|k}`, inputs × outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMatrix {
    pub matrix: Matrix,
    /// Relevance fraction absorbed by the bias of each output.
    pub bias_share: Option<Vec<f64>>,
    /// Outputs whose denominator is exactly zero; their columns are zero.
    pub degenerate: Vec<usize>,
}

impl LayerMatrix {
    /// L1 norm of column `k` including its bias entry.
    pub fn column_l1(&self, k: usize) -> f64 {
        let col: f64 = (0..self.matrix.rows()).map(|j| self.matrix.get(j, k).abs()).sum();
        col + self.bias_share.as_ref().map_or(0.0, |b| b[k].abs())
    }

    /// The matrix with the bias shares appended as a last row.
    pub fn with_bias_row(&self) -> Matrix {
        let Some(b) = &self.bias_share else {
            return self.matrix.clone();
        };
        let (rows, cols) = self.matrix.shape();
        Matrix::from_fn(
            rows + 1,
            cols,
            |i, k| if i < rows { self.matrix.get(i, k) } else { b[k] },
        )
    }
}

fn params_of(layer: &Layer) -> Result<(&Tensor, Option<&Tensor>)> {
    layer
        .params()
        .ok_or_else(|| Error::invalid(format!("{} layer has no redistribution matrix", layer.kind_name())))
}

/// Bias of every output unit; conv biases are shared across positions.
fn output_bias(layer: &Layer, input_shape: &[usize], weight_len: usize, bias: &[f64]) -> Result<Vec<f64>> {
    let d: usize = input_shape.iter().product();
    layer.linear_forward(input_shape, &vec![0.0; weight_len], Some(bias), &vec![0.0; d])
}

fn gamma_params(layer: &Layer, gamma: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("γ must be ≥ 0"));
    }
    let (w, b) = params_of(layer)?;
    let g = |v: &[f64]| v.iter().map(|&x| x + gamma * x.max(0.0)).collect::<Vec<f64>>();
    Ok((g(w.data()), b.map(|b| g(b.data()))))
}

/// The γ-rule matrix of one dense/conv layer at the given input. Convolutions
/// are unrolled one output column at a time.
pub fn explicit_layer_matrix(layer: &Layer, input: &Tensor, gamma: f64) -> Result<LayerMatrix> {
    let (wg, bg) = gamma_params(layer, gamma)?;
    let shape = input.shape();
    let a = input.data();
    let z = layer.linear_forward(shape, &wg, bg.as_deref(), a)?;
    let (d, h) = (a.len(), z.len());
    let mut matrix = Matrix::zeros(d, h);
    let out_bias = bg
        .as_ref()
        .map(|b| output_bias(layer, shape, wg.len(), b))
        .transpose()?;
    let mut bias_share = out_bias.as_ref().map(|_| vec![0.0; h]);
    let mut degenerate = Vec::new();
    let mut e = vec![0.0; h];
    for k in 0..h {
        if z[k] == 0.0 {
            degenerate.push(k);
            continue;
        }
        let col: Vec<f64> = match layer {
            Layer::Dense(_) => (0..d).map(|j| a[j] * wg[k * d + j] / z[k]).collect(),
            _ => {
                e[k] = 1.0;
                let back = layer.linear_transpose(shape, &wg, &e)?;
                e[k] = 0.0;
                (0..d).map(|j| a[j] * back[j] / z[k]).collect()
            }
        };
        matrix.set_column(k, &col);
        if let (Some(share), Some(b)) = (bias_share.as_mut(), out_bias.as_ref()) {
            share[k] = b[k] / z[k];
        }
    }
    Ok(LayerMatrix {
        matrix,
        bias_share,
        degenerate,
    })
}

/// `(p_k, n_k)` for every output of a dense/conv layer.
pub fn contribution_sums(layer: &Layer, input: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (w, b) = params_of(layer)?;
    let shape = input.shape();
    let split = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (
            v.iter().map(|x| x.max(0.0)).collect(),
            v.iter().map(|x| x.min(0.0)).collect(),
        )
    };
    let (ap, an) = split(input.data());
    let (wp, wn) = split(w.data());
    let f = |wt: &[f64], act: &[f64]| layer.linear_forward(shape, wt, None, act);
    let (pp, nn, pn, np) = (f(&wp, &ap)?, f(&wn, &an)?, f(&wn, &ap)?, f(&wp, &an)?);
    let mut p: Vec<f64> = pp.iter().zip(&nn).map(|(a, b)| a + b).collect();
    let mut n: Vec<f64> = pn.iter().zip(&np).map(|(a, b)| a + b).collect();
    if let Some(b) = b {
        let b = output_bias(layer, shape, w.len(), b.data())?;
        for (k, &bk) in b.iter().enumerate() {
            p[k] += bk.max(0.0);
            n[k] += bk.min(0.0);
        }
    }
    Ok((p, n))
}

/// Column L1 norms of the γ-rule matrix including bias entries, computed as
/// `(|a|·|w'| + |b'|) / |z'|` without materializing the matrix.
pub fn column_l1_norms(layer: &Layer, input: &Tensor, gamma: f64) -> Result<Vec<f64>> {
    let (wg, bg) = gamma_params(layer, gamma)?;
    let shape = input.shape();
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<f64>>();
    let z = layer.linear_forward(shape, &wg, bg.as_deref(), input.data())?;
    let mass = layer.linear_forward(
        shape,
        &abs(&wg),
        bg.as_ref().map(|b| abs(b)).as_deref(),
        &abs(input.data()),
    )?;
    Ok(z.iter()
        .zip(mass)
        .map(|(&z, m)| if m == 0.0 { 0.0 } else { m / z.abs() })
        .collect())
}

/// Closed-form column norm from `(p, n)`; valid for any sign pattern of the
/// column when activations are non-negative.
pub fn closed_form_column_norm(p: f64, n: f64, gamma: f64) -> f64 {
    let pg = p * (1.0 + gamma);
    let num = pg + n.abs();
    if num == 0.0 {
        return 0.0;
    }
    num / (pg - n.abs()).abs()
}

/// `1 + 2c/(1 − c + γ)`.
pub fn analytic_bound(c: f64, gamma: f64) -> f64 {
    1.0 + 2.0 * c / (1.0 - c + gamma)
}

fn is_admissible(p: f64, n: f64) -> bool {
    p > 0.0 && n.abs() < p
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormReport {
    pub layer: usize,
    pub gamma: f64,
    /// `|n_k|/p_k` per output; infinite where `p_k = 0`.
    pub c_values: Vec<f64>,
    /// Outputs with `p_k > 0` and `|n_k| < p_k`.
    pub admissible: Vec<usize>,
    /// Largest `c_k` over admissible outputs.
    pub c: f64,
    pub analytic_l1: f64,
    /// Largest column norm over admissible outputs.
    pub numeric_l1: f64,
    /// Admissible output attaining `c` (lowest index on ties).
    pub argmax_column: usize,
}

fn ensure_nonnegative(input: &Tensor) -> Result<()> {
    if input.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("the closed form needs non-negative input activations"));
    }
    Ok(())
}

/// Closed-form and numeric L1 operator norms of one layer, restricted to
/// admissible columns.
pub fn analytic_l1_norm(layer: &Layer, input: &Tensor, gamma: f64) -> Result<LayerNormReport> {
    ensure_nonnegative(input)?;
    let (p, n) = contribution_sums(layer, input)?;
    let norms = column_l1_norms(layer, input, gamma)?;
    let c_values: Vec<f64> = p
        .iter()
        .zip(&n)
        .map(|(&p, &n)| if p > 0.0 { n.abs() / p } else { f64::INFINITY })
        .collect();
    let admissible: Vec<usize> = (0..p.len()).filter(|&k| is_admissible(p[k], n[k])).collect();
    let Some(&first) = admissible.first() else {
        return Err(Error::NoAdmissibleColumn { layer: 0 });
    };
    let mut argmax = first;
    let mut numeric = 0.0f64;
    for &k in &admissible {
        if c_values[k] > c_values[argmax] {
            argmax = k;
        }
        numeric = numeric.max(norms[k]);
    }
    let c = c_values[argmax];
    Ok(LayerNormReport {
        layer: 0,
        gamma,
        c_values,
        admissible,
        c,
        analytic_l1: analytic_bound(c, gamma),
        numeric_l1: numeric,
        argmax_column: argmax,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub gammas: Vec<f64>,
    /// Operator norm over admissible columns, per γ.
    pub l1_norms: Vec<f64>,
    pub argmax_columns: Vec<usize>,
    pub entries_checked: usize,
    /// Set when the maximizing column changes along the grid.
    pub warnings: Vec<String>,
}

/// Checks that every entry of the admissible columns, bias entries
/// included, shrinks in magnitude as γ grows; the column norms then cannot
/// grow either. A changing argmax column is reported as a warning.
pub fn gamma_monotonicity_check(layer: &Layer, input: &Tensor, gammas: &[f64]) -> Result<MonotonicityReport> {
    if gammas.len() < 2 || gammas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("need at least two strictly ascending γ values"));
    }
    ensure_nonnegative(input)?;
    let (p, n) = contribution_sums(layer, input)?;
    let admissible: Vec<usize> = (0..p.len()).filter(|&k| is_admissible(p[k], n[k])).collect();
    if admissible.is_empty() {
        return Err(Error::NoAdmissibleColumn { layer: 0 });
    }
    let mut prev: Option<(f64, Matrix)> = None;
    let mut report = MonotonicityReport {
        gammas: gammas.to_vec(),
        l1_norms: Vec::new(),
        argmax_columns: Vec::new(),
        entries_checked: 0,
        warnings: Vec::new(),
    };
    for &g in gammas {
        let lm = explicit_layer_matrix(layer, input, g)?;
        let full = lm.with_bias_row();
        let mut best = (admissible[0], f64::NEG_INFINITY);
        for &k in &admissible {
            let norm = lm.column_l1(k);
            if norm > best.1 {
                best = (k, norm);
            }
        }
        if let Some((g_lo, before)) = &prev {
            for &k in &admissible {
                for j in 0..full.rows() {
                    let (b, a) = (before.get(j, k), full.get(j, k));
                    report.entries_checked += 1;
                    if a.abs() > b.abs() + 1e-12 * (1.0 + b.abs()) {
                        return Err(Error::MonotonicityViolation {
                            row: j,
                            col: k,
                            gamma_lo: *g_lo,
                            gamma_hi: g,
                            before: b,
                            after: a,
                        });
                    }
                }
            }
            let prev_arg = *report.argmax_columns.last().unwrap();
            if prev_arg != best.0 {
                report.warnings.push(format!(
                    "argmax column moved from {prev_arg} to {} between γ={g_lo} and γ={g}",
                    best.0
                ));
            }
        }
        report.l1_norms.push(best.1);
        report.argmax_columns.push(best.0);
        prev = Some((g, full));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerBound {
    /// Index of the layer in the network.
    pub layer: usize,
    /// γ of the rule; 0 for the ε rule.
    pub gamma: f64,
    /// Largest `c_k` over the columns that can carry relevance.
    pub c: f64,
    /// Closed-form bound on the L1 norm over those columns.
    pub analytic_l1: f64,
    /// Largest numeric column norm over those columns.
    pub numeric_l1: f64,
    pub columns: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBoundReport {
    pub layers: Vec<LayerBound>,
    /// `Π analytic_l1`.
    pub product_bound: f64,
    /// `Π numeric_l1`.
    pub product_numeric: f64,
    /// `‖E(e_j)‖₁` for every basis readout.
    pub realized_ratios: Vec<f64>,
}

impl NetworkBoundReport {
    /// Largest realized ratio, the L1 operator norm of the whole chain.
    pub fn chain_l1(&self) -> f64 {
        self.realized_ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn median_ratio(&self) -> f64 {
        let mut v = self.realized_ratios.clone();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    }

    /// `realized ≤ chain ≤ Π numeric ≤ Π analytic`, each with `1e-9` slack.
    pub fn chain_holds(&self) -> bool {
        let le = |a: f64, b: f64| a <= b * (1.0 + 1e-9);
        self.realized_ratios.iter().all(|&r| le(r, self.chain_l1()))
            && le(self.chain_l1(), self.product_numeric)
            && le(self.product_numeric, self.product_bound)
    }
}

/// Per-layer bounds from the live activations at `x` and the realized L1
/// amplification of every basis readout under `plan`.
///
/// A hidden layer followed by a ReLU only passes relevance through neurons
/// with positive pre-activation, which are exactly its admissible columns;
/// every other layer is bounded over all of its columns. ε rules are
/// bounded by their γ = 0 closed form.
pub fn network_bound_report(net: &Network, x: &Tensor, plan: &LrpPlan) -> Result<NetworkBoundReport> {
    let trace = net.forward(x)?;
    let params = net.parametric_layers();
    if plan.rules().len() != params.len() {
        return Err(Error::invalid("plan does not match the network"));
    }
    let mut layers = Vec::with_capacity(params.len());
    for (&li, rule) in params.iter().zip(plan.rules()) {
        let gamma = match rule {
            LrpRule::Gamma(g) => *g,
            LrpRule::Epsilon(_) => 0.0,
            LrpRule::ZBox { .. } => {
                return Err(Error::invalid("the z^B rule has no closed-form bound"));
            }
        };
        let layer = &net.layers()[li];
        let input = trace.layer_input(li);
        ensure_nonnegative(input)?;
        let (p, n) = contribution_sums(layer, input)?;
        let norms = column_l1_norms(layer, input, gamma)?;
        let relu_next = matches!(net.layers().get(li + 1), Some(Layer::Relu));
        let columns: Vec<usize> = (0..p.len())
            .filter(|&k| !relu_next || is_admissible(p[k], n[k]))
            .collect();
        if columns.is_empty() {
            return Err(Error::NoAdmissibleColumn { layer: li });
        }
        let mut bound = LayerBound {
            layer: li,
            gamma,
            c: 0.0,
            analytic_l1: 0.0,
            numeric_l1: 0.0,
            columns: columns.len(),
        };
        for &k in &columns {
            let c = if p[k] > 0.0 { n[k].abs() / p[k] } else { f64::INFINITY };
            bound.c = bound.c.max(c);
            bound.analytic_l1 = bound.analytic_l1.max(closed_form_column_norm(p[k], n[k], gamma));
            bound.numeric_l1 = bound.numeric_l1.max(norms[k]);
        }
        layers.push(bound);
    }
    let h = net.output_dim();
    let realized_ratios = (0..h)
        .map(|j| {
            let mut e = vec![0.0; h];
            e[j] = 1.0;
            Ok(lrp_relevance(net, &trace, &e, plan)?.l1_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NetworkBoundReport {
        product_bound: layers.iter().map(|l| l.analytic_l1).product(),
        product_numeric: layers.iter().map(|l| l.numeric_l1).product(),
        layers,
        realized_ratios,
    })
}

/// L1 operator norm of an explicit layer matrix including its bias row.
pub fn explicit_l1(lm: &LayerMatrix) -> f64 {
    l1_operator_norm(&lm.with_bias_row())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dense;

    fn dense(w: Vec<f64>, out: usize, inp: usize) -> Layer {
        Layer::Dense(Dense::new(Tensor::new(vec![out, inp], w).unwrap(), None).unwrap())
    }

    #[test]
    fn formula_arithmetic() {
        assert_eq!(analytic_bound(0.5, 0.0), 3.0);
        for g in [0.0, 0.1, 7.0] {
            assert_eq!(analytic_bound(0.0, g), 1.0);
        }
        assert!((closed_form_column_norm(2.0, -1.0, 0.0) - 3.0).abs() < 1e-15);
        assert_eq!(closed_form_column_norm(0.0, -2.0, 0.3), 1.0);
        assert_eq!(closed_form_column_norm(0.0, 0.0, 0.3), 0.0);
    }

    #[test]
    fn no_admissible_column_is_an_error() {
        let layer = dense(vec![-1.0, -1.0], 1, 2);
        let a = Tensor::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            analytic_l1_norm(&layer, &a, 0.1),
            Err(Error::NoAdmissibleColumn { .. })
        ));
    }

    #[test]
    fn negative_activations_are_rejected() {
        let layer = dense(vec![1.0, 1.0], 1, 2);
        assert!(analytic_l1_norm(&layer, &Tensor::from_vec(vec![1.0, -1.0]), 0.1).is_err());
    }

    #[test]
    fn grid_must_ascend() {
        let layer = dense(vec![1.0, 1.0], 1, 2);
        let a = Tensor::from_vec(vec![1.0, 1.0]);
        assert!(gamma_monotonicity_check(&layer, &a, &[0.5]).is_err());
        assert!(gamma_monotonicity_check(&layer, &a, &[0.5, 0.5]).is_err());
    }
}
