//! Attribution methods producing `E(z_j) ∈ R^d` for an output `j`.
//!
//! Every method has a single-target entry point and an all-outputs variant
//! used to build redistribution matrices; the latter shares forward passes
//! (and noise draws, permutations) across outputs.

mod gradient;
mod lrp;
mod shapley;

pub use gradient::{
    gradient_x_input, integrated_gradients, integrated_gradients_all, smoothgrad, smoothgrad_all, SmoothGradParams,
};
pub use lrp::{lrp, lrp_relevance, lrp_step, LrpConfig, LrpPlan, LrpRule};
pub use shapley::{shapley_sampling, shapley_sampling_all, ShapleyParams};

use crate::error::Result;
use crate::model::Network;
use crate::numerics::Tensor;

/// An attribution method with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    GradientXInput,
    SmoothGrad(SmoothGradParams),
    IntegratedGradients { steps: usize, baseline_value: f64 },
    Lrp(LrpConfig),
    ShapleySampling(ShapleyParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GradientXInput => "gradient_x_input",
            Method::SmoothGrad(_) => "smoothgrad",
            Method::IntegratedGradients { .. } => "integrated_gradients",
            Method::Lrp(_) => "lrp",
            Method::ShapleySampling(_) => "shapley",
        }
    }

    /// The parameter swept in experiments: γ, noise std, steps or cycles.
    pub fn param(&self) -> Option<f64> {
        match self {
            Method::GradientXInput => None,
            Method::SmoothGrad(p) => Some(p.noise),
            Method::IntegratedGradients { steps, .. } => Some(*steps as f64),
            Method::Lrp(c) => Some(c.gamma),
            Method::ShapleySampling(p) => Some(p.cycles as f64),
        }
    }
}

/// Relevance of each input feature for one output.
#[derive(Clone, Debug, PartialEq)]
pub struct Attribution {
    pub values: Tensor,
    pub method: Method,
    pub target: usize,
}

fn baseline_like(x: &Tensor, value: f64) -> Tensor {
    Tensor::filled(x.shape().to_vec(), value)
}

/// Explains output `target` of `net` at `x`.
pub fn explain(net: &Network, x: &Tensor, target: usize, method: &Method) -> Result<Attribution> {
    let values = match method {
        Method::GradientXInput => gradient_x_input(net, x, target)?,
        Method::SmoothGrad(p) => smoothgrad(net, x, target, p)?,
        Method::IntegratedGradients { steps, baseline_value } => {
            integrated_gradients(net, x, target, *steps, &baseline_like(x, *baseline_value))?
        }
        Method::Lrp(cfg) => {
            let trace = net.forward(x)?;
            lrp(net, &trace, target, &cfg.plan(net)?)?
        }
        Method::ShapleySampling(p) => shapley_sampling(net, x, target, p)?,
    };
    Ok(Attribution {
        values,
        method: method.clone(),
        target,
    })
}

/// Explains every output of `net` at `x`; entry `j` is `E(z_j)`.
pub fn explain_all(net: &Network, x: &Tensor, method: &Method) -> Result<Vec<Attribution>> {
    let h = net.output_dim();
    let maps = match method {
        Method::GradientXInput => {
            let trace = net.forward(x)?;
            (0..h)
                .map(|j| {
                    let g = net.backward(&trace, &crate::model::one_hot(h, j))?;
                    x.zip_map(&g, |a, b| a * b)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Method::SmoothGrad(p) => smoothgrad_all(net, x, p)?,
        Method::IntegratedGradients { steps, baseline_value } => {
            integrated_gradients_all(net, x, *steps, &baseline_like(x, *baseline_value))?
        }
        Method::Lrp(cfg) => {
            let trace = net.forward(x)?;
            let plan = cfg.plan(net)?;
            (0..h).map(|j| lrp(net, &trace, j, &plan)).collect::<Result<Vec<_>>>()?
        }
        Method::ShapleySampling(p) => shapley_sampling_all(net, x, p)?,
    };
    Ok(maps
        .into_iter()
        .enumerate()
        .map(|(target, values)| Attribution {
            values,
            method: method.clone(),
            target,
        })
        .collect())
}
