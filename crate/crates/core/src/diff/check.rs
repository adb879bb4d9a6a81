//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Mat, Var};
use super::param::ParamSet;
use super::rng::RngStream;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor of the relative error: entries whose analytic and
    /// numeric gradients are both below it are compared on an absolute scale
    /// of `floor`.
    pub floor: f64,
    /// Check at most this many entries per tensor (`None` checks all).
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-4,
            max_entries_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub total_entries: usize,
    /// Flat (row-major) indices that were checked.
    pub checked: Vec<usize>,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub worst_entry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub options: GradCheckOptions,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < self.options.tolerance
    }

    /// Names of tensors exceeding the tolerance.
    pub fn failing(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|t| t.max_relative_error >= self.options.tolerance)
            .map(|t| t.name.as_str())
            .collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the graph gradient of `objective` at `params` against central
/// differences. `objective` must be deterministic in the parameter values.
pub fn grad_check<F>(
    params: &ParamSet,
    objective: F,
    options: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let loss = objective(&mut g, &vars)?;
    let grads = g.backward(loss, params.len())?;
    let analytic: Vec<Mat> = grads
        .into_iter()
        .zip(params.iter())
        .map(|(g, t)| g.unwrap_or_else(|| Mat::zeros(t.shape())))
        .collect();

    let value = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let vars = p.bind(&mut g);
        let loss = objective(&mut g, &vars)?;
        g.check()?;
        Ok(g.scalar(loss))
    };
    compare_with_finite_differences(params, &analytic, value, options)
}

/// Checks externally supplied `analytic` gradients against central
/// differences of `value`.
pub fn compare_with_finite_differences<V>(
    params: &ParamSet,
    analytic: &[Mat],
    value: V,
    options: GradCheckOptions,
) -> Result<GradCheckReport>
where
    V: Fn(&ParamSet) -> Result<f64>,
{
    assert_eq!(analytic.len(), params.len());
    let mut rng = RngStream::new(options.seed);
    let mut work = params.clone();
    let mut tensors = Vec::with_capacity(params.len());

    for (ti, grad) in analytic.iter().enumerate() {
        let total = params.tensor(ti).len();
        let checked: Vec<usize> = match options.max_entries_per_tensor {
            Some(n) if n < total => {
                let mut idx = sample(&mut rng, total, n).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..total).collect(),
        };
        let cols = params.tensor(ti).shape().1;

        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut worst = None;
        for &flat in &checked {
            let (r, c) = (flat / cols, flat % cols);
            let original = params.tensor(ti).value()[[r, c]];

            work.tensor_mut(ti).value_mut()[[r, c]] = original + options.step;
            let plus = value(&work)?;
            work.tensor_mut(ti).value_mut()[[r, c]] = original - options.step;
            let minus = value(&work)?;
            work.tensor_mut(ti).value_mut()[[r, c]] = original;

            let numeric = (plus - minus) / (2.0 * options.step);
            let a = grad[[r, c]];
            let rel = relative_error(a, numeric, options.floor);
            max_abs = max_abs.max((a - numeric).abs());
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some(flat);
            }
        }
        tensors.push(TensorCheck {
            name: params.tensor(ti).name().to_string(),
            total_entries: total,
            checked,
            max_relative_error: max_rel,
            max_absolute_error: max_abs,
            worst_entry: worst,
        });
    }

    Ok(GradCheckReport { options, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quadratic_params() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("w", array![[0.3, -1.2], [2.0, 0.7]]);
        ps.push("b", array![[0.1, -0.4]]);
        ps
    }

    fn quadratic(g: &mut Graph, p: &[Var]) -> Result<Var> {
        let x = g.constant(array![[1.0, 2.0], [-0.5, 0.25]]);
        let h = g.affine(x, p[0], p[1]);
        let sq = g.square(h);
        Ok(g.sum(sq))
    }

    #[test]
    fn quadratic_objective_is_exact() {
        let report = grad_check(&quadratic_params(), quadratic, GradCheckOptions::default()).unwrap();
        assert!(report.max_relative_error() < 1e-9, "{report:?}");
    }

    #[test]
    fn injected_gradient_bug_is_flagged() {
        let ps = quadratic_params();
        let mut g = Graph::new();
        let vars = ps.bind(&mut g);
        let loss = quadratic(&mut g, &vars).unwrap();
        let mut analytic: Vec<Mat> = g
            .backward(loss, ps.len())
            .unwrap()
            .into_iter()
            .map(Option::unwrap)
            .collect();
        analytic[1] *= 1.5;
        let value = |p: &ParamSet| {
            let mut g = Graph::new();
            let vars = p.bind(&mut g);
            let l = quadratic(&mut g, &vars)?;
            Ok(g.scalar(l))
        };
        let report =
            compare_with_finite_differences(&ps, &analytic, value, GradCheckOptions::default())
                .unwrap();
        assert!(!report.passed());
        assert_eq!(report.failing(), vec!["b"]);
    }

    #[test]
    fn sampling_reports_checked_entries() {
        let mut ps = ParamSet::new();
        ps.push("big", Mat::from_shape_fn((10, 10), |(i, j)| (i as f64 - j as f64) * 0.1));
        let opts = GradCheckOptions {
            max_entries_per_tensor: Some(7),
            ..Default::default()
        };
        let report = grad_check(
            &ps,
            |g, p| {
                let t = g.tanh(p[0]);
                Ok(g.sum(t))
            },
            opts,
        )
        .unwrap();
        assert_eq!(report.tensors[0].checked.len(), 7);
        assert!(report.passed());
    }
}
