//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Inputs, NodeId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many randomly chosen entries per parameter tensor.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    pub max_abs_gradient: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("parameter\tentries\tmax_rel_error\tmax_abs_grad\tstatus\n");
        for p in &self.params {
            out.push_str(&format!(
                "{}\t{}\t{:.3e}\t{:.3e}\t{}\n",
                p.name,
                p.entries_checked,
                p.max_rel_error,
                p.max_abs_gradient,
                if p.passed { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "overall\t-\t{:.3e}\t-\t{}\n",
            self.max_rel_error(),
            if self.passed() { "pass" } else { "FAIL" }
        ));
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn scalar_loss<T: Scalar>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &Inputs<T>,
    loss: NodeId,
) -> Result<f64> {
    let ev = graph.evaluate(params, inputs)?;
    let v = ev.value(loss);
    v.item().map(Scalar::as_f64).ok_or(Error::NonScalarLoss {
        node: loss.0,
        shape: v.shape().to_vec(),
    })
}

/// Compares analytic parameter gradients with central finite differences,
/// entry by entry.
pub fn grad_check<T: Scalar>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &Inputs<T>,
    loss: NodeId,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let ev = graph.evaluate(params, inputs)?;
    let grads = graph.backward(&ev, loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let h = T::lit(options.step);
    let two_h = 2.0 * options.step;

    let mut report = GradCheckReport {
        tolerance: options.tolerance,
        params: Vec::new(),
    };
    let mut work = params.clone();
    for (name, grad) in &grads {
        let n = grad.len();
        let entries: Vec<usize> = match options.max_entries {
            Some(k) if k < n => {
                let mut idx = sample(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let mut max_err = 0.0f64;
        for &i in &entries {
            let original = work[name].data()[i];
            work.get_mut(name).expect("param").data_mut()[i] = original + h;
            let plus = scalar_loss(graph, &work, inputs, loss)?;
            work.get_mut(name).expect("param").data_mut()[i] = original - h;
            let minus = scalar_loss(graph, &work, inputs, loss)?;
            work.get_mut(name).expect("param").data_mut()[i] = original;
            let numeric = (plus - minus) / two_h;
            max_err = max_err.max(relative_error(grad.data()[i].as_f64(), numeric));
        }
        let max_abs = grad
            .data()
            .iter()
            .map(|g| g.as_f64().abs())
            .fold(0.0, f64::max);
        report.params.push(ParamCheck {
            name: name.clone(),
            entries_checked: entries.len(),
            max_rel_error: max_err,
            max_abs_gradient: max_abs,
            passed: max_err <= options.tolerance,
        });
    }
    Ok(report)
}

/// Directional check: `⟨∇L, d⟩` against `(L(θ + h d) - L(θ - h d)) / 2h` for a
/// random unit-scale direction `d` over all parameters. Returns the relative error.
pub fn jvp_check<T: Scalar>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &Inputs<T>,
    loss: NodeId,
    step: f64,
    seed: u64,
) -> Result<f64> {
    let ev = graph.evaluate(params, inputs)?;
    let grads = graph.backward(&ev, loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction: ParamStore<T> = grads
        .iter()
        .map(|(name, g)| {
            let d: Vec<T> = (0..g.len())
                .map(|_| T::lit(rng.random_range(-1.0..1.0)))
                .collect();
            (
                name.clone(),
                Tensor::new(g.shape().to_vec(), d).expect("shape"),
            )
        })
        .collect();
    let analytic: f64 = grads
        .iter()
        .map(|(name, g)| {
            g.data()
                .iter()
                .zip(direction[name].data())
                .map(|(a, b)| a.as_f64() * b.as_f64())
                .sum::<f64>()
        })
        .sum();
    let shifted = |sign: f64| -> ParamStore<T> {
        let mut p = params.clone();
        for (name, d) in &direction {
            let t = p.get_mut(name).expect("param");
            for (v, &dv) in t.data_mut().iter_mut().zip(d.data()) {
                *v = *v + T::lit(sign * step) * dv;
            }
        }
        p
    };
    let plus = scalar_loss(graph, &shifted(1.0), inputs, loss)?;
    let minus = scalar_loss(graph, &shifted(-1.0), inputs, loss)?;
    Ok(relative_error(analytic, (plus - minus) / (2.0 * step)))
}
