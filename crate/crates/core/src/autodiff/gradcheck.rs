//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |numeric|)` over every parameter element.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter tensor and flat element index of the worst disagreement.
    pub worst: Option<(usize, usize)>,
}

/// Compares the analytic gradient of the scalar built by `f` against central
/// differences with step `h`, at `point`.
///
/// `f` receives a fresh graph and one parameter node per tensor in `point`.
pub fn grad_check<T, F>(f: F, point: &[Tensor<T>], h: T) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    if !(h > T::zero()) {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let eval = |params: &[Tensor<T>]| -> Result<(Graph<T>, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|p| g.parameter(p.clone())).collect();
        let out = f(&mut g, &ids)?;
        if g.value(out).len() != 1 {
            return Err(Error::Contract(format!(
                "gradient check needs a scalar function, got shape {:?}",
                g.value(out).shape()
            )));
        }
        Ok((g, ids, out))
    };

    let (graph, ids, out) = eval(point)?;
    let grads = graph.backward(out)?;
    let two_h = h + h;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    let mut probe: Vec<Tensor<T>> = point.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).map(|t| t.data().to_vec());
        for ei in 0..point[pi].len() {
            let orig = point[pi].data()[ei];
            probe[pi].data_mut()[ei] = orig + h;
            let up = scalar_value(&eval(&probe)?);
            probe[pi].data_mut()[ei] = orig - h;
            let down = scalar_value(&eval(&probe)?);
            probe[pi].data_mut()[ei] = orig;

            let numeric = ((up - down) / two_h).as_f64();
            let exact = analytic.as_ref().map_or(0.0, |a| a[ei].as_f64());
            let err = (exact - numeric).abs() / numeric.abs().max(1.0);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((pi, ei));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn scalar_value<T: Scalar>((g, _, out): &(Graph<T>, Vec<NodeId>, NodeId)) -> T {
    g.value(*out).data()[0]
}
