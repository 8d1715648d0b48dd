use super::{Graph, NodeId, ParamSet};
use crate::error::Result;

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose finite-difference step crossed a ReLU kink.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&GradCheckEntry> {
        self.entries
            .iter()
            .filter(|e| e.max_rel_err.is_nan() || e.max_rel_err >= self.tolerance)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Compares backward-pass gradients with central differences (step 1e-5).
///
/// `build` places the forward computation on a fresh graph given the bound
/// parameter nodes and returns the scalar loss. Relative error is
/// `|a − n| / max(|a|, |n|, 1e-3)`. At most `max_per_tensor` coordinates
/// per tensor are probed, spread evenly; `None` probes all of them.
pub fn grad_check<F>(
    params: &mut ParamSet,
    mut build: F,
    tolerance: f64,
    max_per_tensor: Option<usize>,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids = params.bind(&mut g);
    let loss = build(&mut g, &ids)?;
    g.backward(loss)?;
    let signature = g.relu_signature();
    let analytic: Vec<Option<Vec<f64>>> = ids
        .iter()
        .zip(params.iter())
        .map(|(&id, p)| {
            p.trainable.then(|| {
                g.grad(id)
                    .map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec)
            })
        })
        .collect();

    let mut eval = |params: &ParamSet| -> Result<(f64, bool)> {
        let mut g = Graph::new();
        let ids = params.bind(&mut g);
        let loss = build(&mut g, &ids)?;
        Ok((g.value(loss).data()[0], g.relu_signature() == signature))
    };

    let mut report = GradCheckReport {
        entries: Vec::new(),
        tolerance,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let n = grad.len();
        let coords: Vec<usize> = match max_per_tensor {
            Some(k) if k < n => (0..k).map(|j| j * n / k).collect(),
            _ => (0..n).collect(),
        };
        let mut entry = GradCheckEntry {
            name: params.get(pi).name.clone(),
            max_rel_err: 0.0,
            checked: 0,
            skipped: 0,
        };
        for c in coords {
            let orig = params.get(pi).value.data()[c];
            params.get_mut(pi).value.data_mut()[c] = orig + H;
            let (fp, okp) = eval(params)?;
            params.get_mut(pi).value.data_mut()[c] = orig - H;
            let (fm, okm) = eval(params)?;
            params.get_mut(pi).value.data_mut()[c] = orig;
            if !(okp && okm) {
                entry.skipped += 1;
                continue;
            }
            let num = (fp - fm) / (2.0 * H);
            let a = grad[c];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(FLOOR);
            entry.max_rel_err = if rel.is_nan() {
                f64::INFINITY
            } else {
                entry.max_rel_err.max(rel)
            };
            entry.checked += 1;
        }
        report.entries.push(entry);
    }
    Ok(report)
}
