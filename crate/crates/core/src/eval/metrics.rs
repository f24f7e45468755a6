use std::collections::HashMap;

use crate::error::{Result, StanceError};

/// Macro-averaged F1 in percent over every label of `labels`.
///
/// Labels that never occur in either sequence still count, with F1 = 0.
/// Predictions outside `labels` only hurt the recall of the gold label.
pub fn macro_f1<P, G, L>(predictions: &[P], golds: &[G], labels: &[L]) -> Result<f64>
where
    P: AsRef<str>,
    G: AsRef<str>,
    L: AsRef<str>,
{
    if predictions.len() != golds.len() {
        return Err(StanceError::invalid(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(StanceError::invalid("macro-F1 of an empty sequence"));
    }
    if labels.is_empty() {
        return Err(StanceError::invalid("macro-F1 needs a non-empty label inventory"));
    }
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_ref(), i)).collect();
    let mut tp = vec![0usize; labels.len()];
    let mut fp = vec![0usize; labels.len()];
    let mut fn_ = vec![0usize; labels.len()];
    for (p, g) in predictions.iter().zip(golds) {
        let (p, g) = (index.get(p.as_ref()).copied(), index.get(g.as_ref()).copied());
        match (p, g) {
            (Some(p), Some(g)) if p == g => tp[p] += 1,
            _ => {
                if let Some(p) = p {
                    fp[p] += 1;
                }
                if let Some(g) = g {
                    fn_[g] += 1;
                }
            }
        }
    }
    let total: f64 = (0..labels.len())
        .map(|i| {
            let denom = 2 * tp[i] + fp[i] + fn_[i];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[i] as f64 / denom as f64
            }
        })
        .sum();
    Ok(100.0 * total / labels.len() as f64)
}
