use rayon::prelude::*;

use super::{evaluate_instance, RobustResult, Worst};
use crate::error::{Error, Result};
use crate::fsc::Fsc;
use crate::model::{Assignment, ModelFamily};

/// Exact robust value by evaluating every instance.
pub fn robust_evaluate_enum(family: &ModelFamily, fsc: &Fsc, cap: u128) -> Result<RobustResult> {
    let count = family.instance_count();
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let indices: Vec<Assignment> = family.enumerate_indices().collect();
    worst_of(family, fsc, &indices)
}

/// Exact robust value over a listed set of instances.
pub fn robust_evaluate_indices(
    family: &ModelFamily,
    fsc: &Fsc,
    indices: &[Assignment],
) -> Result<RobustResult> {
    if indices.is_empty() {
        return Err(Error::input("no instances to evaluate"));
    }
    let mut sorted = indices.to_vec();
    sorted.sort();
    sorted.dedup();
    worst_of(family, fsc, &sorted)
}

fn worst_of(family: &ModelFamily, fsc: &Fsc, indices: &[Assignment]) -> Result<RobustResult> {
    let sign = family.objective().sign();
    // Order-preserving collect keeps the reduction below deterministic.
    let values: Vec<f64> = indices
        .par_iter()
        .map(|i| evaluate_instance(family, i, fsc))
        .collect::<Result<_>>()?;
    let mut worst = Worst::default();
    for (i, &v) in indices.iter().zip(&values) {
        worst.offer(sign * v, i, v);
    }
    let (_, worst_index, robust_value) = worst.best.expect("at least one instance");
    Ok(RobustResult {
        worst_index,
        robust_value,
        bound_trace: Vec::new(),
        boxes_explored: 0,
    })
}
