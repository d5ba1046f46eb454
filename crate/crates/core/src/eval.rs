// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact-match accuracy of greedy next-token prediction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{forward, greedy_next, Intervention};
use crate::model::Model;
use crate::tasks::TaskSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Per-task exact-match accuracy; the argmax at `t_last` must equal the answer.
pub fn eval_ema(model: &Model, tasks: &TaskSet) -> Result<BTreeMap<String, TaskAccuracy>> {
    if tasks.is_empty() {
        return Err(Error::Empty("task set"));
    }
    let hits = tasks
        .records
        .par_iter()
        .map(|r| {
            let trace = forward(model, &r.full_tokens(), &Intervention::none())?;
            Ok(greedy_next(&trace) == r.answer_token)
        })
        .collect::<Result<Vec<bool>>>()?;

    let mut out: BTreeMap<String, TaskAccuracy> = BTreeMap::new();
    for (r, hit) in tasks.records.iter().zip(hits) {
        let e = out.entry(r.task_label.clone()).or_insert(TaskAccuracy {
            correct: 0,
            total: 0,
            accuracy: 0.0,
        });
        e.total += 1;
        e.correct += usize::from(hit);
    }
    for e in out.values_mut() {
        e.accuracy = e.correct as f64 / e.total as f64;
    }
    Ok(out)
}
