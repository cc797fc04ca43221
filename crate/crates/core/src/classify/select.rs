use std::collections::BTreeMap;
use std::path::Path;

use super::{Candidate, Classifier, ExternalScores, Label, LabeledSample, Origin};
use crate::error::{Error, Result};
use crate::hbb::{iou, Hbb};
use crate::textfmt::{read_text, records, write_text};

/// Boxes from the same image overlapping above this IoU count as one sample.
const DUPLICATE_IOU: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub score: f64,
}

impl ScoredCandidate {
    /// The candidate box carrying its score and the vehicle label.
    pub fn scored_box(&self) -> Hbb {
        self.candidate.hbb.clone().with_score(self.score).with_label("vehicle")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<ScoredCandidate>,
    pub rejected: Vec<ScoredCandidate>,
    pub tau: f64,
}

impl SelectionResult {
    pub fn empty(tau: f64) -> Self {
        Self {
            selected: Vec::new(),
            rejected: Vec::new(),
            tau,
        }
    }

    /// Selected boxes grouped by source image.
    pub fn selected_boxes(&self) -> BTreeMap<String, Vec<Hbb>> {
        let mut out: BTreeMap<String, Vec<Hbb>> = BTreeMap::new();
        for s in &self.selected {
            out.entry(s.candidate.patch.source_image.clone())
                .or_default()
                .push(s.scored_box());
        }
        out
    }
}

/// Splits candidates into `score >= tau` and the rest, preserving input order.
pub fn select_high_quality(candidates: &[Candidate], clf: &dyn Classifier, tau: f64) -> Result<SelectionResult> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("classify.tau must lie in [0, 1], got {tau}")));
    }
    let mut result = SelectionResult::empty(tau);
    for c in candidates {
        let score = clf.score(c);
        let scored = ScoredCandidate {
            candidate: c.clone(),
            score,
        };
        if score >= tau {
            result.selected.push(scored);
        } else {
            result.rejected.push(scored);
        }
    }
    Ok(result)
}

/// Adds the selected candidates as vehicle samples. A selection that
/// duplicates an existing sample is dropped unless it outscores it; samples
/// without a score (the base set) are never displaced.
pub fn update_training_set(base: Vec<LabeledSample>, selection: &SelectionResult) -> Vec<LabeledSample> {
    let mut ranked: Vec<&ScoredCandidate> = selection.selected.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.candidate.id.cmp(&b.candidate.id))
    });
    let base_len = base.len();
    let mut out = base;
    for s in ranked {
        let patch = &s.candidate.patch;
        let dup = out.iter().position(|e| {
            e.patch.source_image == patch.source_image && iou(&e.patch.source_box, &patch.source_box) > DUPLICATE_IOU
        });
        match dup {
            None => out.push(LabeledSample {
                patch: patch.clone(),
                label: Label::Vehicle,
                origin: Origin::Selected,
                score: Some(s.score),
            }),
            Some(i) if i >= base_len && out[i].score.is_some_and(|old| old < s.score) => {
                out[i].patch = patch.clone();
                out[i].score = Some(s.score);
            }
            Some(_) => {}
        }
    }
    out
}

/// Reads `<box-id> <probability>` lines.
pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores> {
    let text = read_text(path.as_ref())?;
    let mut scores = BTreeMap::new();
    for mut rec in records(&text) {
        let line = rec.line;
        let id = rec.str("box-id")?.to_string();
        let p = rec.f64("probability")?;
        rec.end()?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parse(line, format!("probability {p} outside [0, 1]")));
        }
        if scores.insert(id.clone(), p).is_some() {
            return Err(Error::parse(line, format!("duplicate box id {id:?}")));
        }
    }
    Ok(ExternalScores { scores })
}

pub fn save_external_scores(path: impl AsRef<Path>, scores: &ExternalScores) -> Result<()> {
    let text: String = scores.scores.iter().map(|(id, p)| format!("{id} {p}\n")).collect();
    write_text(path.as_ref(), &text)
}

/// Reads `<image-id> <label> <x_c> <y_c> <w> <h>` lines, where the label is
/// `vehicle`/`1` or `non-vehicle`/`0`.
pub fn load_manual_labels(path: impl AsRef<Path>) -> Result<Vec<(String, Label, Hbb)>> {
    let text = read_text(path.as_ref())?;
    records(&text)
        .map(|mut rec| {
            let line = rec.line;
            let image = rec.str("image-id")?.to_string();
            let label = match rec.str("label")? {
                "vehicle" | "1" => Label::Vehicle,
                "non-vehicle" | "0" => Label::NonVehicle,
                other => return Err(Error::parse(line, format!("unknown label {other:?}"))),
            };
            let (x, y, w, h) = (rec.f64("x_c")?, rec.f64("y_c")?, rec.f64("w")?, rec.f64("h")?);
            rec.end()?;
            if w <= 0.0 || h <= 0.0 {
                return Err(Error::parse(line, "box dimensions must be positive"));
            }
            Ok((image, label, Hbb::new(x, y, w, h)))
        })
        .collect()
}
