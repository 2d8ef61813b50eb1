//! Fixed-answer detector and annotator, for tests and demos.

use std::collections::HashMap;
use std::sync::Mutex;

use super::{Annotator, Detector, Selection};
use crate::error::Result;
use crate::init::AnnotatedFrame;
use crate::mask::{BoundingBox, Frame};

#[derive(Debug, Default)]
pub struct ScriptedDetector {
    answers: HashMap<String, Vec<BoundingBox>>,
}

impl ScriptedDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, prompt: impl Into<String>, boxes: Vec<BoundingBox>) -> Self {
        self.answers.insert(prompt.into(), boxes);
        self
    }
}

impl Detector for ScriptedDetector {
    fn name(&self) -> String {
        "scripted-detector".into()
    }

    fn detect(&self, frame: &Frame, prompt: &str) -> Result<Vec<BoundingBox>> {
        let mut boxes: Vec<BoundingBox> = self
            .answers
            .get(prompt)
            .into_iter()
            .flatten()
            .filter_map(|b| {
                BoundingBox::clamped(b.x as f64, b.y as f64, b.w as f64, b.h as f64, b.score, frame.width(), frame.height())
            })
            .collect();
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(boxes)
    }
}

/// Returns the same selections every call and remembers what it was shown.
#[derive(Debug, Default)]
pub struct ScriptedAnnotator {
    selections: Vec<Selection>,
    seen: Mutex<Vec<(usize, String)>>,
}

impl ScriptedAnnotator {
    pub fn new(selections: Vec<Selection>) -> Self {
        Self { selections, seen: Mutex::new(Vec::new()) }
    }

    /// `(region count, task prompt)` of every call so far.
    pub fn calls(&self) -> Vec<(usize, String)> {
        self.seen.lock().expect("annotator log poisoned").clone()
    }
}

impl Annotator for ScriptedAnnotator {
    fn name(&self) -> String {
        "scripted-annotator".into()
    }

    fn select_regions(&self, annotated: &AnnotatedFrame, task_prompt: &str) -> Result<Vec<Selection>> {
        self.seen
            .lock()
            .expect("annotator log poisoned")
            .push((annotated.anchors.len(), task_prompt.to_string()));
        Ok(self.selections.clone())
    }
}
