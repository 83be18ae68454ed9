//! Deterministic stand-in for a web-augmented code generator.
//!
//! With probability `copy_bias` the model copies the first usable snippet
//! in retrieval order, renaming its function to the task's entry point.
//! A snippet is usable when it defines a top-level function and carries no
//! metadata block. Otherwise, or when nothing is usable, the model writes
//! the task's canonical solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::{parse_metadata, Regenerator, ServedPage};
use crate::corpus::Task;
use crate::extraction::extract_snippets;
use crate::lang::{choose_entry_function, dedent, rename_identifier};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyModel {
    pub copy_bias: f64,
    pub seed: u64,
}

impl CopyModel {
    pub fn new(copy_bias: f64, seed: u64) -> CopyModel {
        assert!((0.0..=1.0).contains(&copy_bias), "copy_bias must lie in [0, 1]");
        CopyModel { copy_bias, seed }
    }

    fn rng(&self, task: &Task) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(task.task_id.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// The snippet the model would copy, adapted to the entry point.
    pub fn copied_snippet(&self, task: &Task, pages: &[ServedPage]) -> Option<String> {
        let (entry, arity) = task.entry_point()?;
        pages.iter().flat_map(|p| extract_snippets(&p.url, &p.content)).find_map(|s| {
            let code = s.code();
            if parse_metadata(&code).is_some() {
                return None;
            }
            let code = dedent(&code);
            let f = choose_entry_function(&code, &entry, Some(arity))?;
            Some(rename_identifier(&code, &f.name, &entry))
        })
    }
}

impl Regenerator for CopyModel {
    fn regenerate(&self, task: &Task, pages: &[ServedPage]) -> String {
        let copy = self.copy_bias >= 1.0 || self.rng(task).random::<f64>() < self.copy_bias;
        let copied = if copy { self.copied_snippet(task, pages) } else { None };
        copied.unwrap_or_else(|| task.canonical_solution.clone())
    }
}
