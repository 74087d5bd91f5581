use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, Stage, VlmBackend, VlmRequest};
use crate::gate::TriggerKind;

/// Script key. `None` fields match anything; lookups try the most specific
/// key first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MockKey {
    pub scenario: String,
    pub kind: Option<TriggerKind>,
    pub stage: Stage,
    pub sample: Option<usize>,
    pub attempt: u32,
}

/// Deterministic scripted backend.
///
/// The scenario comes from the clip's `scenario_id` (`"default"` when
/// unset). A missing script is a fatal backend error.
#[derive(Debug, Default)]
pub struct MockBackend {
    scripts: BTreeMap<MockKey, String>,
    requests: [AtomicUsize; 5],
    transport_failures: AtomicUsize,
}

pub const DEFAULT_SCENARIO: &str = "default";

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: MockKey, text: impl Into<String>) {
        self.scripts.insert(key, text.into());
    }

    /// Scripts `text` for every sample and kind of `stage` in `scenario`.
    pub fn with(mut self, scenario: &str, stage: Stage, text: impl Into<String>) -> Self {
        self.insert(
            MockKey {
                scenario: scenario.into(),
                kind: None,
                stage,
                sample: None,
                attempt: 0,
            },
            text,
        );
        self
    }

    /// Scripts one independent-analysis sample.
    pub fn with_sample(mut self, scenario: &str, sample: usize, text: impl Into<String>) -> Self {
        self.insert(
            MockKey {
                scenario: scenario.into(),
                kind: None,
                stage: Stage::Independent,
                sample: Some(sample),
                attempt: 0,
            },
            text,
        );
        self
    }

    /// The next `n` requests fail with a transport error.
    pub fn fail_next(self, n: usize) -> Self {
        self.transport_failures.store(n, Ordering::SeqCst);
        self
    }

    pub fn scripts(&self) -> impl Iterator<Item = (&MockKey, &str)> {
        self.scripts.iter().map(|(k, v)| (k, v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.scripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scripts.is_empty()
    }

    /// Requests received for `stage`, including failed ones.
    pub fn requests(&self, stage: Stage) -> usize {
        self.requests[stage as usize].load(Ordering::SeqCst)
    }

    pub fn total_requests(&self) -> usize {
        self.requests.iter().map(|c| c.load(Ordering::SeqCst)).sum()
    }

    pub fn lookup(
        &self,
        scenario: &str,
        kind: TriggerKind,
        stage: Stage,
        sample: usize,
        attempt: u32,
    ) -> Option<&str> {
        let attempts: &[u32] = if attempt == 0 { &[0] } else { &[attempt, 0] };
        for &attempt in attempts {
            for kind in [Some(kind), None] {
                for sample in [Some(sample), None] {
                    let key = MockKey {
                        scenario: scenario.into(),
                        kind,
                        stage,
                        sample,
                        attempt,
                    };
                    if let Some(t) = self.scripts.get(&key) {
                        return Some(t);
                    }
                }
            }
        }
        None
    }
}

impl FromIterator<(MockKey, String)> for MockBackend {
    fn from_iter<I: IntoIterator<Item = (MockKey, String)>>(iter: I) -> Self {
        let mut m = MockBackend::new();
        m.extend(iter);
        m
    }
}

impl Extend<(MockKey, String)> for MockBackend {
    fn extend<I: IntoIterator<Item = (MockKey, String)>>(&mut self, iter: I) {
        self.scripts.extend(iter);
    }
}

impl VlmBackend for MockBackend {
    fn complete(&self, req: &VlmRequest) -> Result<String, BackendError> {
        self.requests[req.stage as usize].fetch_add(1, Ordering::SeqCst);
        let failing = self
            .transport_failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if failing {
            return Err(BackendError::Transport("injected failure".into()));
        }
        let scenario = req.clip.scenario_id.as_deref().unwrap_or(DEFAULT_SCENARIO);
        self.lookup(
            scenario,
            req.clip.kind,
            req.stage,
            req.sample_index,
            req.attempt,
        )
        .map(String::from)
        .ok_or_else(|| {
            BackendError::Fatal(format!(
                "no script for scenario {scenario} stage {} sample {}",
                req.stage.slug(),
                req.sample_index
            ))
        })
    }
}
