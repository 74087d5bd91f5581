//! Stage II: K independent vision-language analyses of a triggered clip,
//! aggregated by self-consistency or self-critique, then an action prompt.
//!
//! The model itself sits behind [`VlmBackend`]. [`MockBackend`] replays
//! scripted responses so every branch runs offline.

mod mock;
mod orchestrator;
mod parse;
mod prompt;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::{ClipSpan, TriggerEvent, TriggerKind};
use crate::pose::TrackId;

pub use mock::{MockBackend, MockKey, DEFAULT_SCENARIO};
pub use orchestrator::{
    gate_default, run_event, sample_analyses, select_action, self_consistency, self_critique, u_sc,
    AnalysisBundle, CallCounts, IntentVotes, StageTwoOutcome, Synthesis,
};
pub use parse::{
    parse_action, parse_analysis, parse_issues, parse_verification, Analysis, Candidate, Evidence,
    Issue, Verdict, Verification, EVIDENCE_GRACE_S, HEDGE_PHRASES, INTERACT_PHRASES,
    NO_INTENT_PHRASES,
};
pub use prompt::{build_prompt, fill_template, format_analyses, template, PromptContext};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Action {
    Approach,
    Leave,
    #[default]
    Probe,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Approach, Action::Leave, Action::Probe];

    pub fn name(self) -> &'static str {
        match self {
            Action::Approach => "Approach",
            Action::Leave => "Leave",
            Action::Probe => "Probe",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Intent {
    Interact,
    NoIntent,
    Inconclusive,
}

impl Intent {
    pub const ALL: [Intent; 3] = [Intent::Interact, Intent::NoIntent, Intent::Inconclusive];
}

/// Which rule produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// No trigger; the gate keeps probing.
    GateDefault,
    /// Too few well-formed analyses, votes too split, or an inconclusive
    /// majority synthesis.
    UncertaintyDeferral,
    /// Self-critique could not settle the person's intent.
    CritiqueInconclusive,
    ActionPrompt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    SelfConsistency,
    SelfCritique,
}

/// Prompt stages. The independent-analysis template depends on the trigger
/// kind (blue box for gaze, orange box for proxemic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Independent,
    Contradiction,
    Verify,
    MajorityVote,
    Action,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Independent,
        Stage::Contradiction,
        Stage::Verify,
        Stage::MajorityVote,
        Stage::Action,
    ];

    /// Short name used in mock script file names.
    pub fn slug(self) -> &'static str {
        match self {
            Stage::Independent => "analysis",
            Stage::Contradiction => "contradiction",
            Stage::Verify => "verify",
            Stage::MajorityVote => "majority",
            Stage::Action => "action",
        }
    }

    pub fn from_slug(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.slug() == s)
    }
}

/// The clip a request refers to. Media and overlay references are opaque to
/// the core; adapters resolve them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub episode_id: String,
    pub track_id: TrackId,
    pub kind: TriggerKind,
    pub span: ClipSpan,
    pub overlay_ref: Option<String>,
    pub media_ref: Option<String>,
    /// Lets scripted backends pick responses per scenario.
    pub scenario_id: Option<String>,
}

impl ClipRef {
    pub fn for_event(episode_id: &str, event: &TriggerEvent) -> Self {
        Self {
            episode_id: episode_id.into(),
            track_id: event.track_id.clone(),
            kind: event.kind,
            span: event.clip,
            overlay_ref: None,
            media_ref: None,
            scenario_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmRequest {
    pub clip: ClipRef,
    pub stage: Stage,
    pub prompt: String,
    pub temperature: f64,
    pub sample_index: usize,
    /// 0 for the first request, 1 for the re-request after a malformed reply.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// Worth retrying: connection reset, timeout, 5xx.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend error: {0}")]
    Fatal(String),
}

pub trait VlmBackend: Sync {
    fn complete(&self, request: &VlmRequest) -> Result<String, BackendError>;

    /// Called before transport retry `retry` (1-based) with the suggested
    /// delay. Real adapters sleep; the default does nothing.
    fn backoff(&self, _retry: u32, _delay_ms: u64) {}
}

impl<B: VlmBackend + ?Sized> VlmBackend for &B {
    fn complete(&self, request: &VlmRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn backoff(&self, retry: u32, delay_ms: u64) {
        (**self).backoff(retry, delay_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VlmError {
    #[error("invalid orchestrator config: {0}")]
    InvalidConfig(&'static str),
    #[error("missing context for {0:?} prompt: {1}")]
    MissingContext(Stage, &'static str),
    #[error("backend unavailable during {stage:?}: {source}")]
    Backend { stage: Stage, source: BackendError },
    #[error("all {0} analyses were malformed")]
    AllMalformed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub temperature: f64,
    /// Temperature for synthesis and action prompts.
    pub synthesis_temperature: f64,
    /// Defer when `u_sc > eta`.
    pub eta: f64,
    /// Fewer well-formed analyses than this defers to Probe.
    pub min_well_formed: usize,
    pub malformed_retries: u32,
    pub transport_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::SelfConsistency,
            k: 5,
            temperature: 0.7,
            synthesis_temperature: 0.0,
            eta: 0.25,
            min_well_formed: 3,
            malformed_retries: 1,
            transport_retries: 2,
            backoff_base_ms: 500,
        }
    }
}

impl OrchestratorConfig {
    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.k == 0 {
            out.push("k must be >= 1");
        }
        if !(self.temperature >= 0.0) || !(self.synthesis_temperature >= 0.0) {
            out.push("temperatures must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            out.push("eta must be in [0, 1]");
        }
        if self.min_well_formed > self.k {
            out.push("min_well_formed must be <= k");
        }
        out
    }

    pub fn validate(&self) -> Result<(), VlmError> {
        match self.problems().first() {
            Some(p) => Err(VlmError::InvalidConfig(p)),
            None => Ok(()),
        }
    }
}

/// Where a decision came from in the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSource {
    pub track_id: TrackId,
    pub kind: Option<TriggerKind>,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub justification: String,
    pub provenance: Provenance,
    pub source: DecisionSource,
    pub diagnostic: Option<String>,
}
