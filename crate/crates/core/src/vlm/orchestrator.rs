use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::parse::{
    parse_action, parse_analysis, parse_issues, parse_verification, Analysis, Issue,
};
use super::prompt::{build_prompt, PromptContext};
use super::{
    Action, BackendError, ClipRef, Decision, DecisionSource, Intent, OrchestratorConfig,
    Provenance, Stage, Strategy, VlmBackend, VlmError, VlmRequest,
};
use crate::gate::TriggerEvent;
use crate::pose::TrackId;

/// Backend requests issued, by purpose. Retries count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub analysis: usize,
    pub synthesis: usize,
    pub action: usize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        self.analysis + self.synthesis + self.action
    }

    pub fn add(&mut self, o: &CallCounts) {
        self.analysis += o.analysis;
        self.synthesis += o.synthesis;
        self.action += o.action;
    }

    fn bump(&mut self, stage: Stage) {
        match stage {
            Stage::Independent => self.analysis += 1,
            Stage::Contradiction | Stage::Verify | Stage::MajorityVote => self.synthesis += 1,
            Stage::Action => self.action += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentVotes {
    pub interact: usize,
    pub no_intent: usize,
    pub inconclusive: usize,
}

impl IntentVotes {
    pub fn tally(analyses: &[Analysis]) -> Self {
        let mut v = Self::default();
        for a in analyses {
            match a.intent {
                Some(Intent::Interact) => v.interact += 1,
                Some(Intent::NoIntent) => v.no_intent += 1,
                Some(Intent::Inconclusive) => v.inconclusive += 1,
                None => {}
            }
        }
        v
    }

    pub fn total(&self) -> usize {
        self.interact + self.no_intent + self.inconclusive
    }

    pub fn max(&self) -> usize {
        self.interact.max(self.no_intent).max(self.inconclusive)
    }
}

/// Self-consistency uncertainty `1 - max_s n_s / n` over the well-formed
/// analyses; 1.0 when there are none.
pub fn u_sc(votes: &IntentVotes) -> f64 {
    let n = votes.total();
    if n == 0 {
        return 1.0;
    }
    1.0 - votes.max() as f64 / n as f64
}

/// How the bundle ended: a synthesized intent, or a deferral to Probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Synthesis {
    Intent(Intent),
    Deferral { cause: Provenance, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub analyses: Vec<Analysis>,
    pub strategy: Strategy,
    pub synthesized_log: Option<String>,
    pub intent_votes: IntentVotes,
    pub u_sc: f64,
    /// Disputed claims found by the contradiction prompt (self-critique).
    pub contradictions: Vec<Issue>,
    /// Verdicts from the verification prompt (self-critique).
    pub verification: Vec<Issue>,
    pub synthesis: Synthesis,
}

impl AnalysisBundle {
    fn new(analyses: Vec<Analysis>, strategy: Strategy) -> Self {
        let intent_votes = IntentVotes::tally(&analyses);
        Self {
            u_sc: u_sc(&intent_votes),
            analyses,
            strategy,
            synthesized_log: None,
            intent_votes,
            contradictions: Vec::new(),
            verification: Vec::new(),
            synthesis: Synthesis::Deferral {
                cause: Provenance::UncertaintyDeferral,
                reason: String::new(),
            },
        }
    }

    pub fn well_formed(&self) -> usize {
        self.intent_votes.total()
    }

    pub fn intent(&self) -> Option<Intent> {
        match self.synthesis {
            Synthesis::Intent(i) => Some(i),
            Synthesis::Deferral { .. } => None,
        }
    }

    fn defer(&mut self, cause: Provenance, reason: impl Into<String>) {
        self.synthesis = Synthesis::Deferral {
            cause,
            reason: reason.into(),
        };
    }

    fn well_formed_texts(&self) -> Vec<String> {
        self.analyses
            .iter()
            .filter(|a| !a.malformed())
            .map(|a| a.raw.clone())
            .collect()
    }
}

/// Sends one request, retrying transport failures with exponential backoff.
fn request(
    backend: &dyn VlmBackend,
    req: &VlmRequest,
    config: &OrchestratorConfig,
    calls: &mut CallCounts,
) -> Result<String, VlmError> {
    let mut retry = 0;
    loop {
        calls.bump(req.stage);
        match backend.complete(req) {
            Ok(text) => return Ok(text),
            Err(BackendError::Transport(msg)) if retry < config.transport_retries => {
                retry += 1;
                let delay = config
                    .backoff_base_ms
                    .saturating_mul(1 << (retry - 1).min(20));
                log::warn!(
                    "{:?} request failed ({msg}); retry {retry} in {delay} ms",
                    req.stage
                );
                backend.backoff(retry, delay);
            }
            Err(source) => {
                return Err(VlmError::Backend {
                    stage: req.stage,
                    source,
                })
            }
        }
    }
}

fn synthesis_request(
    clip: &ClipRef,
    stage: Stage,
    prompt: String,
    config: &OrchestratorConfig,
) -> VlmRequest {
    VlmRequest {
        clip: clip.clone(),
        stage,
        prompt,
        temperature: config.synthesis_temperature,
        sample_index: 0,
        attempt: 0,
    }
}

/// Requests `config.k` independent analyses in sample order. A malformed
/// reply is re-requested `malformed_retries` times, then kept as malformed.
pub fn sample_analyses(
    clip: &ClipRef,
    backend: &dyn VlmBackend,
    config: &OrchestratorConfig,
    calls: &mut CallCounts,
) -> Result<Vec<Analysis>, VlmError> {
    config.validate()?;
    let prompt = build_prompt(clip.kind, Stage::Independent, &PromptContext::default())?;
    let duration = clip.span.duration();
    let mut out = Vec::with_capacity(config.k);
    for sample_index in 0..config.k {
        let mut attempt = 0;
        loop {
            let req = VlmRequest {
                clip: clip.clone(),
                stage: Stage::Independent,
                prompt: prompt.clone(),
                temperature: config.temperature,
                sample_index,
                attempt,
            };
            let mut a = parse_analysis(&request(backend, &req, config, calls)?, duration);
            a.attempts = attempt + 1;
            if !a.malformed() || attempt >= config.malformed_retries {
                if a.malformed() {
                    log::warn!(
                        "analysis {sample_index} malformed after {} attempts",
                        a.attempts
                    );
                }
                out.push(a);
                break;
            }
            attempt += 1;
        }
    }
    if out.iter().all(Analysis::malformed) {
        return Err(VlmError::AllMalformed(out.len()));
    }
    Ok(out)
}

fn check_well_formed(bundle: &mut AnalysisBundle, config: &OrchestratorConfig) -> bool {
    if bundle.well_formed() < config.min_well_formed {
        let reason = format!(
            "only {} of {} analyses well-formed",
            bundle.well_formed(),
            bundle.analyses.len()
        );
        bundle.defer(Provenance::UncertaintyDeferral, reason);
        return false;
    }
    true
}

/// Votes over the analyses; defers when `u_sc > eta`, otherwise asks for a
/// majority-vote synthesis and takes its overall intention.
pub fn self_consistency(
    clip: &ClipRef,
    analyses: Vec<Analysis>,
    backend: &dyn VlmBackend,
    config: &OrchestratorConfig,
    calls: &mut CallCounts,
) -> Result<AnalysisBundle, VlmError> {
    let mut bundle = AnalysisBundle::new(analyses, Strategy::SelfConsistency);
    if !check_well_formed(&mut bundle, config) {
        return Ok(bundle);
    }
    if bundle.u_sc > config.eta {
        let reason = format!("u_sc {:.3} exceeds eta {:.3}", bundle.u_sc, config.eta);
        bundle.defer(Provenance::UncertaintyDeferral, reason);
        return Ok(bundle);
    }
    let texts = bundle.well_formed_texts();
    let ctx = PromptContext {
        clip_duration_s: clip.span.duration(),
        analyses: Some(&texts),
        ..Default::default()
    };
    let prompt = build_prompt(clip.kind, Stage::MajorityVote, &ctx)?;
    let reply = request(
        backend,
        &synthesis_request(clip, Stage::MajorityVote, prompt, config),
        config,
        calls,
    )?;
    let v = parse_verification(&reply);
    bundle.synthesized_log = Some(v.log);
    match v.intent {
        Some(Intent::Inconclusive) => bundle.defer(
            Provenance::UncertaintyDeferral,
            "majority synthesis inconclusive",
        ),
        Some(i) => bundle.synthesis = Synthesis::Intent(i),
        None => bundle.defer(
            Provenance::UncertaintyDeferral,
            "majority synthesis has no overall intention",
        ),
    }
    Ok(bundle)
}

/// Contradiction extraction, then verification against the clip. Defers
/// when the verified intention is inconclusive or missing, or when an
/// unresolved issue touches intent-bearing claims.
pub fn self_critique(
    clip: &ClipRef,
    analyses: Vec<Analysis>,
    backend: &dyn VlmBackend,
    config: &OrchestratorConfig,
    calls: &mut CallCounts,
) -> Result<AnalysisBundle, VlmError> {
    let mut bundle = AnalysisBundle::new(analyses, Strategy::SelfCritique);
    if !check_well_formed(&mut bundle, config) {
        return Ok(bundle);
    }
    let texts = bundle.well_formed_texts();
    let mut ctx = PromptContext {
        clip_duration_s: clip.span.duration(),
        analyses: Some(&texts),
        ..Default::default()
    };
    let prompt = build_prompt(clip.kind, Stage::Contradiction, &ctx)?;
    let contradiction_text = request(
        backend,
        &synthesis_request(clip, Stage::Contradiction, prompt, config),
        config,
        calls,
    )?;
    bundle.contradictions = parse_issues(&contradiction_text).unwrap_or_default();

    ctx.contradiction_text = Some(&contradiction_text);
    let prompt = build_prompt(clip.kind, Stage::Verify, &ctx)?;
    let reply = request(
        backend,
        &synthesis_request(clip, Stage::Verify, prompt, config),
        config,
        calls,
    )?;
    let v = parse_verification(&reply);
    bundle.synthesized_log = Some(v.log);
    bundle.verification = v.issues;

    let open_key_issue = bundle
        .verification
        .iter()
        .find(|i| i.unresolved() && i.touches_intent())
        .map(|i| i.issue.clone());
    match (v.intent, open_key_issue) {
        (None, _) => bundle.defer(
            Provenance::CritiqueInconclusive,
            "verification has no overall intention",
        ),
        (Some(Intent::Inconclusive), _) => bundle.defer(
            Provenance::CritiqueInconclusive,
            "verified intention inconclusive",
        ),
        (Some(_), Some(issue)) => bundle.defer(
            Provenance::CritiqueInconclusive,
            format!("unresolved key claim: {issue}"),
        ),
        (Some(i), None) => bundle.synthesis = Synthesis::Intent(i),
    }
    Ok(bundle)
}

fn source_of(clip: &ClipRef, event_time: f64) -> DecisionSource {
    DecisionSource {
        track_id: clip.track_id.clone(),
        kind: Some(clip.kind),
        time_s: event_time,
    }
}

/// Turns a bundle into a decision. Deferred or inconclusive bundles become
/// Probe without a backend call; otherwise the action prompt decides.
pub fn select_action(
    clip: &ClipRef,
    event_time: f64,
    bundle: &AnalysisBundle,
    backend: &dyn VlmBackend,
    config: &OrchestratorConfig,
    calls: &mut CallCounts,
) -> Result<Decision, VlmError> {
    let source = source_of(clip, event_time);
    let intent = match &bundle.synthesis {
        Synthesis::Deferral { cause, reason } => {
            return Ok(Decision {
                action: Action::Probe,
                justification: reason.clone(),
                provenance: *cause,
                source,
                diagnostic: None,
            })
        }
        Synthesis::Intent(i) => *i,
    };
    if intent == Intent::Inconclusive {
        return Ok(Decision {
            action: Action::Probe,
            justification: "intent inconclusive".into(),
            provenance: Provenance::UncertaintyDeferral,
            source,
            diagnostic: None,
        });
    }
    let ctx = PromptContext {
        clip_duration_s: clip.span.duration(),
        log_text: bundle.synthesized_log.as_deref(),
        ..Default::default()
    };
    let prompt = build_prompt(clip.kind, Stage::Action, &ctx)?;
    let reply = request(
        backend,
        &synthesis_request(clip, Stage::Action, prompt, config),
        config,
        calls,
    )?;
    let (action, diagnostic) = match parse_action(&reply) {
        Some(a) => (a, None),
        None => (
            Action::Probe,
            Some("unparseable action response".to_string()),
        ),
    };
    Ok(Decision {
        action,
        justification: reply.trim().to_string(),
        provenance: Provenance::ActionPrompt,
        source,
        diagnostic,
    })
}

/// The decision for a window the gate did not escalate.
pub fn gate_default(track_id: &TrackId, time_s: f64) -> Decision {
    Decision {
        action: Action::Probe,
        justification: "no preamble detected".into(),
        provenance: Provenance::GateDefault,
        source: DecisionSource {
            track_id: track_id.clone(),
            kind: None,
            time_s,
        },
        diagnostic: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTwoOutcome {
    pub decision: Decision,
    pub bundle: Option<AnalysisBundle>,
}

/// Full Stage II for one event. Analyses that are all malformed defer to
/// Probe; backend failures after retries are returned as errors. Requests
/// are added to `calls` either way.
pub fn run_event(
    clip: &ClipRef,
    event: &TriggerEvent,
    backend: &dyn VlmBackend,
    config: &OrchestratorConfig,
    calls: &mut CallCounts,
) -> Result<StageTwoOutcome, VlmError> {
    let analyses = match sample_analyses(clip, backend, config, calls) {
        Ok(a) => a,
        Err(VlmError::AllMalformed(n)) => {
            return Ok(StageTwoOutcome {
                decision: Decision {
                    action: Action::Probe,
                    justification: format!("all {n} analyses malformed"),
                    provenance: Provenance::UncertaintyDeferral,
                    source: source_of(clip, event.trigger_time),
                    diagnostic: Some("all analyses malformed".into()),
                },
                bundle: None,
            })
        }
        Err(e) => return Err(e),
    };
    let bundle = match config.strategy {
        Strategy::SelfConsistency => self_consistency(clip, analyses, backend, config, calls)?,
        Strategy::SelfCritique => self_critique(clip, analyses, backend, config, calls)?,
    };
    let decision = select_action(clip, event.trigger_time, &bundle, backend, config, calls)?;
    Ok(StageTwoOutcome {
        decision,
        bundle: Some(bundle),
    })
}
