use alloc::format;
use alloc::string::String;

use super::{Stage, VlmError};
use crate::gate::TriggerKind;

const INDEPENDENT_GAZE: &str = include_str!("../../templates/independent_gaze.txt");
const INDEPENDENT_PROXEMICS: &str = include_str!("../../templates/independent_proxemics.txt");
const CONTRADICTION: &str = include_str!("../../templates/contradiction.txt");
const VERIFY: &str = include_str!("../../templates/verify.txt");
const MAJORITY_VOTE: &str = include_str!("../../templates/majority_vote.txt");
const ACTION: &str = include_str!("../../templates/action.txt");

/// Raw template for a stage. Placeholders are `{video_duration_sec}`,
/// `{analyses}`, `{contradiction_text}` and `{log_text}`.
pub fn template(kind: TriggerKind, stage: Stage) -> &'static str {
    match stage {
        Stage::Independent => match kind {
            TriggerKind::GazeShift => INDEPENDENT_GAZE,
            TriggerKind::ProxemicEntry => INDEPENDENT_PROXEMICS,
        },
        Stage::Contradiction => CONTRADICTION,
        Stage::Verify => VERIFY,
        Stage::MajorityVote => MAJORITY_VOTE,
        Stage::Action => ACTION,
    }
}

/// Inputs the later stages splice into their templates.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptContext<'a> {
    pub clip_duration_s: f64,
    pub analyses: Option<&'a [String]>,
    pub contradiction_text: Option<&'a str>,
    pub log_text: Option<&'a str>,
}

/// `[Analysis 1/5]:...[Analysis 2/5]:...`, no separators.
pub fn format_analyses(analyses: &[String]) -> String {
    let n = analyses.len();
    let mut out = String::new();
    for (i, a) in analyses.iter().enumerate() {
        out.push_str(&format!("[Analysis {}/{n}]:{a}", i + 1));
    }
    out
}

/// Replaces `{name}` placeholders in one pass, so substituted text is never
/// rescanned. Unknown braces are copied through.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = values.iter().find_map(|(name, value)| {
            let inner = tail.strip_prefix('{')?.strip_prefix(*name)?;
            inner.strip_prefix('}').map(|after| (value, after))
        });
        match hit {
            Some((value, after)) => {
                out.push_str(value);
                rest = after;
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn build_prompt(
    kind: TriggerKind,
    stage: Stage,
    ctx: &PromptContext<'_>,
) -> Result<String, VlmError> {
    let t = template(kind, stage);
    let analyses = || {
        ctx.analyses
            .filter(|a| !a.is_empty())
            .map(format_analyses)
            .ok_or(VlmError::MissingContext(stage, "analyses"))
    };
    Ok(match stage {
        Stage::Independent => String::from(t),
        Stage::Contradiction | Stage::MajorityVote => {
            fill_template(t, &[("analyses", &analyses()?)])
        }
        Stage::Verify => {
            let contradictions = ctx
                .contradiction_text
                .ok_or(VlmError::MissingContext(stage, "contradiction text"))?;
            let duration = format!("{:.1}", ctx.clip_duration_s);
            fill_template(
                t,
                &[
                    ("video_duration_sec", &duration),
                    ("analyses", &analyses()?),
                    ("contradiction_text", contradictions),
                ],
            )
        }
        Stage::Action => {
            let log = ctx
                .log_text
                .filter(|l| !l.trim().is_empty())
                .ok_or(VlmError::MissingContext(stage, "synthesized log"))?;
            fill_template(t, &[("log_text", log)])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn gaze_and_proxemic_boxes() {
        let ctx = PromptContext::default();
        let g = build_prompt(TriggerKind::GazeShift, Stage::Independent, &ctx).unwrap();
        assert!(g.contains("blue bounding box"));
        let p = build_prompt(TriggerKind::ProxemicEntry, Stage::Independent, &ctx).unwrap();
        assert!(p.contains("orange bounding box"));
        assert!(p.contains("You are currently in that person's personal zone."));
    }

    #[test]
    fn action_without_log_is_missing_context() {
        let err = build_prompt(
            TriggerKind::GazeShift,
            Stage::Action,
            &PromptContext::default(),
        )
        .unwrap_err();
        assert!(matches!(err, VlmError::MissingContext(Stage::Action, _)));
        let err = build_prompt(
            TriggerKind::GazeShift,
            Stage::MajorityVote,
            &PromptContext::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            VlmError::MissingContext(Stage::MajorityVote, _)
        ));
    }

    #[test]
    fn analyses_are_spliced_without_separators() {
        let a: Vec<String> = vec!["one".into(), "two".into()];
        assert_eq!(format_analyses(&a), "[Analysis 1/2]:one[Analysis 2/2]:two");
        let ctx = PromptContext {
            analyses: Some(&a),
            ..Default::default()
        };
        let p = build_prompt(TriggerKind::GazeShift, Stage::MajorityVote, &ctx).unwrap();
        assert!(p.ends_with("Here are the 5 analyses:[Analysis 1/2]:one[Analysis 2/2]:two"));
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let out = fill_template("a{x}b{y}", &[("x", "{y}"), ("y", "Y")]);
        assert_eq!(out, "a{y}bY");
        assert_eq!(fill_template("{nope}", &[("x", "1")]), "{nope}");
    }

    #[test]
    fn verify_prompt_fills_duration_and_contradictions() {
        let a: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let ctx = PromptContext {
            clip_duration_s: 6.0,
            analyses: Some(&a),
            contradiction_text: Some("contradictions: []"),
            log_text: None,
        };
        let p = build_prompt(TriggerKind::GazeShift, Stage::Verify, &ctx).unwrap();
        assert!(p.contains("Video duration: 6.0 seconds. The video is 15 fps.Here are the 5 analyses:[Analysis 1/5]:0"));
        assert!(p.contains("[Analysis 5/5]:4Here are the contradictions extracted from the analyses:contradictions: []ROLE: Verifier."));
        assert!(!p.contains('{'));
    }
}
