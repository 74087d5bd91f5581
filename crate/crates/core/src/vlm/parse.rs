//! Lenient parsers for model responses. None of them fail: unusable text
//! becomes a malformed analysis, an empty issue list, or a missing intent.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Action, Intent};

/// Evidence timestamps may fall this far outside the clip.
pub const EVIDENCE_GRACE_S: f64 = 1.0;

/// Phrases that mark explicit disinterest. Checked first, so negated
/// interest ("does not want to interact") never reads as interest.
pub const NO_INTENT_PHRASES: &[&str] = &[
    "no intent",
    "not interested",
    "does not want to interact",
    "doesn't want to interact",
    "does not wish to interact",
    "no interest",
    "disinterest",
    "uninterested",
    "ignor",
    "avoid",
    "reject",
    "declin",
    "turns away",
    "walks away",
    "continues walking",
    "unaware",
];

/// Hedges that make an answer inconclusive. Checked second.
pub const HEDGE_PHRASES: &[&str] = &[
    "inconclusive",
    "unclear",
    "uncertain",
    "ambiguous",
    "cannot determine",
    "can't determine",
    "hard to tell",
    "not clear",
];

/// Phrases asserting a desire to interact. Checked last.
pub const INTERACT_PHRASES: &[&str] = &[
    "wants to interact",
    "want to interact",
    "willing to interact",
    "intends to interact",
    "interested",
    "engag",
    "wave",
    "waving",
    "beckon",
    "eye contact",
    "approaches the robot",
    "request",
];

/// One `[mm:ss] cue` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub time_s: f64,
    pub cue: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub raw: String,
    pub answer: Option<String>,
    pub evidence: Vec<Evidence>,
    /// Evidence lines dropped for falling outside the clip.
    pub rejected_evidence: usize,
    /// `None` exactly when the analysis is malformed.
    pub intent: Option<Intent>,
    /// Requests spent on this sample, including re-requests.
    pub attempts: u32,
}

impl Analysis {
    pub fn malformed(&self) -> bool {
        self.intent.is_none()
    }
}

fn contains_any(haystack: &str, needles: &[&str]) -> bool {
    needles.iter().any(|n| haystack.contains(n))
}

/// Maps free text to an intent with the frozen phrase tables.
fn classify_text(text: &str) -> Intent {
    let t = text.to_lowercase();
    if contains_any(&t, NO_INTENT_PHRASES) {
        Intent::NoIntent
    } else if contains_any(&t, HEDGE_PHRASES) {
        Intent::Inconclusive
    } else if contains_any(&t, INTERACT_PHRASES) {
        Intent::Interact
    } else {
        Intent::Inconclusive
    }
}

/// Reads the bracketed choice of an `Overall intention:` line.
fn classify_overall(rest: &str) -> Intent {
    let t = rest.to_lowercase();
    if t.contains("no intent") || t.contains("not interact") {
        Intent::NoIntent
    } else if t.contains("inconclusive") {
        Intent::Inconclusive
    } else if t.contains("interact") {
        Intent::Interact
    } else {
        classify_text(rest)
    }
}

/// Strips list markers and markdown emphasis from the start of a line.
fn clean_line(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['-', '*', '#', '>', ' '])
        .trim_start_matches("**")
        .trim()
}

/// Text after `label` when the cleaned line starts with it (ASCII case
/// insensitive), with surrounding `**` removed.
fn after_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let l = clean_line(line);
    let head = l.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    Some(l[label.len()..].trim_start_matches("**").trim())
}

/// Text after the last `Overall intention:` in the response, if any.
fn overall_intention(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let key = "overall intention:";
    let mut pos = lower.rfind(key)?;
    pos += key.len();
    let rest = &text[pos..];
    Some(rest.lines().next().unwrap_or("").trim())
}

/// Parses `[mm:ss` at the start of `s`; returns seconds and the remainder
/// after the closing bracket.
fn parse_stamp(s: &str) -> Option<(f64, &str)> {
    let inner = s.strip_prefix('[')?;
    let colon = inner.find(':')?;
    let mm = &inner[..colon];
    if mm.is_empty() || mm.len() > 3 || !mm.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let ss = inner.get(colon + 1..colon + 3)?;
    if !ss.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u32 = ss.parse().ok()?;
    if secs >= 60 {
        return None;
    }
    let close = inner.find(']')?;
    let t = mm.parse::<u32>().ok()? as f64 * 60.0 + secs as f64;
    Some((t, &inner[close + 1..]))
}

fn evidence_in(line: &str) -> Option<Evidence> {
    let start = line.find('[')?;
    let (time_s, rest) = parse_stamp(&line[start..])?;
    let cue = rest.trim_start_matches([':', '-', ' ']).trim();
    Some(Evidence {
        time_s,
        cue: cue.to_string(),
    })
}

/// Parses one independent analysis. `clip_duration_s` bounds evidence
/// timestamps (with [`EVIDENCE_GRACE_S`] either side).
///
/// Intent comes from an `Overall intention:` line when present, otherwise
/// from the `Answer:` text via the phrase tables. With neither the
/// analysis is malformed.
pub fn parse_analysis(text: &str, clip_duration_s: f64) -> Analysis {
    let mut answer: Option<String> = None;
    let mut in_answer = false;
    let mut evidence = Vec::new();
    let mut rejected = 0;

    for line in text.lines() {
        if let Some(rest) = after_label(line, "Answer:") {
            answer = Some(rest.to_string());
            in_answer = true;
            continue;
        }
        let is_evidence_label = after_label(line, "Evidence:").is_some();
        if let Some(ev) = evidence_in(line) {
            in_answer = false;
            if ev.time_s >= -EVIDENCE_GRACE_S && ev.time_s <= clip_duration_s + EVIDENCE_GRACE_S {
                evidence.push(ev);
            } else {
                rejected += 1;
            }
            continue;
        }
        if is_evidence_label || after_label(line, "Overall intention:").is_some() {
            in_answer = false;
            continue;
        }
        if in_answer && !line.trim().is_empty() {
            let a = answer.as_mut().unwrap();
            if !a.is_empty() {
                a.push(' ');
            }
            a.push_str(line.trim());
        }
    }

    let answer = answer.filter(|a| !a.trim().is_empty());
    let intent = match overall_intention(text) {
        Some(rest) if !rest.is_empty() => Some(classify_overall(rest)),
        _ => answer.as_deref().map(classify_text),
    };
    Analysis {
        raw: text.to_string(),
        answer,
        evidence,
        rejected_evidence: rejected,
        intent,
        attempts: 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Supported,
    Refuted,
    Inconclusive,
}

impl Verdict {
    fn parse(s: &str) -> Option<Verdict> {
        let t = s.to_lowercase();
        // Echoed format line "supported | refuted | inconclusive" is no verdict.
        if t.contains('|') {
            return None;
        }
        if t.contains("inconclusive") {
            Some(Verdict::Inconclusive)
        } else if t.contains("refuted") {
            Some(Verdict::Refuted)
        } else if t.contains("supported") {
            Some(Verdict::Supported)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub analysis: Option<usize>,
    pub quote: String,
    pub verdict: Option<Verdict>,
}

/// One disputed claim from a contradiction or verification response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub issue: String,
    pub candidates: Vec<Candidate>,
    pub resolution: Option<String>,
}

impl Issue {
    /// Resolution says inconclusive, no candidate got a verdict other than
    /// inconclusive, or two candidates with different quotes were both
    /// supported.
    pub fn unresolved(&self) -> bool {
        if self
            .resolution
            .as_deref()
            .is_some_and(|r| r.to_lowercase().contains("inconclusive"))
        {
            return true;
        }
        if self.candidates.is_empty() {
            return self.resolution.is_none();
        }
        let decided = self
            .candidates
            .iter()
            .any(|c| matches!(c.verdict, Some(Verdict::Supported | Verdict::Refuted)));
        let supported: Vec<&str> = self
            .candidates
            .iter()
            .filter(|c| c.verdict == Some(Verdict::Supported))
            .map(|c| c.quote.as_str())
            .collect();
        let conflicting = supported.windows(2).any(|w| w[0] != w[1]);
        !decided || conflicting
    }

    /// Whether any candidate quote carries an intent-bearing phrase.
    pub fn touches_intent(&self) -> bool {
        self.candidates.iter().any(|c| {
            let q = c.quote.to_lowercase();
            contains_any(&q, NO_INTENT_PHRASES)
                || contains_any(&q, INTERACT_PHRASES)
                || contains_any(&q, KEY_CLAIM_PHRASES)
        })
    }
}

/// Extra cue words that make a disputed quote a key claim.
const KEY_CLAIM_PHRASES: &[&str] = &[
    "intent", "interact", "glance", "gaze", "look", "gesture", "approach",
];

fn unquote(s: &str) -> String {
    s.trim().trim_matches(['"', '\'', '`']).trim().to_string()
}

/// Parses the `- issue:` / `- analysis:` / `quote:` / `video_check:` /
/// `resolution` structure shared by the contradiction and verification
/// formats. `None` when the text has neither issues nor an explicit empty
/// list.
pub fn parse_issues(text: &str) -> Option<Vec<Issue>> {
    let mut issues: Vec<Issue> = Vec::new();
    let mut explicit_empty = false;
    for line in text.lines() {
        let l = clean_line(line);
        let lower = l.to_lowercase();
        if lower.starts_with("contradictions:") && lower.contains("[]") {
            explicit_empty = true;
        } else if let Some(rest) = after_label(l, "issue:") {
            issues.push(Issue {
                issue: rest.to_string(),
                candidates: Vec::new(),
                resolution: None,
            });
        } else if let Some(rest) = after_label(l, "analysis:") {
            if let Some(issue) = issues.last_mut() {
                issue.candidates.push(Candidate {
                    analysis: rest
                        .trim_matches(|c: char| !c.is_ascii_digit())
                        .parse()
                        .ok(),
                    quote: String::new(),
                    verdict: None,
                });
            }
        } else if let Some(rest) = after_label(l, "quote:") {
            if let Some(c) = issues.last_mut().and_then(|i| i.candidates.last_mut()) {
                c.quote = unquote(rest);
            }
        } else if let Some(rest) = after_label(l, "video_check:") {
            if let Some(c) = issues.last_mut().and_then(|i| i.candidates.last_mut()) {
                c.verdict = Verdict::parse(rest);
            }
        } else if lower.starts_with("resolution") {
            if let Some(issue) = issues.last_mut() {
                let rest = l.split_once(':').map_or("", |(_, r)| r);
                issue.resolution = Some(rest.trim().to_string());
            }
        }
    }
    if issues.is_empty() && !explicit_empty {
        None
    } else {
        Some(issues)
    }
}

/// A parsed verification (or majority-vote) response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub issues: Vec<Issue>,
    /// The final log section through the end of the response.
    pub log: String,
    pub intent: Option<Intent>,
}

/// Splits out issues, the `Final log` section and the overall intention.
pub fn parse_verification(text: &str) -> Verification {
    let issues = parse_issues(text).unwrap_or_default();
    let lower = text.to_ascii_lowercase();
    let log = match lower.find("final log") {
        Some(i) => text[i..].trim().to_string(),
        None => text.trim().to_string(),
    };
    let intent = overall_intention(text)
        .filter(|r| !r.is_empty())
        .map(classify_overall);
    Verification {
        issues,
        log,
        intent,
    }
}

/// Reads the action from an action-prompt response: the earliest of the
/// three canonical phrases, then the bare words. `None` if nothing matches.
pub fn parse_action(text: &str) -> Option<Action> {
    let t = text.to_lowercase();
    let earliest = |table: &[(&str, Action)]| {
        table
            .iter()
            .filter_map(|(p, a)| t.find(p).map(|i| (i, *a)))
            .min_by_key(|(i, _)| *i)
            .map(|(_, a)| a)
    };
    earliest(&[
        ("approach to interact", Action::Approach),
        ("leave, do not interact", Action::Leave),
        ("keep probing", Action::Probe),
    ])
    .or_else(|| {
        earliest(&[
            ("approach", Action::Approach),
            ("leave", Action::Leave),
            ("probe", Action::Probe),
            ("probing", Action::Probe),
        ])
    })
}
