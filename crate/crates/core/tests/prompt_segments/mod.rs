//! Prompt templates as literal segments and placeholder holes, with the
//! pinned checksums of the raw templates.

use engage_core::gate::TriggerKind;
use engage_core::vlm::{build_prompt, format_analyses, template, PromptContext, Stage};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy)]
pub enum Seg {
    Lit(&'static str),
    Hole(&'static str),
}
use Seg::{Hole, Lit};

pub const INDEPENDENT_GAZE: &[Seg] = &[
    Lit(
        r#"You are a robot whose job is to approach people so they can throw away their trash. You are approaching the person shown in the video in the blue bounding box. The video features the person's subtle non-verbal behaviors towards your approach. The camera is co-located with the robot; 'toward the robot' == 'toward the camera'. The bounding box may flicker or disappear, but you should focus on the person in the bounding box throughout the video."#,
    ),
    Lit(
        r#"Task: Reason step by step. Try to capture all behaviors of the person of interest. Focus on the person's subtle body language. Does the person want to interact with you?"#,
    ),
    Lit(
        r#"If there are concrete actions that you can pinpoint, you should cite them as evidence. Make sure the evidence is directly visible in the video."#,
    ),
    Lit(
        r#"Pay special attention when the bounding box turns green, which may suggest a potential cue of interest."#,
    ),
    Lit(
        r#"Note that the robot is also moving/turning, so the person's relative position may change. Make sure to distinguish between the person's movement and the robot's movement."#,
    ),
    Lit(r#"output format (use exactly):"#),
    Lit(r#"Answer: [The person's body language..., showing ...]"#),
    Lit(r#"Evidence: [mm:ss] <brief micro-cues>"#),
];

pub const INDEPENDENT_PROXEMICS: &[Seg] = &[
    Lit(
        r#"You are a robot whose job is to approach people so they can throw away their trash. You are approaching the person shown in the video in the orange bounding box. You are currently in that person's personal zone. The camera is co-located with the robot; 'toward the robot' == 'toward the camera'."#,
    ),
    Lit(
        r#"The bounding box may flicker or disappear, but you should focus on the person in the bounding box throughout the video."#,
    ),
    Lit(
        r#"Task: Reason step by step. Try to capture all behaviors of the person of interest. Focus on the person's subtle body language. Does the person want to interact with you?"#,
    ),
    Lit(
        r#"If there are concrete actions that you can pinpoint, you should cite them as evidence. Make sure the evidence is directly visible in the video."#,
    ),
    Lit(
        r#"Pay special attention when the bounding box turns green, which may suggest a potential cue of interest."#,
    ),
    Lit(
        r#"Note that the robot is also moving/turning, so the person's relative position may change. Make sure to distinguish between the person's movement and the robot's movement."#,
    ),
    Lit(r#"output format (use exactly):"#),
    Lit(r#"Answer: [The person's body language..., showing ...]"#),
    Lit(r#"Evidence: [mm:ss] <brief micro-cues>"#),
];

pub const CONTRADICTION: &[Seg] = &[
    Lit(
        r#"You are given 5 independent analyses of a video showing a blue/orange-box person reacting to a robot. Your job is to extract all contradictions, disagreements, or disputed claims among the analyses."#,
    ),
    Lit(r#"Do NOT attempt to resolve or fact-check them."#),
    Lit(r#"For each contradiction, list (format exactly, no JSON is necessary):"#),
    Lit(r#" - issue: <what is disputed>"#),
    Lit(r#"   candidates:"#),
    Lit(r#"   - analysis: <n>"#),
    Lit(r#"     quote: "<verbatim>""#),
    Lit(r#"   ... (repeat for each analysis with a distinct claim)"#),
    Lit(r#"Only include issues where there is a clear disagreement or mutually exclusive claim."#),
    Lit(r#"If all analyses agree, output: contradictions: []"#),
    Lit(r#"Here are the 5 analyses:"#),
    // Analyses follow the listing's closing line.
    Hole("analyses"),
];

pub const VERIFY: &[Seg] = &[
    Lit(
        r#"You are given 5 independent analyses of a video showing the person in the blue/orange bounding box reacting to a robot."#,
    ),
    Lit(r#"Video duration: "#),
    Hole("video_duration_sec"),
    Lit(r#" seconds. The video is 15 fps."#),
    Lit(r#"Here are the 5 analyses:"#),
    Hole("analyses"),
    Lit(r#"Here are the contradictions extracted from the analyses:"#),
    Hole("contradiction_text"),
    Lit(
        r#"ROLE: Verifier. Your job is to synthesize a clear, human-interpretable behavior log of the blue-box/orange-box person's nonverbal behaviors and intent, using both the video and contradiction analyses."#,
    ),
    Lit(r#"Instructions:"#),
    Lit(r#"- Focus on the person in the blue/orange bounding box only."#),
    Lit(r#"- Do NOT hallucinate. Only include behaviors or intent that are directly visible."#),
    Lit(
        r#"- Do NOT make up new claims outside the existing analysis unless you have solid video evidence to support them."#,
    ),
    Lit(
        r#"- Fact-check every contradiction in the provided contradictions against what is visible in the video."#,
    ),
    Lit(
        r#"- For each candidate analysis, state whether it is 'supported', 'refuted', or 'inconclusive', and cite specific visual evidence (body part movement, direction, duration, micro-cues, with timestamps)."#,
    ),
    Lit(
        r#"- If a candidate analysis is ambiguous or not clearly supported, mark it as 'inconclusive' and explain."#,
    ),
    Lit(
        r#"- If any analysis mentions a brief or subtle cue (e.g., a quick glance, fleeting gesture, or micro-expression), carefully check the video for this event, even if only one analysis notices it. If visible, include it in the final log with supporting evidence and a timestamp."#,
    ),
    Lit(
        r#"- At the end, state the person's overall intention to interact with the robot, based ONLY on directly observable behaviors."#,
    ),
    Lit(r#"CHECKLIST FOR EACH CANDIDATE ANALYSIS:"#),
    Lit(r#"- Is this claim visible in the video? (Allow a plus or minus 1-second grace window.)"#),
    Lit(r#"- If not, mark it as 'inconclusive' or 'refuted' and explain."#),
    Lit(r#"- For 'supported' claims, cite the exact visual evidence."#),
    Lit(
        r#"- If conflicting claims are both supported by video evidence, mark the resolution as 'inconclusive'."#,
    ),
    Lit(r#"OUTPUT FORMAT:"#),
    Lit(r#"contradictions:"#),
    Lit(r#" - issue: <what is disputed>"#),
    Lit(r#"   candidates:"#),
    Lit(r#"   - analysis: <n>"#),
    Lit(r#"     quote: "<verbatim>""#),
    Lit(r#"     video_check: supported | refuted | inconclusive"#),
    Lit(r#"     indicators: [<brief visual indicators>]"#),
    Lit(
        r#" - resolution to the issue: <one line>. State inconclusive if conflicting claims are supported by the video."#,
    ),
    Lit(r#"Final log (Verification):"#),
    Lit(r#" - [mm:ss] <verified claims> "#),
    Lit(r#" - [mm:ss] <inconclusive claims, and explain what is the inconclusive part>"#),
    Lit(
        r#"Overall intention: [Interact | No Intent to Interact | Inconclusive] (rationale: <one line>)"#,
    ),
];

pub const MAJORITY_VOTE: &[Seg] = &[
    Lit(
        r#"You are given 5 independent analyses of a video showing a person reacting to a robot. ROLE: Majority Vote Synthesizer. Your job is to combine the 5 analyses using majority voting."#,
    ),
    Lit(r#"MAJORITY VOTE RULES:"#),
    Lit(r#"1. For each behavior/claim, count how many analyses support it (out of 5)."#),
    Lit(r#"2. Include behaviors supported by majority (4+/5)."#),
    Lit(r#"3. Exclude behaviors supported by minority (1/5) ."#),
    Lit(r#"4. For contradictory claims, the majority position wins."#),
    Lit(
        r#"5. If uncertain (e.g., 3 vs 2, 2 vs 3), mark claim as inconclusive and include the more supported position."#,
    ),
    Lit(r#"PROCESS:"#),
    Lit(r#"- Go through behaviors/claims mentioned across all 5 analyses."#),
    Lit(r#"- Count votes for each behavior."#),
    Lit(r#"- Include only majority-supported behaviors (4+/5)."#),
    Lit(r#"- For timing, use the most frequently mentioned time range."#),
    Lit(
        r#"- For overall intention, count votes for [Interact | No Intent to Interact | Inconclusive]. If uncertain (3 vs 2, 2 vs 2), mark claim as [Inconclusive]."#,
    ),
    Lit(r#"OUTPUT FORMAT:"#),
    Lit(r#"vote_summary:"#),
    Lit(r#"  - behavior: <description>"#),
    Lit(r#"    votes: <n>/5"#),
    Lit(r#"    time: <most common time mentioned>"#),
    Lit(r#"    decision: include(4+/5) | exclude(1/5) | inconclusive (2/5 or 3/5)"#),
    Lit(r#"contradictions:"#),
    Lit(r#"  - issue: <what is disputed>"#),
    Lit(r#"    position_A: "<description>" (votes: <n>/5)"#),
    Lit(r#"    position_B: "<description>" (votes: <n>/5)"#),
    Lit(r#"    winner: position_A | position_B | Inconclusive (if 3 vs 2 or 2 vs 2)"#),
    Lit(r#"Final log (Majority Vote):"#),
    Lit(r#"  - [mm:ss] <majority behavior> (votes: <n>/5)"#),
    Lit(r#"  - [mm:ss] <inconclusive claims, and vote summary (e.g. 3 vs 2)>"#),
    Lit(
        r#"Overall intention: Overall intention: [Interact | No Intent to Interact | Inconclusive] (votes: <n>/5)"#,
    ),
    Lit(r#"Here are the 5 analyses:"#),
    Hole("analyses"),
];

pub const ACTION: &[Seg] = &[
    Lit(
        r#"Given the following overall intention of a person's reaction to the robot, output the appropriate robot action towards the person as either 'Approach to interact', 'Leave, do not interact', or 'Inconclusive, Keep probing'."#,
    ),
    Lit(r#"Justify your answer in 1-2 sentences."#),
    Hole("log_text"),
    Lit(r#"Decision:"#),
];
pub const CASES: [(&str, TriggerKind, Stage, &[Seg]); 6] = [
    (
        "independent_gaze",
        TriggerKind::GazeShift,
        Stage::Independent,
        INDEPENDENT_GAZE,
    ),
    (
        "independent_proxemics",
        TriggerKind::ProxemicEntry,
        Stage::Independent,
        INDEPENDENT_PROXEMICS,
    ),
    (
        "contradiction",
        TriggerKind::GazeShift,
        Stage::Contradiction,
        CONTRADICTION,
    ),
    ("verify", TriggerKind::GazeShift, Stage::Verify, VERIFY),
    (
        "majority_vote",
        TriggerKind::GazeShift,
        Stage::MajorityVote,
        MAJORITY_VOTE,
    ),
    ("action", TriggerKind::GazeShift, Stage::Action, ACTION),
];

pub const CHECKSUMS: [(&str, &str); 6] = [
    (
        "action",
        "d232db9b0fe91da21722cd514af7e12c95cff75b5cfc59439817aa2bf865e6b4",
    ),
    (
        "contradiction",
        "6af88e45ea6a2382f0308eee1656907676ae5d8cbfba5b0ec27831e631441961",
    ),
    (
        "independent_gaze",
        "4fb94640b5cc150ffe5734964bc36e77e347590569a84ff15cc630875cc4562f",
    ),
    (
        "independent_proxemics",
        "a3f8b3cdcbc5f8840492de4915ee3f508e52a996e4c37134bfe6411502547db4",
    ),
    (
        "majority_vote",
        "48162cb05bbc4ad957347ca2352743332455dcbdd854c444d81f8a3e298e9516",
    ),
    (
        "verify",
        "5165b4a9752221ef46a2038c9a0484964d1386421df0e39965d18d5e2379fc40",
    ),
];

pub fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn render(segs: &[Seg], hole: impl Fn(&str) -> String) -> String {
    segs.iter()
        .map(|s| match *s {
            Lit(t) => t.to_string(),
            Hole(name) => hole(name),
        })
        .collect()
}

/// Templates whose text differs from the rebuilt segments.
pub fn template_mismatches() -> Vec<&'static str> {
    CASES
        .iter()
        .filter(|(_, kind, stage, segs)| {
            template(*kind, *stage) != render(segs, |h| format!("{{{h}}}"))
        })
        .map(|c| c.0)
        .collect()
}

/// Templates whose SHA-256 differs from the pinned value.
pub fn checksum_mismatches() -> Vec<&'static str> {
    CASES
        .iter()
        .filter(|(name, kind, stage, _)| {
            let want = CHECKSUMS.iter().find(|(n, _)| n == name).unwrap().1;
            sha256_hex(template(*kind, *stage)) != want
        })
        .map(|c| c.0)
        .collect()
}

/// Instantiates every template with values that contain braces and
/// placeholder names, which must not be rescanned, and returns the
/// templates whose output differs from the segments filled by hand.
pub fn instantiation_mismatches() -> Vec<&'static str> {
    let analyses: Vec<String> = (1..=5)
        .map(|i| format!("Answer: sample {i} {{analyses}}\nEvidence: [00:0{i}] glance"))
        .collect();
    let contradictions = "contradictions: []";
    let log = "Final log: {log_text} [00:02] turns toward robot\nOverall intention: [Interact]";
    let ctx = PromptContext {
        clip_duration_s: 6.0,
        analyses: Some(&analyses),
        contradiction_text: Some(contradictions),
        log_text: Some(log),
    };
    CASES
        .iter()
        .filter(|(_, kind, stage, segs)| {
            let want = render(segs, |h| match h {
                "analyses" => format_analyses(&analyses),
                "video_duration_sec" => "6.0".to_string(),
                "contradiction_text" => contradictions.to_string(),
                "log_text" => log.to_string(),
                other => panic!("unexpected placeholder {other}"),
            });
            build_prompt(*kind, *stage, &ctx).as_deref() != Ok(want.as_str())
        })
        .map(|c| c.0)
        .collect()
}
