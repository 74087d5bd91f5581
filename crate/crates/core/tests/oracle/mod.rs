//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the crate's feature or boosting code; the oracles
//! only share the plain data types.

#![allow(dead_code)]

use engage_core::features::FEATURE_COUNT;
use engage_core::pose::{coco, Keypoint, PoseFrame, TrackId, FRAME_DT, KEYPOINT_COUNT};
use rand::Rng;

/// A window of `frames` poses with every keypoint present: a random body
/// under a random similarity transform, head keypoints wandering per frame.
pub fn random_window<R: Rng>(rng: &mut R, frames: usize) -> Vec<PoseFrame> {
    let scale = rng.random_range(40.0..300.0);
    let (ox, oy) = (rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
    let mut head = [
        (0.0, -0.45),
        (0.06, -0.5),
        (-0.06, -0.5),
        (0.12, -0.47),
        (-0.12, -0.47),
    ];
    (0..frames)
        .map(|i| {
            for h in head.iter_mut() {
                h.0 += rng.random_range(-0.03..0.03);
                h.1 += rng.random_range(-0.03..0.03);
            }
            let mut body = [(0.0, 0.0); KEYPOINT_COUNT];
            body[coco::NOSE] = head[0];
            body[coco::LEFT_EYE] = head[1];
            body[coco::RIGHT_EYE] = head[2];
            body[coco::LEFT_EAR] = head[3];
            body[coco::RIGHT_EAR] = head[4];
            body[coco::LEFT_SHOULDER] = (
                0.25 + rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            );
            body[coco::RIGHT_SHOULDER] = (
                -0.25 + rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            );
            body[coco::LEFT_HIP] = (0.2, 1.0 + rng.random_range(-0.05..0.05));
            body[coco::RIGHT_HIP] = (-0.2, 1.0 + rng.random_range(-0.05..0.05));
            for (slot, p) in body.iter_mut().enumerate() {
                if p.0 == 0.0 && p.1 == 0.0 && slot > coco::RIGHT_SHOULDER {
                    *p = (rng.random_range(-0.5..0.5), rng.random_range(0.2..2.0));
                }
            }
            PoseFrame {
                timestamp: i as f64 * FRAME_DT,
                track_id: TrackId::new("p1"),
                keypoints: body
                    .map(|(x, y)| Some(Keypoint::new(ox + scale * x, oy + scale * y, 0.9))),
                distance_m: Some(2.0),
            }
        })
        .collect()
}

fn xy(f: &PoseFrame, slot: usize) -> (f64, f64) {
    let k = f.keypoints[slot].expect("oracle windows are complete");
    (k.x, k.y)
}

/// Head-geometry signals of one raw frame, straight from the definitions.
fn frame_signals(f: &PoseFrame) -> [f64; 7] {
    let (lsx, lsy) = xy(f, coco::LEFT_SHOULDER);
    let (rsx, rsy) = xy(f, coco::RIGHT_SHOULDER);
    let (lhx, lhy) = xy(f, coco::LEFT_HIP);
    let (rhx, rhy) = xy(f, coco::RIGHT_HIP);
    let (cx, cy) = ((lsx + rsx) * 0.5, (lsy + rsy) * 0.5);
    let torso = (((lhx + rhx) * 0.5 - cx).powi(2) + ((lhy + rhy) * 0.5 - cy).powi(2)).sqrt();
    let n = |slot| {
        let (x, y) = xy(f, slot);
        ((x - cx) / torso, (y - cy) / torso)
    };
    let nose = n(coco::NOSE);
    let (le, re) = (n(coco::LEFT_EYE), n(coco::RIGHT_EYE));
    let (la, ra) = (n(coco::LEFT_EAR), n(coco::RIGHT_EAR));
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let (dl, dr) = (dist(la, nose), dist(ra, nose));
    [
        la.0 - nose.0,
        la.1 - nose.1,
        ra.0 - nose.0,
        ra.1 - nose.1,
        dist(le, re),
        dist(la, ra),
        if dl < dr { dl / dr } else { dr / dl },
    ]
}

/// Max, min and population std of first differences for each signal, over
/// the first 30 frames. Std uses Welford's recurrence.
pub fn brute_force_features(frames: &[PoseFrame]) -> Vec<f64> {
    let sig: Vec<[f64; 7]> = frames[..30].iter().map(frame_signals).collect();
    let mut out = Vec::with_capacity(FEATURE_COUNT);
    for s in 0..7 {
        let (mut hi, mut lo) = (f64::MIN, f64::MAX);
        let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for t in 1..sig.len() {
            let v = sig[t][s] - sig[t - 1][s];
            hi = hi.max(v);
            lo = lo.min(v);
            count += 1.0;
            let d = v - mean;
            mean += d / count;
            m2 += d * (v - mean);
        }
        out.extend([hi, lo, (m2 / count).sqrt()]);
    }
    out
}

/// Gradient boosting with exhaustive split search over every distinct value.
#[derive(Debug, Clone)]
pub struct ExactGbdt {
    base: f64,
    trees: Vec<ExactNode>,
}

#[derive(Debug, Clone)]
enum ExactNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<ExactNode>,
        right: Box<ExactNode>,
    },
}

impl ExactNode {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ExactNode::Leaf(v) => *v,
            ExactNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }
}

pub struct ExactParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub rounds: usize,
    pub min_leaf: usize,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ExactGbdt {
    pub fn fit(x: &[Vec<f64>], y: &[bool], p: &ExactParams) -> Self {
        let n = x.len();
        let pos = y.iter().filter(|&&b| b).count() as f64;
        let base = (pos / (n as f64 - pos)).ln();
        let mut raw = vec![base; n];
        let mut trees = Vec::new();
        for _ in 0..p.rounds {
            let g: Vec<f64> = (0..n)
                .map(|i| sigmoid(raw[i]) - f64::from(u8::from(y[i])))
                .collect();
            let h: Vec<f64> = (0..n)
                .map(|i| sigmoid(raw[i]) * (1.0 - sigmoid(raw[i])))
                .collect();
            let rows: Vec<usize> = (0..n).collect();
            let tree = grow(x, &g, &h, &rows, 0, p);
            for i in 0..n {
                raw[i] += tree.eval(&x[i]);
            }
            trees.push(tree);
        }
        Self { base, trees }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.base + self.trees.iter().map(|t| t.eval(x)).sum::<f64>())
    }
}

#[allow(clippy::needless_range_loop)]
fn grow(
    x: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    depth: usize,
    p: &ExactParams,
) -> ExactNode {
    let gs: f64 = rows.iter().map(|&r| g[r]).sum();
    let hs: f64 = rows.iter().map(|&r| h[r]).sum();
    let leaf = ExactNode::Leaf(-gs / hs.max(1e-12) * p.learning_rate);
    if depth >= p.max_depth || rows.len() < 2 * p.min_leaf {
        return leaf;
    }
    let parent = gs * gs / hs;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &t in &values[..values.len().saturating_sub(1)] {
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0);
            for &r in rows {
                if x[r][f] <= t {
                    gl += g[r];
                    hl += h[r];
                    nl += 1;
                }
            }
            let (gr, hr) = (gs - gl, hs - hl);
            if nl < p.min_leaf || rows.len() - nl < p.min_leaf || hl < 1e-3 || hr < 1e-3 {
                continue;
            }
            let gain = gl * gl / hl + gr * gr / hr - parent;
            if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                best = Some((gain, f, t));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return leaf;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][feature] <= threshold);
    ExactNode::Split {
        feature,
        threshold,
        left: Box::new(grow(x, g, h, &l, depth + 1, p)),
        right: Box::new(grow(x, g, h, &r, depth + 1, p)),
    }
}
