//! Line-oriented model file.
//!
//! Fields appear in this order, one per line, space separated:
//!
//! ```text
//! gbdt-model v1
//! n_features <n>
//! base_score <f64>
//! learning_rate <f64>
//! max_depth <usize>
//! n_iterations <usize>
//! min_samples_leaf <usize>
//! n_bins <usize>
//! seed <u64>
//! l2_regularization <f64>
//! threshold <f64>
//! edges <feature> <count> <edge>...        (n_features lines)
//! trees <count>
//! tree <index> <node count>
//! split <feature> <bin> <threshold> <left> <right>
//! leaf <value>
//! end
//! ```
//!
//! Floats use the shortest text that parses back to the same value, so a
//! written model reloads bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use engage_core::gbdt::{GbdtModel, Node, TrainConfig, Tree};

use crate::error::FormatError;

pub const MODEL_MAGIC: &str = "gbdt-model v1";

pub fn model_to_string(model: &GbdtModel) -> String {
    let c = model.config();
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "n_features {}", model.n_features());
    let _ = writeln!(out, "base_score {}", model.base_score());
    let _ = writeln!(out, "learning_rate {}", c.learning_rate);
    let _ = writeln!(out, "max_depth {}", c.max_depth);
    let _ = writeln!(out, "n_iterations {}", c.n_iterations);
    let _ = writeln!(out, "min_samples_leaf {}", c.min_samples_leaf);
    let _ = writeln!(out, "n_bins {}", c.n_bins);
    let _ = writeln!(out, "seed {}", c.seed);
    let _ = writeln!(out, "l2_regularization {}", c.l2_regularization);
    let _ = writeln!(out, "threshold {}", c.threshold);
    for (j, edges) in model.bin_edges().iter().enumerate() {
        let _ = write!(out, "edges {j} {}", edges.len());
        for e in edges {
            let _ = write!(out, " {e}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "trees {}", model.trees().len());
    for (i, t) in model.trees().iter().enumerate() {
        let _ = writeln!(out, "tree {i} {}", t.nodes.len());
        for n in &t.nodes {
            match *n {
                Node::Split {
                    feature,
                    bin,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(out, "split {feature} {bin} {threshold} {left} {right}");
                }
                Node::Leaf { value } => {
                    let _ = writeln!(out, "leaf {value}");
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Next line split into words, which must start with `key`.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, FormatError> {
        let (i, text) = self
            .iter
            .next()
            .ok_or_else(|| self.err(format!("expected `{key}`, found end of file")))?;
        self.line = i + 1;
        let mut words = text.split_whitespace();
        match words.next() {
            Some(k) if k == key => Ok(words.collect()),
            other => Err(self.err(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let words = self.expect(key)?;
        match words.as_slice() {
            [v] => self.parse(v, key),
            _ => Err(self.err(format!("`{key}` takes exactly one value"))),
        }
    }

    fn parse<T: FromStr>(&self, text: &str, what: &str) -> Result<T, FormatError> {
        text.parse()
            .map_err(|_| self.err(format!("invalid {what} `{text}`")))
    }
}

pub fn parse_model(text: &str, path: &Path) -> Result<GbdtModel, FormatError> {
    let mut l = Lines {
        path,
        iter: text.lines().enumerate(),
        line: 0,
    };
    let (_, magic) = l.iter.next().ok_or_else(|| l.err("empty model file"))?;
    l.line = 1;
    if magic.trim() != MODEL_MAGIC {
        return Err(l.err(format!("expected `{MODEL_MAGIC}` header")));
    }
    let n_features: usize = l.value("n_features")?;
    let base_score: f64 = l.value("base_score")?;
    let config = TrainConfig {
        learning_rate: l.value("learning_rate")?,
        max_depth: l.value("max_depth")?,
        n_iterations: l.value("n_iterations")?,
        min_samples_leaf: l.value("min_samples_leaf")?,
        n_bins: l.value("n_bins")?,
        seed: l.value("seed")?,
        l2_regularization: l.value("l2_regularization")?,
        threshold: l.value("threshold")?,
    };
    let mut bin_edges = Vec::with_capacity(n_features);
    for j in 0..n_features {
        let words = l.expect("edges")?;
        let [index, count, rest @ ..] = words.as_slice() else {
            return Err(l.err("`edges` needs a feature index and a count"));
        };
        if l.parse::<usize>(index, "feature index")? != j {
            return Err(l.err(format!("expected edges for feature {j}")));
        }
        if l.parse::<usize>(count, "edge count")? != rest.len() {
            return Err(l.err("edge count does not match the values given"));
        }
        let edges = rest
            .iter()
            .map(|e| l.parse(e, "edge"))
            .collect::<Result<Vec<f64>, _>>()?;
        bin_edges.push(edges);
    }
    let n_trees: usize = l.value("trees")?;
    let mut trees = Vec::with_capacity(n_trees);
    for i in 0..n_trees {
        let words = l.expect("tree")?;
        let [index, count] = words.as_slice() else {
            return Err(l.err("`tree` takes an index and a node count"));
        };
        if l.parse::<usize>(index, "tree index")? != i {
            return Err(l.err(format!("expected tree {i}")));
        }
        let count: usize = l.parse(count, "node count")?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let (i, text) = l
                .iter
                .next()
                .ok_or_else(|| l.err("unexpected end of file inside a tree"))?;
            l.line = i + 1;
            let words: Vec<&str> = text.split_whitespace().collect();
            let node = match words.as_slice() {
                ["leaf", v] => Node::Leaf {
                    value: l.parse(v, "leaf value")?,
                },
                ["split", f, b, t, left, right] => Node::Split {
                    feature: l.parse(f, "feature")?,
                    bin: l.parse(b, "bin")?,
                    threshold: l.parse(t, "threshold")?,
                    left: l.parse(left, "child index")?,
                    right: l.parse(right, "child index")?,
                },
                _ => return Err(l.err(
                    "expected `leaf <value>` or `split <feature> <bin> <threshold> <left> <right>`",
                )),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    l.expect("end")?;
    if let Some((i, extra)) = l.iter.find(|(_, t)| !t.trim().is_empty()) {
        l.line = i + 1;
        return Err(l.err(format!("unexpected content after `end`: `{extra}`")));
    }
    GbdtModel::from_parts(base_score, bin_edges, trees, config)
        .map_err(|e| FormatError::invalid(path, e.to_string()))
}

pub fn read_model(path: &Path) -> Result<GbdtModel, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_model(&text, path)
}

pub fn write_model(path: &Path, model: &GbdtModel) -> Result<(), FormatError> {
    fs::write(path, model_to_string(model)).map_err(|e| FormatError::io(path, e))
}
