use serde::{Deserialize, Serialize};

/// One tree node. Children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x < threshold` go left.
        threshold: f64,
        /// Side taken by missing (NaN) values.
        default_left: bool,
        left: usize,
        right: usize,
        gain: f64,
    },
    /// Unshrunk weight `-G / (H + lambda)`; prediction scales it by eta.
    Leaf { weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    let go_left = if x.is_nan() { *default_left } else { x < *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_weight(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Checks indices, reachability, feature bounds and finiteness.
    pub fn validate(&self, n_features: usize, max_depth: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Leaf { weight } => {
                    if !weight.is_finite() {
                        return Err(format!("node {i}: non-finite leaf weight"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if *feature >= n_features {
                        return Err(format!("node {i}: feature {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: non-finite threshold"));
                    }
                    for c in [*left, *right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(format!("node {i}: child index {c} invalid"));
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        if parents[0] != 0 {
            return Err("root has a parent".into());
        }
        if let Some(i) = (1..self.nodes.len()).find(|&i| parents[i] != 1) {
            return Err(format!("node {i} has {} parents", parents[i]));
        }
        if self.depth() > max_depth {
            return Err(format!("depth {} exceeds max_depth {max_depth}", self.depth()));
        }
        Ok(())
    }
}
