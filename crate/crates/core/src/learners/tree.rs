//! Binary decision trees over 0/1 dummy columns. Classification trees split
//! on weighted entropy; regression trees (for boosting) on weighted squared
//! error.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Dense 0/1 design, row-major.
#[derive(Debug, Clone)]
pub struct BinaryMatrix {
    pub width: usize,
    bits: Vec<u8>,
}

impl BinaryMatrix {
    pub fn from_active(rows: &[Vec<usize>], width: usize) -> Self {
        let mut bits = vec![0u8; rows.len() * width];
        for (i, row) in rows.iter().enumerate() {
            for &j in row {
                bits[i * width + j] = 1;
            }
        }
        BinaryMatrix { width, bits }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.width + j] != 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Records with column `column` equal to 1 go to `one`, others to `zero`.
    Split {
        column: usize,
        zero: usize,
        one: usize,
        gain: f64,
    },
    Leaf {
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value for a row given by its active columns.
    pub fn leaf(&self, active: &[usize]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { column, zero, one, .. } => {
                    at = if active.contains(column) { *one } else { *zero };
                }
            }
        }
    }

    /// Adds each split's gain to its column.
    pub fn add_gains(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { column, gain, .. } = n {
                acc[*column] += gain;
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { zero, one, .. } => 1 + walk(nodes, *zero).max(walk(nodes, *one)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    /// Minimum size (sum of row counts) of each child.
    pub min_leaf: f64,
    /// Columns drawn per split; `None` considers every column.
    pub max_features: Option<usize>,
}

/// Entropy (nats) of unnormalized class masses.
pub fn entropy(mass: &[f64]) -> f64 {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    mass.iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let p = m / total;
            -p * p.ln()
        })
        .sum()
}

fn candidate_columns(width: usize, max_features: Option<usize>, rng: &mut Rng) -> Vec<usize> {
    // column 0 is the constant
    let free = width - 1;
    match max_features {
        Some(k) if k < free => {
            let mut cols: Vec<usize> = sample(rng, free, k).into_iter().map(|j| j + 1).collect();
            cols.sort_unstable();
            cols
        }
        _ => (1..width).collect(),
    }
}

/// Classification tree. `counts` sets leaf sizes, `weights` the class masses.
pub struct ClassificationGrower<'a> {
    pub x: &'a BinaryMatrix,
    pub classes: &'a [usize],
    pub n_classes: usize,
    pub counts: &'a [f64],
    pub weights: &'a [f64],
    pub params: GrowParams,
}

impl ClassificationGrower<'_> {
    pub fn grow(&self, rows: Vec<usize>, rng: &mut Rng) -> Tree {
        let mut nodes = Vec::new();
        self.node(rows, 0, rng, &mut nodes);
        Tree { nodes }
    }

    fn mass(&self, rows: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; self.n_classes];
        for &i in rows {
            m[self.classes[i]] += self.weights[i];
        }
        m
    }

    fn node(&self, rows: Vec<usize>, depth: usize, rng: &mut Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let mass = self.mass(&rows);
        let total: f64 = mass.iter().sum();
        nodes.push(Node::Leaf {
            value: mass.iter().map(|m| m / total).collect(),
        });
        if depth >= self.params.max_depth || mass.iter().filter(|&&m| m > 0.0).count() < 2 {
            return id;
        }
        let count: f64 = rows.iter().map(|&i| self.counts[i]).sum();
        if count < 2.0 * self.params.min_leaf {
            return id;
        }
        let parent = total * entropy(&mass);
        let mut best: Option<(usize, f64)> = None;
        let mut ones = vec![0.0; self.n_classes];
        for j in candidate_columns(self.x.width, self.params.max_features, rng) {
            ones.iter_mut().for_each(|v| *v = 0.0);
            let mut count_one = 0.0;
            for &i in &rows {
                if self.x.get(i, j) {
                    ones[self.classes[i]] += self.weights[i];
                    count_one += self.counts[i];
                }
            }
            if count_one < self.params.min_leaf || count - count_one < self.params.min_leaf {
                continue;
            }
            let zeros: Vec<f64> = mass.iter().zip(&ones).map(|(m, o)| m - o).collect();
            let w_one: f64 = ones.iter().sum();
            let w_zero: f64 = zeros.iter().sum();
            let gain = parent - w_one * entropy(&ones) - w_zero * entropy(&zeros);
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((column, gain)) = best else {
            return id;
        };
        let (one_rows, zero_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x.get(i, column));
        let zero = self.node(zero_rows, depth + 1, rng, nodes);
        let one = self.node(one_rows, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            column,
            zero,
            one,
            gain,
        };
        id
    }
}

/// Regression tree fit to weighted residuals, with Newton leaf values
/// `scale · Σ w g / Σ w h`.
pub struct RegressionGrower<'a> {
    pub x: &'a BinaryMatrix,
    pub residuals: &'a [f64],
    pub hessians: &'a [f64],
    pub weights: &'a [f64],
    pub leaf_scale: f64,
    pub params: GrowParams,
}

impl RegressionGrower<'_> {
    pub fn grow(&self, rows: Vec<usize>, rng: &mut Rng) -> Tree {
        let mut nodes = Vec::new();
        self.node(rows, 0, rng, &mut nodes);
        Tree { nodes }
    }

    fn node(&self, rows: Vec<usize>, depth: usize, rng: &mut Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let (mut sum, mut wsum, mut hsum) = (0.0, 0.0, 0.0);
        for &i in &rows {
            sum += self.weights[i] * self.residuals[i];
            wsum += self.weights[i];
            hsum += self.weights[i] * self.hessians[i];
        }
        let value = if hsum > 1e-12 {
            self.leaf_scale * sum / hsum
        } else {
            0.0
        };
        nodes.push(Node::Leaf { value: vec![value] });
        let count = rows.len() as f64;
        if depth >= self.params.max_depth || count < 2.0 * self.params.min_leaf {
            return id;
        }
        let parent = sum * sum / wsum;
        let mut best: Option<(usize, f64)> = None;
        for j in candidate_columns(self.x.width, self.params.max_features, rng) {
            let (mut s1, mut w1, mut n1) = (0.0, 0.0, 0.0);
            for &i in &rows {
                if self.x.get(i, j) {
                    s1 += self.weights[i] * self.residuals[i];
                    w1 += self.weights[i];
                    n1 += 1.0;
                }
            }
            if n1 < self.params.min_leaf || count - n1 < self.params.min_leaf {
                continue;
            }
            let (s0, w0) = (sum - s1, wsum - w1);
            if w1 <= 0.0 || w0 <= 0.0 {
                continue;
            }
            let gain = s1 * s1 / w1 + s0 * s0 / w0 - parent;
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((column, gain)) = best else {
            return id;
        };
        let (one_rows, zero_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x.get(i, column));
        let zero = self.node(zero_rows, depth + 1, rng, nodes);
        let one = self.node(one_rows, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            column,
            zero,
            one,
            gain,
        };
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        assert!((entropy(&[1.0, 1.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((entropy(&[0.5; 4]) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stump_finds_the_separating_column() {
        // column 2 determines the class
        let rows: Vec<Vec<usize>> = (0..40)
            .map(|i| {
                let mut r = vec![0];
                if i % 3 == 0 {
                    r.push(1);
                }
                if i % 2 == 0 {
                    r.push(2);
                }
                r
            })
            .collect();
        let x = BinaryMatrix::from_active(&rows, 3);
        let classes: Vec<usize> = (0..40).map(|i| if i % 2 == 0 { 3 } else { 0 }).collect();
        let ones = vec![1.0; 40];
        let grower = ClassificationGrower {
            x: &x,
            classes: &classes,
            n_classes: 4,
            counts: &ones,
            weights: &ones,
            params: GrowParams {
                max_depth: 1,
                min_leaf: 1.0,
                max_features: None,
            },
        };
        let tree = grower.grow((0..40).collect(), &mut rng::rng(0));
        assert!(matches!(tree.nodes[0], Node::Split { column: 2, .. }));
        assert_eq!(tree.leaf(&[0, 2]), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(tree.leaf(&[0]), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn leaf_holds_weighted_frequencies() {
        let rows: Vec<Vec<usize>> = vec![vec![0]; 4];
        let x = BinaryMatrix::from_active(&rows, 2);
        let classes = vec![0, 1, 1, 2];
        let weights = vec![0.5, 0.25, 0.25, 1.0];
        let grower = ClassificationGrower {
            x: &x,
            classes: &classes,
            n_classes: 4,
            counts: &[1.0; 4],
            weights: &weights,
            params: GrowParams {
                max_depth: 3,
                min_leaf: 1.0,
                max_features: None,
            },
        };
        let tree = grower.grow((0..4).collect(), &mut rng::rng(0));
        assert_eq!(tree.leaf(&[0]), &[0.25, 0.25, 0.5, 0.0]);
    }
}
