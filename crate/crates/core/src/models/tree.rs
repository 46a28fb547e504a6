//! Binary regression trees grown on gradient statistics.
//!
//! One grower serves all ensembles. Each row carries a weight `w`
//! (bootstrap multiplicity, 0 for rows left out), a first-order statistic
//! `g` and a second-order statistic `h`. A node's score is `G^2 / (H + l)`
//! with `G = sum(w g)`, `H = sum(w h)`; a split's gain is half the score
//! increase minus `gamma`, and a leaf holds `-G / (H + l)`. With `g = -y`,
//! `h = 1`, `l = 0` this is the usual variance-reduction tree with mean
//! leaves; with `g = prediction - y` it is a least-squares boosting stage.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        /// Column index into the model's feature list.
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        /// Loss reduction of this split (before `gamma`).
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            _ => None,
        })
    }

    /// Adds each split's gain to `acc[feature]`.
    pub fn accumulate_gain(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                acc[*feature] += gain;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Exhaustive search over midpoints of consecutive distinct values.
    Best,
    /// One uniform threshold between the node's min and max per feature.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    /// Minimum total weight on each side of a split.
    pub min_samples_leaf: f64,
    /// Minimum total `h` weight on each side of a split.
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Features examined per node (drawn without replacement).
    pub max_features: usize,
    pub rule: SplitRule,
}

/// Column-major training matrix with per-feature row orders, shared by all
/// trees of an ensemble.
#[derive(Debug, Clone)]
pub struct Presorted {
    pub cols: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
    pub n_rows: usize,
}

impl Presorted {
    pub fn new(cols: Vec<Vec<f64>>) -> Self {
        let n_rows = cols.first().map_or(0, Vec::len);
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..n_rows as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Presorted { cols, order, n_rows }
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a, R: Rng> {
    data: &'a Presorted,
    g: &'a [f64],
    h: &'a [f64],
    w: &'a [f64],
    params: GrowParams,
    rng: &'a mut R,
    /// Per feature, rows with positive weight; each node owns the same
    /// range `lo..hi` in every feature's list.
    lists: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    nodes: Vec<Node>,
    /// Leaf value per row (only meaningful for weighted rows).
    row_value: Vec<f64>,
}

/// Grows one tree. Returns the tree and each row's leaf value (NaN for
/// rows with zero weight).
pub fn grow_tree<R: Rng>(
    data: &Presorted,
    g: &[f64],
    h: &[f64],
    w: &[f64],
    params: GrowParams,
    rng: &mut R,
) -> (Tree, Vec<f64>) {
    let lists: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&i| w[i as usize] > 0.0).collect())
        .collect();
    let n_active = lists.first().map_or(0, Vec::len);
    let mut gr = Grower {
        data,
        g,
        h,
        w,
        params,
        rng,
        lists,
        scratch: vec![0; n_active],
        goes_left: vec![false; data.n_rows],
        nodes: Vec::new(),
        row_value: vec![f64::NAN; data.n_rows],
    };
    if data.width() == 0 || n_active == 0 {
        let (gs, hs, _, _) = gr.totals(0, 0);
        let value = leaf_value(gs, hs, params.lambda);
        return (
            Tree {
                nodes: vec![Node::Leaf { value }],
            },
            gr.row_value,
        );
    }
    gr.build(0, n_active, 0);
    (Tree { nodes: gr.nodes }, gr.row_value)
}

fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

impl<R: Rng> Grower<'_, R> {
    /// (G, H, W, sum w g^2) over the node's rows.
    fn totals(&self, lo: usize, hi: usize) -> (f64, f64, f64, f64) {
        let (mut gs, mut hs, mut ws, mut g2) = (0.0, 0.0, 0.0, 0.0);
        if let Some(list) = self.lists.first() {
            for &i in &list[lo..hi] {
                let i = i as usize;
                let w = self.w[i];
                gs += w * self.g[i];
                hs += w * self.h[i];
                ws += w;
                g2 += w * self.g[i] * self.g[i];
            }
        }
        (gs, hs, ws, g2)
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let (gs, hs, ws, g2) = self.totals(lo, hi);
        let p = self.params;
        let split = if depth < p.max_depth && ws >= 2.0 * p.min_samples_leaf && hi - lo >= 2 {
            self.best_split(lo, hi, (gs, hs, ws, g2))
        } else {
            None
        };
        let Some(c) = split else {
            let value = leaf_value(gs, hs, p.lambda);
            for &i in &self.lists[0][lo..hi] {
                self.row_value[i as usize] = value;
            }
            self.nodes[id] = Node::Leaf { value };
            return id;
        };
        let mid = self.partition(lo, hi, c.feature, c.threshold);
        let left = self.build(lo, mid, depth + 1);
        let right = self.build(mid, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left,
            right,
            gain: c.gain + p.gamma,
        };
        id
    }

    fn best_split(&mut self, lo: usize, hi: usize, totals: (f64, f64, f64, f64)) -> Option<Candidate> {
        let (gs, hs, ws, g2) = totals;
        let p = self.params;
        let width = self.data.width();
        let k = p.max_features.clamp(1, width);
        let mut feats: Vec<usize> = if k == width {
            (0..width).collect()
        } else {
            sample_indices(self.rng, width, k).into_vec()
        };
        feats.sort_unstable();
        let parent = score(gs, hs, p.lambda);
        // gains below this are rounding noise (a constant target gives 0)
        let eps = 1e-10 * g2.max(parent).max(f64::MIN_POSITIVE);
        let mut best: Option<Candidate> = None;
        for f in feats {
            let col = &self.data.cols[f];
            let list = &self.lists[f][lo..hi];
            let xmin = col[list[0] as usize];
            let xmax = col[list[list.len() - 1] as usize];
            if xmin == xmax {
                continue;
            }
            let random_thr = match p.rule {
                SplitRule::Best => None,
                SplitRule::Random => Some(self.rng.random_range(xmin..xmax)),
            };
            let (mut gl, mut hl, mut wl) = (0.0, 0.0, 0.0);
            for k in 0..list.len() - 1 {
                let i = list[k] as usize;
                let w = self.w[i];
                gl += w * self.g[i];
                hl += w * self.h[i];
                wl += w;
                let x = col[i];
                let xn = col[list[k + 1] as usize];
                if x == xn {
                    continue;
                }
                let thr = match random_thr {
                    Some(t) if xn <= t => continue,
                    Some(t) => t,
                    None => {
                        let m = 0.5 * (x + xn);
                        if m < xn {
                            m
                        } else {
                            x
                        }
                    }
                };
                let (gr, hr, wr) = (gs - gl, hs - hl, ws - wl);
                let ok = wl >= p.min_samples_leaf
                    && wr >= p.min_samples_leaf
                    && hl >= p.min_child_weight
                    && hr >= p.min_child_weight;
                if ok {
                    let gain = 0.5 * (score(gl, hl, p.lambda) + score(gr, hr, p.lambda) - parent) - p.gamma;
                    if gain > eps && best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(Candidate {
                            feature: f,
                            threshold: thr,
                            gain,
                        });
                    }
                }
                if random_thr.is_some() {
                    // only one cut point exists for a random threshold
                    break;
                }
            }
        }
        best
    }

    /// Stable partition of every feature list's node range; returns the
    /// boundary between the left and right children.
    fn partition(&mut self, lo: usize, hi: usize, feature: usize, threshold: f64) -> usize {
        let col = &self.data.cols[feature];
        for &i in &self.lists[feature][lo..hi] {
            self.goes_left[i as usize] = col[i as usize] <= threshold;
        }
        let mut mid = lo;
        for list in &mut self.lists {
            let seg = &mut list[lo..hi];
            let mut l = 0;
            for &i in seg.iter() {
                if self.goes_left[i as usize] {
                    self.scratch[l] = i;
                    l += 1;
                }
            }
            let mut r = l;
            for &i in seg.iter() {
                if !self.goes_left[i as usize] {
                    self.scratch[r] = i;
                    r += 1;
                }
            }
            seg.copy_from_slice(&self.scratch[..hi - lo]);
            mid = lo + l;
        }
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(depth: usize) -> GrowParams {
        GrowParams {
            max_depth: depth,
            min_samples_leaf: 1.0,
            min_child_weight: 0.0,
            lambda: 0.0,
            gamma: 0.0,
            max_features: usize::MAX,
            rule: SplitRule::Best,
        }
    }

    fn fit(x: Vec<Vec<f64>>, y: &[f64], p: GrowParams) -> (Tree, Vec<f64>) {
        let data = Presorted::new(x);
        let g: Vec<f64> = y.iter().map(|v| -v).collect();
        let ones = vec![1.0; y.len()];
        grow_tree(&data, &g, &ones, &ones, p, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn step_function_is_learned_exactly() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let (t, fitted) = fit(vec![x.clone()], &y, params(1));
        assert_eq!(t.depth(), 1);
        assert_eq!(fitted, y);
        match t.nodes[0] {
            Node::Split { threshold, .. } => {
                assert_eq!(threshold, 0.5 * (x[9] + x[10]));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn constant_target_has_no_split() {
        let x: Vec<f64> = (0..30).map(|i| (i * 7 % 11) as f64).collect();
        let (t, _) = fit(vec![x], &[42.5; 30], params(5));
        assert_eq!(t.nodes, vec![Node::Leaf { value: 42.5 }]);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v >= 5.0 { 3.0 } else { 0.0 }).collect();
        let (t, _) = fit(vec![x.clone(), x.clone()], &y, params(1));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_is_respected_and_mean_leaves() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.3).sin()).collect();
        for d in 0..5 {
            let (t, fitted) = fit(vec![x.clone()], &y, params(d));
            assert!(t.depth() <= d);
            // mean of fitted values equals mean of y for mean leaves
            let a: f64 = fitted.iter().sum::<f64>();
            let b: f64 = y.iter().sum::<f64>();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y = [1.0, 1.0, 1.0, 100.0, 5.0, 5.0];
        let data = Presorted::new(vec![x]);
        let g: Vec<f64> = y.iter().map(|v| -v).collect();
        let h = vec![1.0; 6];
        let w = [1.0, 2.0, 1.0, 0.0, 1.0, 1.0];
        let (t, fitted) = grow_tree(&data, &g, &h, &w, params(3), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(fitted[3].is_nan());
        assert!(t.leaves().all(|v| v == 1.0 || v == 5.0));
    }

    #[test]
    fn random_rule_thresholds_lie_inside_range() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let mut p = params(4);
        p.rule = SplitRule::Random;
        let (t, _) = fit(vec![x], &y, p);
        for n in &t.nodes {
            if let Node::Split { threshold, .. } = n {
                assert!(*threshold >= 0.0 && *threshold < 39.0);
            }
        }
        assert!(t.nodes.len() > 1);
    }
}
