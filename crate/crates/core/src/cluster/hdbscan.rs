//! HDBSCAN: mutual reachability, Prim spanning tree, single-linkage
//! hierarchy, condensed tree and excess-of-mass cluster selection.

use super::{ClusterError, ClusterLabels, ClustererSpec, NOISE};
use crate::matrix::{DenseMatrix, DistanceMatrix};

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(distances: &DistanceMatrix, min_samples: usize) -> Vec<f64> {
    let n = distances.len();
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| distances.get(i, j))
                .collect();
            let kth = min_samples.clamp(1, row.len()) - 1;
            *row.select_nth_unstable_by(kth, f64::total_cmp).1
        })
        .collect()
}

/// `max(core_i, core_j, d_ij)` off the diagonal, zero on it.
pub fn mutual_reachability(distances: &DistanceMatrix, min_samples: usize) -> DistanceMatrix {
    let n = distances.len();
    let core = core_distances(distances, min_samples);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[i * n + j] = core[i].max(core[j]).max(distances.get(i, j));
            }
        }
    }
    DistanceMatrix::from_raw(n, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm on a dense graph, starting from point 0. Ties pick the
/// smallest vertex index.
pub fn minimum_spanning_tree(graph: &DistanceMatrix) -> Vec<MstEdge> {
    let n = graph.len();
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = graph.get(current, v);
            if w < best[v] {
                best[v] = w;
                from[v] = current;
            }
            if best[v] < next_w || next == usize::MAX {
                next_w = best[v];
                next = v;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: from[next],
            b: next,
            weight: next_w,
        });
        current = next;
    }
    edges
}

/// One merge of the single-linkage hierarchy. Nodes `< n` are points;
/// node `n + m` is created by merge `m`.
#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<Merge> {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        let node = n + merges.len();
        size[node] = size[ra] + size[rb];
        parent[ra] = node;
        parent[rb] = node;
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: e.weight,
            size: size[node],
        });
    }
    merges
}

/// Edge of the condensed tree. Cluster ids start at `n` (the root); a
/// `child` below `n` is a point falling out of `parent` at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// Condenses the single-linkage hierarchy built from `mst`: splits where
/// both sides hold at least `min_cluster_size` points create two clusters,
/// smaller sides shed their points from the parent.
pub fn condense_tree(n: usize, mst: &[MstEdge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let merges = single_linkage(n, mst);
    let Some(root) = merges.len().checked_sub(1).map(|m| n + m) else {
        return Vec::new();
    };
    let node_size = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(merges[x - n].right);
                stack.push(merges[x - n].left);
            }
        }
        out
    };

    let mut out = Vec::new();
    let mut next_label = n + 1;
    // (hierarchy node, condensed cluster it belongs to)
    let mut stack = vec![(root, n)];
    while let Some((node, label)) = stack.pop() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let lambda = lambda_of(m.distance);
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let big_l = ls >= min_cluster_size;
        let big_r = rs >= min_cluster_size;
        match (big_l, big_r) {
            (true, true) => {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    out.push(CondensedEdge {
                        parent: label,
                        child: next_label,
                        lambda,
                        child_size: size,
                    });
                    stack.push((child, next_label));
                    next_label += 1;
                }
            }
            (false, false) => {
                for p in leaves(m.left).into_iter().chain(leaves(m.right)) {
                    out.push(CondensedEdge {
                        parent: label,
                        child: p,
                        lambda,
                        child_size: 1,
                    });
                }
            }
            (keep_left, _) => {
                let (keep, shed) = if keep_left {
                    (m.left, m.right)
                } else {
                    (m.right, m.left)
                };
                for p in leaves(shed) {
                    out.push(CondensedEdge {
                        parent: label,
                        child: p,
                        lambda,
                        child_size: 1,
                    });
                }
                stack.push((keep, label));
            }
        }
    }
    out
}

fn excess(lambda: f64, birth: f64) -> f64 {
    if lambda == birth {
        0.0
    } else {
        lambda - birth
    }
}

/// Cluster labels from a condensed tree by excess-of-mass selection.
fn select_clusters(n: usize, tree: &[CondensedEdge], allow_single_cluster: bool) -> Vec<i64> {
    let max_label = tree
        .iter()
        .map(|e| e.parent.max(e.child))
        .max()
        .unwrap_or(n);
    let n_clusters = max_label + 1 - n;
    let mut birth = vec![0.0; n_clusters];
    let mut parent_of = vec![usize::MAX; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in tree.iter().filter(|e| e.child >= n) {
        birth[e.child - n] = e.lambda;
        parent_of[e.child - n] = e.parent - n;
        children[e.parent - n].push(e.child - n);
    }
    let mut stability = vec![0.0; n_clusters];
    for e in tree {
        let c = e.parent - n;
        stability[c] += excess(e.lambda, birth[c]) * e.child_size as f64;
    }

    let mut selected = vec![false; n_clusters];
    // children always carry larger ids than their parent
    for c in (0..n_clusters).rev() {
        if c == 0 && !allow_single_cluster {
            break;
        }
        let subtree: f64 = children[c].iter().map(|&ch| stability[ch]).sum();
        if !children[c].is_empty() && subtree > stability[c] {
            stability[c] = subtree;
        } else {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(d) = stack.pop() {
                selected[d] = false;
                stack.extend(&children[d]);
            }
        }
    }

    let mut labels = vec![NOISE as i64; n];
    for e in tree.iter().filter(|e| e.child < n) {
        let mut c = e.parent - n;
        loop {
            if selected[c] {
                labels[e.child] = c as i64;
                break;
            }
            if parent_of[c] == usize::MAX {
                break;
            }
            c = parent_of[c];
        }
    }
    labels
}

/// HDBSCAN over Euclidean distances of `points`.
pub fn hdbscan(points: &DenseMatrix, spec: &ClustererSpec) -> Result<ClusterLabels, ClusterError> {
    let n = points.n_rows();
    let mcs = spec.min_cluster_size;
    let min_samples = spec.effective_min_samples();
    if mcs < 2 {
        return Err(ClusterError::InvalidSpec(
            "min_cluster_size must be at least 2".into(),
        ));
    }
    if n < mcs {
        return Err(ClusterError::InvalidSpec(format!(
            "{n} points is fewer than min_cluster_size {mcs}"
        )));
    }
    if min_samples < 1 || min_samples >= n {
        return Err(ClusterError::InvalidSpec(format!(
            "min_samples {min_samples} must lie in [1, {n})"
        )));
    }
    let mreach = mutual_reachability(&points.pairwise_distances(), min_samples);
    let mst = minimum_spanning_tree(&mreach);
    let tree = condense_tree(n, &mst, mcs);
    let raw = select_clusters(n, &tree, spec.allow_single_cluster);
    Ok(ClusterLabels::from_raw(raw))
}

#[cfg(test)]
mod tests {
    use super::super::ClusterMethod;
    use super::*;

    fn line(xs: &[f64]) -> DenseMatrix {
        DenseMatrix::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn mutual_reachability_example() {
        let d = line(&[0.0, 1.0, 3.0]).pairwise_distances();
        assert_eq!(core_distances(&d, 1), [1.0, 1.0, 2.0]);
        let m = mutual_reachability(&d, 1);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 2), 2.0);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(2, 2), 0.0);
    }

    #[test]
    fn two_points_mreach_is_distance() {
        let d = line(&[0.0, 4.0]).pairwise_distances();
        let m = mutual_reachability(&d, 1);
        assert_eq!(m.get(0, 1), 4.0);
    }

    #[test]
    fn mst_of_a_line() {
        let d = line(&[0.0, 1.0, 3.0, 7.0]).pairwise_distances();
        let mst = minimum_spanning_tree(&d);
        assert_eq!(mst.len(), 3);
        assert_eq!(mst.iter().map(|e| e.weight).sum::<f64>(), 7.0);
    }

    #[test]
    fn identical_points_are_noise_without_single_cluster() {
        let pts = DenseMatrix::from_rows(&[[1.0, 1.0]; 5]).unwrap();
        let mut spec = ClustererSpec::new(ClusterMethod::Hdbscan);
        spec.min_cluster_size = 5;
        spec.min_samples = Some(2);
        let labels = hdbscan(&pts, &spec).unwrap();
        assert_eq!(labels.n_noise(), 5);
        assert_eq!(labels.n_clusters(), 0);
        spec.allow_single_cluster = true;
        let labels = hdbscan(&pts, &spec).unwrap();
        assert_eq!(labels.n_clusters(), 1);
        assert_eq!(labels.n_noise(), 0);
    }

    #[test]
    fn separated_lines_form_two_clusters() {
        let xs: Vec<f64> = (0..8)
            .map(f64::from)
            .chain((0..8).map(|i| 100.0 + i as f64))
            .collect();
        let mut spec = ClustererSpec::new(ClusterMethod::Hdbscan);
        spec.min_cluster_size = 4;
        let labels = hdbscan(&line(&xs), &spec).unwrap();
        assert_eq!(labels.n_clusters(), 2);
        assert_eq!(labels.n_noise(), 0);
        assert!(labels.labels()[..8].iter().all(|&l| l == 0));
        assert!(labels.labels()[8..].iter().all(|&l| l == 1));
    }

    #[test]
    fn rejects_small_inputs() {
        let spec = ClustererSpec::new(ClusterMethod::Hdbscan);
        assert!(matches!(
            hdbscan(&line(&[0.0, 1.0]), &spec),
            Err(ClusterError::InvalidSpec(_))
        ));
    }
}
