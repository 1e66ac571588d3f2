//! Channel-selection algorithms.
//!
//! Maps per-channel quality weights `q` to a selection vector `p`: one-best,
//! all-channels, fixed-N, auto-N (ratio threshold γ), soft-N (same support,
//! soft weights), and learning-N-best, which first groups channels by
//! spectral clustering of a coherence-derived affinity matrix and then
//! applies the γ rule per cluster.
//!
//! Conventions used throughout: weights are clamped to `[ε, 1−ε]` before
//! ratio evaluation, ties break toward the lowest channel index, and the
//! argmax channel (or its cluster) is always selected regardless of γ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Spectrogram;

/// Weights are clamped to `[Q_CLAMP_EPS, 1 − Q_CLAMP_EPS]` before the γ
/// ratio is evaluated, so exact 0/1 weights cannot divide by zero.
pub const Q_CLAMP_EPS: f64 = 1e-9;

/// Default affinity kernel width.
pub const DEFAULT_SIGMA: f64 = 1.0;

fn clamp_q(q: f64) -> f64 {
    q.clamp(Q_CLAMP_EPS, 1.0 - Q_CLAMP_EPS)
}

fn check_nonempty(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::InvalidConfig("no channels".into()));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange(format!("gamma {} outside [0,1]", gamma)));
    }
    Ok(())
}

/// Index of the largest weight; ties break toward the lowest index.
pub fn argmax_q(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Selection ratio of channel weight `qi` against the best weight `qstar`:
/// `(qi/q*)·((1−q*)/(1−qi))`, evaluated on clamped weights. Equals 1 when
/// `qi == qstar`, falls toward 0 as `qi` drops.
pub fn selection_ratio(qi: f64, qstar: f64) -> f64 {
    let qi = clamp_q(qi);
    let qs = clamp_q(qstar);
    (qi / qs) * ((1.0 - qs) / (1.0 - qi))
}

/// One-best: unit weight at the argmax channel.
pub fn select_1best(q: &[f64]) -> Result<Vec<f64>> {
    check_nonempty(q)?;
    let mut p = vec![0.0; q.len()];
    p[argmax_q(q)] = 1.0;
    Ok(p)
}

/// All channels with equal unit weight.
pub fn select_all(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidConfig("no channels".into()));
    }
    Ok(vec![1.0; m])
}

/// Default fixed selection size: `round(√M)`, at least 1.
pub fn default_fixed_n(m: usize) -> usize {
    ((m as f64).sqrt().round() as usize).clamp(1, m.max(1))
}

/// Fixed-N: unit weight at the N largest weights, ties toward lower index.
pub fn select_fixed_n(q: &[f64], n: usize) -> Result<Vec<f64>> {
    check_nonempty(q)?;
    if n == 0 || n > q.len() {
        return Err(Error::OutOfRange(format!(
            "N = {} outside 1..={}",
            n,
            q.len()
        )));
    }
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| q[b].partial_cmp(&q[a]).unwrap().then(a.cmp(&b)));
    let mut p = vec![0.0; q.len()];
    for &i in &order[..n] {
        p[i] = 1.0;
    }
    Ok(p)
}

/// Auto-N: channel i selected iff its selection ratio strictly exceeds γ;
/// the argmax channel is always selected.
pub fn select_auto_n(q: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_nonempty(q)?;
    check_gamma(gamma)?;
    let star = argmax_q(q);
    let qs = q[star];
    let mut p = vec![0.0; q.len()];
    for (i, &qi) in q.iter().enumerate() {
        if i == star || selection_ratio(qi, qs) > gamma {
            p[i] = 1.0;
        }
    }
    Ok(p)
}

/// Soft-N: same support as auto-N, but surviving channels carry their own
/// weight `q_i` instead of 1.
pub fn select_soft_n(q: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let hard = select_auto_n(q, gamma)?;
    if q[argmax_q(q)] <= 0.0 {
        return Err(Error::ZeroEnergy(
            "soft selection undefined: best channel weight is 0".into(),
        ));
    }
    Ok(hard
        .iter()
        .zip(q)
        .map(|(&h, &qi)| if h > 0.0 { qi } else { 0.0 })
        .collect())
}

/// Normalized magnitude-squared coherence matrix `K` averaged over
/// frequency, and the Gaussian affinity `A = exp(−(K−I)²/(2σ²))` built from
/// it. Frequencies where any channel has zero energy are excluded from the
/// average.
pub fn channel_affinity(y: &[Spectrogram], sigma: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = y.len();
    if m == 0 {
        return Err(Error::InvalidConfig("no channels".into()));
    }
    if sigma <= 0.0 {
        return Err(Error::OutOfRange(format!("sigma {} must be positive", sigma)));
    }
    let dim = y[0].dim();
    if y.iter().any(|s| s.dim() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", dim),
            got: "mixed spectrogram shapes".into(),
        });
    }
    let (bins, frames) = dim;
    let mut k = DMatrix::zeros(m, m);
    let mut used = 0usize;
    for f in 0..bins {
        let powers: Vec<f64> = (0..m)
            .map(|i| (0..frames).map(|t| y[i][[f, t]].norm_sqr()).sum())
            .collect();
        if powers.iter().any(|&p| p == 0.0) {
            continue;
        }
        used += 1;
        for i in 0..m {
            for j in i..m {
                let cross: num_complex::Complex64 = (0..frames)
                    .map(|t| y[i][[f, t]] * y[j][[f, t]].conj())
                    .sum();
                let val = cross.norm_sqr() / (powers[i] * powers[j]);
                k[(i, j)] += val;
                k[(j, i)] = k[(i, j)];
            }
        }
    }
    if used == 0 {
        return Err(Error::ZeroEnergy(
            "every frequency has a zero-energy channel".into(),
        ));
    }
    k /= used as f64;
    for i in 0..m {
        k[(i, i)] = 1.0;
    }
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let ident = if i == j { 1.0 } else { 0.0 };
            let d = k[(i, j)] - ident;
            a[(i, j)] = (-d * d / (2.0 * sigma * sigma)).exp();
        }
    }
    Ok((k, a))
}

/// Spectral embedding of the channels: columns of `u` are the channels'
/// J-dimensional coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEmbedding {
    /// J×M matrix; column i embeds channel i, rows are eigenvector
    /// directions, each column normalized to unit length.
    pub u: DMatrix<f64>,
}

/// Normalized-Laplacian spectral embedding: form `L = D^{-1/2} A D^{-1/2}`,
/// take the top-J eigenvectors, and normalize each channel's coordinate
/// vector to unit length.
pub fn spectral_embed(a: &DMatrix<f64>, j: usize) -> Result<ClusterEmbedding> {
    let m = a.nrows();
    if m == 0 || a.ncols() != m {
        return Err(Error::ShapeMismatch {
            expected: "square affinity".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if j == 0 || j > m {
        return Err(Error::OutOfRange(format!("J = {} outside 1..={}", j, m)));
    }
    for r in 0..m {
        for c in 0..m {
            if a[(r, c)] < 0.0 {
                return Err(Error::InvalidConfig("affinity entries must be nonnegative".into()));
            }
            if (a[(r, c)] - a[(c, r)]).abs() > 1e-9 {
                return Err(Error::InvalidConfig("affinity must be symmetric".into()));
            }
        }
    }
    let d_inv_sqrt: Vec<f64> = (0..m)
        .map(|r| {
            let s: f64 = a.row(r).iter().sum();
            if s <= 0.0 {
                0.0
            } else {
                1.0 / s.sqrt()
            }
        })
        .collect();
    let l = DMatrix::from_fn(m, m, |r, c| a[(r, c)] * d_inv_sqrt[r] * d_inv_sqrt[c]);
    let eig = nalgebra::SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap()
            .then(x.cmp(&y))
    });
    let mut u = DMatrix::zeros(j, m);
    for (row, &ei) in order.iter().take(j).enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(ei).into();
        // Fix the sign so the largest-magnitude component is positive.
        let mut pivot = 0;
        for idx in 1..m {
            if v[idx].abs() > v[pivot].abs() {
                pivot = idx;
            }
        }
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        u.row_mut(row).copy_from(&v.transpose());
    }
    for c in 0..m {
        let norm = u.column(c).norm();
        if norm > 1e-15 {
            for r in 0..j {
                u[(r, c)] /= norm;
            }
        }
    }
    Ok(ClusterEmbedding { u })
}

/// Flat clustering of the embedded channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster id per channel, ids are `0..n_clusters` ordered by each
    /// cluster's lowest member index.
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    /// Agglomerative merge heights, nondecreasing.
    pub merge_heights: Vec<f64>,
}

/// Average-linkage agglomerative clustering cut at the merge gap of maximal
/// lifetime. Heights `h_1 ≤ … ≤ h_{M−1}` with `h_0 = 0`: the cut after
/// merge k has lifetime `h_{k+1} − h_k`; the earliest maximal gap wins, and
/// an all-zero gap sequence collapses to a single cluster.
pub fn lifetime_cluster(emb: &ClusterEmbedding) -> Result<Clustering> {
    let m = emb.u.ncols();
    if m == 0 {
        return Err(Error::InvalidConfig("no channels".into()));
    }
    if m == 1 {
        return Ok(Clustering {
            assignment: vec![0],
            n_clusters: 1,
            merge_heights: vec![],
        });
    }
    // Average linkage via the Lance–Williams update; clusters are tracked as
    // member lists keyed by their lowest member index.
    let mut dist = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = (emb.u.column(i) - emb.u.column(j)).norm();
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut active: Vec<usize> = (0..m).collect();
    let mut size = vec![1usize; m];
    let mut merges: Vec<(usize, usize, f64)> = Vec::with_capacity(m - 1);
    while active.len() > 1 {
        let (mut bi, mut bj, mut best) = (0usize, 0usize, f64::INFINITY);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                if dist[i][j] < best {
                    best = dist[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        let (keep, drop) = (bi.min(bj), bi.max(bj));
        for &k in &active {
            if k == keep || k == drop {
                continue;
            }
            dist[keep][k] = (size[keep] as f64 * dist[keep][k] + size[drop] as f64 * dist[drop][k])
                / (size[keep] + size[drop]) as f64;
            dist[k][keep] = dist[keep][k];
        }
        size[keep] += size[drop];
        active.retain(|&k| k != drop);
        merges.push((keep, drop, best));
    }
    let heights: Vec<f64> = merges.iter().map(|&(_, _, h)| h).collect();
    // Lifetime of the cut after k merges is heights[k] − heights[k−1]
    // (height 0 before any merge).
    let mut cut = m - 1; // default: all merges performed → one cluster
    let mut best_gap = 0.0;
    for k in 0..m - 1 {
        let prev = if k == 0 { 0.0 } else { heights[k - 1] };
        let gap = heights[k] - prev;
        if gap > best_gap {
            best_gap = gap;
            cut = k;
        }
    }
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for &(a, b, _) in merges.iter().take(cut) {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
    }
    let mut label = vec![usize::MAX; m];
    let mut next = 0usize;
    let mut assignment = vec![0usize; m];
    for i in 0..m {
        let root = find(&mut parent, i);
        if label[root] == usize::MAX {
            label[root] = next;
            next += 1;
        }
        assignment[i] = label[root];
    }
    Ok(Clustering {
        assignment,
        n_clusters: next,
        merge_heights: heights,
    })
}

/// Cluster-level γ rule: a cluster survives iff the selection ratio of its
/// best member weight against the global best strictly exceeds γ; the
/// cluster holding the global argmax always survives. Surviving clusters
/// are selected wholesale.
pub fn select_clusters(assignment: &[usize], n_clusters: usize, q: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_nonempty(q)?;
    check_gamma(gamma)?;
    if assignment.len() != q.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} assignments", q.len()),
            got: format!("{}", assignment.len()),
        });
    }
    if n_clusters == 0 || assignment.iter().any(|&b| b >= n_clusters) {
        return Err(Error::InvalidConfig("cluster ids exceed cluster count".into()));
    }
    let mut cluster_best = vec![f64::NEG_INFINITY; n_clusters];
    for (&b, &qi) in assignment.iter().zip(q) {
        cluster_best[b] = cluster_best[b].max(qi);
    }
    let star_cluster = assignment[argmax_q(q)];
    let qs = cluster_best[star_cluster];
    let mut keep = vec![false; n_clusters];
    for (b, item) in keep.iter_mut().enumerate() {
        *item = b == star_cluster
            || (cluster_best[b].is_finite() && selection_ratio(cluster_best[b], qs) > gamma);
    }
    Ok(assignment
        .iter()
        .map(|&b| if keep[b] { 1.0 } else { 0.0 })
        .collect())
}

/// Default embedding dimension `J = M/2`, at least 1.
pub fn default_embedding_dim(m: usize) -> usize {
    (m / 2).max(1)
}

/// Learning-N-best: affinity from synchronized spectrograms, spectral
/// embedding, lifetime-cut clustering, then the cluster-level γ rule.
pub fn select_learning_n(
    y: &[Spectrogram],
    q: &[f64],
    gamma: f64,
    sigma: f64,
    j: usize,
) -> Result<(Vec<f64>, Clustering)> {
    if y.len() != q.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} spectrograms", q.len()),
            got: format!("{}", y.len()),
        });
    }
    let (_, a) = channel_affinity(y, sigma)?;
    let emb = spectral_embed(&a, j)?;
    let clustering = lifetime_cluster(&emb)?;
    let p = select_clusters(&clustering.assignment, clustering.n_clusters, q, gamma)?;
    Ok((p, clustering))
}

/// JSON-serializable record of one selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<usize>>,
}
