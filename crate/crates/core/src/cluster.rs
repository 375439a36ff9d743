//! Average-linkage (UPGMA) agglomeration over a symmetric distance matrix.

/// One agglomeration step. Cluster ids: `0..m` are singletons, merge `k`
/// creates cluster `m + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left_id: usize,
    pub right_id: usize,
    pub new_id: usize,
    /// Sorted member indices of each side; `left` holds the smaller first member.
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub distance: f64,
}

/// Mean of `dist[a][b]` over all `a ∈ left`, `b ∈ right`.
pub fn mean_between(dist: &[Vec<f64>], left: &[usize], right: &[usize]) -> f64 {
    let mut s = 0.0;
    for &a in left {
        for &b in right {
            s += dist[a][b];
        }
    }
    s / (left.len() * right.len()) as f64
}

/// Agglomerate until one cluster remains. At each step the closest pair of
/// clusters is joined; among equally close pairs the lexicographically
/// smallest pair of member lists wins.
pub fn average_linkage(dist: &[Vec<f64>]) -> Vec<Merge> {
    let m = dist.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..m).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::with_capacity(m.saturating_sub(1));
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = mean_between(dist, &clusters[i].1, &clusters[j].1);
                let better = match best {
                    None => true,
                    Some((bd, bi, bj)) => {
                        let tol = 1e-12 * bd.abs().max(1.0);
                        if d < bd - tol {
                            true
                        } else if d <= bd + tol {
                            let cand = pair_key(&clusters[i].1, &clusters[j].1);
                            let cur = pair_key(&clusters[bi].1, &clusters[bj].1);
                            cand < cur
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (d, i, j) = best.expect("at least two clusters");
        let (id_j, members_j) = clusters.remove(j);
        let (id_i, members_i) = clusters.remove(i);
        let (left_id, left, right_id, right) = if members_i[0] <= members_j[0] {
            (id_i, members_i, id_j, members_j)
        } else {
            (id_j, members_j, id_i, members_i)
        };
        let new_id = m + merges.len();
        let mut joined: Vec<usize> = left.iter().chain(right.iter()).copied().collect();
        joined.sort_unstable();
        merges.push(Merge { left_id, right_id, new_id, left, right, distance: d });
        clusters.push((new_id, joined));
        clusters.sort_by(|a, b| a.1.cmp(&b.1));
    }
    merges
}

fn pair_key<'a>(a: &'a [usize], b: &'a [usize]) -> (&'a [usize], &'a [usize]) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
