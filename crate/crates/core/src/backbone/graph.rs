//! Sparse propagation graphs: the normalized user-item bipartite adjacency and the frozen
//! item-item kNN semantic graph.

use rayon::prelude::*;

use crate::data::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Compressed sparse rows with f64 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, t)
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m.data[r * self.n_cols + c] = v;
            }
        }
        m
    }

    /// `self * x` for a dense `x` with `n_cols` rows.
    pub fn spmm(&self, x: &Mat) -> Mat {
        assert_eq!(x.rows, self.n_cols, "spmm shape");
        let d = x.cols;
        let mut out = Mat::zeros(self.n_rows, d);
        if d == 0 {
            return out;
        }
        out.data.par_chunks_mut(d).enumerate().for_each(|(r, o)| {
            for (c, w) in self.row(r) {
                o.iter_mut().zip(x.row(c)).for_each(|(oo, xx)| *oo += w * xx);
            }
        });
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }
}

/// `D^{-1/2} A D^{-1/2}` over the `(M + N)`-node bipartite train graph; users first.
pub fn build_norm_bipartite(ds: &InteractionDataset) -> Result<CsrMatrix> {
    let (m, n) = (ds.n_users(), ds.n_items());
    if ds.split_size(Split::Train) == 0 {
        return Err(Error::EmptyDataset);
    }
    let item_deg = ds.item_train_degrees();
    let mut triplets = Vec::with_capacity(2 * ds.split_size(Split::Train));
    for u in 0..m {
        let items = ds.positives(Split::Train, u);
        let du = items.len() as f64;
        for &i in items {
            let w = 1.0 / (du.sqrt() * (item_deg[i] as f64).sqrt());
            triplets.push((u, m + i, w));
            triplets.push((m + i, u, w));
        }
    }
    Ok(CsrMatrix::from_triplets(m + n, m + n, triplets))
}

/// Item-item graph built once from content vectors and never updated by training.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSemanticGraph {
    pub adjacency: CsrMatrix,
    pub k: usize,
    pub frozen: bool,
}

/// Top-`k` cosine neighbours of every row, excluding itself; ties go to the lower index.
pub fn knn_neighbors(item_vecs: &Mat, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = item_vecs.rows;
    if k == 0 || n <= k {
        return Err(Error::param(format!("kNN graph needs N > k >= 1 (N = {n}, k = {k})")));
    }
    let mut unit = item_vecs.clone();
    for i in 0..n {
        let row = unit.row_mut(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateEmbedding {
                item: i,
                slot: crate::error::Slot::Text(0),
            });
        }
        row.iter_mut().for_each(|x| *x /= norm);
    }
    let sims = unit.matmul_t(&unit);
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sims.data[i * n + j], j))
                .collect();
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut top: Vec<usize> = cand[..k].iter().map(|c| c.1).collect();
            top.sort_unstable();
            top
        })
        .collect())
}

/// kNN adjacency with unit weights, symmetrized by `max(A, A^T)`, then degree-normalized.
pub fn build_item_knn_graph(item_vecs: &Mat, k: usize) -> Result<ItemSemanticGraph> {
    let n = item_vecs.rows;
    let neighbors = knn_neighbors(item_vecs, k)?;
    let mut edges = std::collections::BTreeSet::new();
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            edges.insert((i, j));
            edges.insert((j, i));
        }
    }
    let mut deg = vec![0usize; n];
    for &(i, _) in &edges {
        deg[i] += 1;
    }
    let triplets = edges
        .into_iter()
        .map(|(i, j)| (i, j, 1.0 / ((deg[i] as f64).sqrt() * (deg[j] as f64).sqrt())))
        .collect();
    Ok(ItemSemanticGraph {
        adjacency: CsrMatrix::from_triplets(n, n, triplets),
        k,
        frozen: true,
    })
}

/// Layer-mean readout `(1 / (L + 1)) * sum_l A^l x`, layer 0 included.
pub fn layer_mean(adj: &CsrMatrix, x: &Mat, layers: usize) -> Mat {
    let mut acc = x.clone();
    let mut cur = x.clone();
    for _ in 0..layers {
        cur = adj.spmm(&cur);
        acc.add_assign(&cur);
    }
    if layers > 0 {
        acc.scale(1.0 / (layers + 1) as f64);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, Interaction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds_from(pairs: &[(usize, usize)]) -> InteractionDataset {
        let raw = pairs
            .iter()
            .map(|&(u, i)| Interaction {
                user: format!("u{u:03}"),
                item: format!("i{i:03}"),
                timestamp: None,
            })
            .collect();
        build_dataset(raw, 1, 0).unwrap()
    }

    #[test]
    fn single_edge() {
        let a = build_norm_bipartite(&ds_from(&[(0, 0)])).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn star_user() {
        let a = build_norm_bipartite(&ds_from(&[(0, 0), (0, 1), (0, 2), (0, 3)])).unwrap();
        for i in 0..4 {
            assert_eq!(a.get(0, 1 + i), 0.5);
        }
        assert!(a.is_symmetric());
    }

    #[test]
    fn sparse_times_dense_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut pairs = Vec::new();
        for u in 0..20 {
            for i in 0..30 {
                if rng.gen_bool(0.2) || i == u {
                    pairs.push((u, i));
                }
            }
        }
        let ds = ds_from(&pairs);
        let a = build_norm_bipartite(&ds).unwrap();
        let size = ds.n_users() + ds.n_items();
        // Dense oracle built straight from degrees.
        let mut dense = vec![0.0; size * size];
        let m = ds.n_users();
        let mut deg = vec![0.0f64; size];
        for u in 0..m {
            for &i in ds.positives(Split::Train, u) {
                deg[u] += 1.0;
                deg[m + i] += 1.0;
            }
        }
        for u in 0..m {
            for &i in ds.positives(Split::Train, u) {
                let w = 1.0 / (deg[u] * deg[m + i]).sqrt();
                dense[u * size + m + i] = w;
                dense[(m + i) * size + u] = w;
            }
        }
        let x = Mat::from_vec(size, 3, (0..size * 3).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let got = a.spmm(&x);
        for r in 0..size {
            for c in 0..3 {
                let want: f64 = (0..size).map(|k| dense[r * size + k] * x.data[k * 3 + c]).sum();
                assert!((got.data[r * 3 + c] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn knn_tie_rule() {
        let vecs = Mat::from_vec(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(knn_neighbors(&vecs, 1).unwrap(), vec![vec![1], vec![0], vec![0]]);
        let g = build_item_knn_graph(&vecs, 1).unwrap();
        let adj = &g.adjacency;
        assert!(adj.get(0, 1) > 0.0 && adj.get(2, 0) > 0.0 && adj.get(0, 2) > 0.0);
        assert_eq!(adj.get(1, 2), 0.0);
        assert!((adj.get(0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(g.frozen);
        assert!(adj.is_symmetric());
        for i in 0..3 {
            assert_eq!(adj.get(i, i), 0.0);
        }
    }

    #[test]
    fn knn_complete_when_n_is_k_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vecs = Mat::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let g = build_item_knn_graph(&vecs, 4).unwrap();
        assert_eq!(g.adjacency.nnz(), 20);
        assert!(build_item_knn_graph(&vecs, 5).is_err());
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let (n, d, k) = (50, 6, 5);
        let vecs = Mat::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let got = knn_neighbors(&vecs, k).unwrap();
        for i in 0..n {
            let cos = |j: usize| {
                let (a, b) = (vecs.row(i), vecs.row(j));
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
            };
            let mut want: Vec<usize> = Vec::new();
            let mut remaining: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            for _ in 0..k {
                let (pos, _) = remaining
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (p, &j)| if cos(j) > best.1 { (p, cos(j)) } else { best });
                want.push(remaining.remove(pos));
            }
            want.sort_unstable();
            assert_eq!(got[i], want);
        }
    }

    #[test]
    fn zero_row_rejected() {
        let vecs = Mat::from_vec(3, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            knn_neighbors(&vecs, 1),
            Err(Error::DegenerateEmbedding { item: 1, .. })
        ));
    }

    #[test]
    fn layer_mean_zero_layers_is_identity() {
        let x = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        assert_eq!(layer_mean(&a, &x, 0), x);
        let empty = CsrMatrix::from_triplets(2, 2, vec![]);
        let mut third = x.clone();
        third.scale(1.0 / 3.0);
        assert_eq!(layer_mean(&empty, &x, 2), third);
    }
}
