use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Cluster-quality scores of a labelled embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEvalReport {
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub neighborhood_purity: f64,
    pub neighborhood: usize,
}

/// Scores an embedding (one sample per row) against class labels.
///
/// Silhouette uses Euclidean distances; a sample alone in its class scores 0.
/// Neighborhood purity is the mean fraction of each sample's `neighborhood`
/// nearest other samples that share its label, with distance ties broken by
/// sample index.
pub fn eval_embedding<L: Ord>(
    embedding: &DenseMatrix,
    labels: &[L],
    neighborhood: usize,
) -> Result<EmbeddingEvalReport> {
    let n = embedding.rows();
    if labels.len() != n {
        return Err(Error::Contract(format!("{} labels for {n} samples", labels.len())));
    }
    if neighborhood == 0 || neighborhood >= n {
        return Err(Error::Contract(format!(
            "neighborhood must lie in 1..{n}, got {neighborhood}"
        )));
    }
    let mut ids = BTreeMap::new();
    let class: Vec<usize> = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    let k = ids.len();
    if k < 2 {
        return Err(Error::Contract("at least two classes are required".into()));
    }
    let x = embedding.as_matrix();
    let dist = pairwise(embedding);
    let mut sizes = vec![0usize; k];
    for &c in &class {
        sizes[c] += 1;
    }

    let mut silhouette = 0.0;
    let mut purity = 0.0;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let mut sums = vec![0.0; k];
        for (j, d) in row.iter().enumerate() {
            if j != i {
                sums[class[j]] += d;
            }
        }
        let own = class[i];
        if sizes[own] > 1 {
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                silhouette += (b - a) / m;
            }
        }

        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&p, &q| row[p].total_cmp(&row[q]).then(p.cmp(&q)));
        let same = order[..neighborhood].iter().filter(|&&j| class[j] == own).count();
        purity += same as f64 / neighborhood as f64;
    }

    let mean = x.row_mean();
    let mut between = 0.0;
    let mut within = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| class[i] == c).collect();
        let centroid = x.select_rows(&members).row_mean();
        between += sizes[c] as f64 * (&centroid - &mean).norm_squared();
        within += members
            .iter()
            .map(|&i| (x.row(i) - &centroid).norm_squared())
            .sum::<f64>();
    }
    if within == 0.0 || k == n {
        return Err(Error::Contract(
            "within-class dispersion is zero; Calinski-Harabasz is undefined".into(),
        ));
    }
    let calinski_harabasz = (between / (k - 1) as f64) / (within / (n - k) as f64);

    Ok(EmbeddingEvalReport {
        silhouette: silhouette / n as f64,
        calinski_harabasz,
        neighborhood_purity: purity / n as f64,
        neighborhood,
    })
}

fn pairwise(m: &DenseMatrix) -> Vec<f64> {
    let x = m.as_matrix();
    let n = x.nrows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (x.row(i) - x.row(j)).norm();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}
