//! Straight-line reference implementations. Plain loops over `Vec<Vec<f64>>`
//! rows, written independently of the library's tensor code.
#![allow(dead_code, clippy::needless_range_loop)]

use czsl::model::ModelParams;
use czsl::numeric::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor<f64>) -> Mat {
    (0..t.rows()).map(|r| (0..t.cols()).map(|c| t.at(r, c)).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        if x > max {
            max = x;
        }
    }
    let mut total = 0.0;
    let mut out = Vec::new();
    for &x in v {
        let e = (x - max).exp();
        total += e;
        out.push(e);
    }
    for e in &mut out {
        *e /= total;
    }
    out
}

pub fn norm(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in v {
        s += x * x;
    }
    s.sqrt()
}

/// Cosine with both norms floored at 1e-8.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..u.len() {
        d += u[i] * v[i];
    }
    d / (norm(u).max(1e-8) * norm(v).max(1e-8))
}

pub fn column(m: &Mat, j: usize) -> Vec<f64> {
    m.iter().map(|row| row[j]).collect()
}

/// `C[p][q] = cos(F[:, p], G[:, q])`.
pub fn correlation(f: &Mat, g: &Mat) -> Mat {
    let l = f[0].len();
    let mut c = vec![vec![0.0; l]; l];
    for p in 0..l {
        for q in 0..l {
            c[p][q] = cosine(&column(f, p), &column(g, q));
        }
    }
    c
}

/// `(1/l) Σ_p softmax_q(C[p, ·])[q]`.
pub fn partner_mask(c: &Mat) -> Vec<f64> {
    let l = c.len();
    let mut m = vec![0.0; l];
    for row in c {
        let s = softmax(row);
        for q in 0..l {
            m[q] += s[q] / l as f64;
        }
    }
    m
}

/// `(1/l) Σ_q softmax_p(C[·, q])[p]`.
pub fn anchor_mask(c: &Mat) -> Vec<f64> {
    let l = c.len();
    let mut m = vec![0.0; l];
    for q in 0..l {
        let s = softmax(&column(c, q));
        for p in 0..l {
            m[p] += s[p] / l as f64;
        }
    }
    m
}

pub fn negative_mask(c: &Mat) -> Vec<f64> {
    let neg: Mat = c.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    partner_mask(&neg)
}

pub fn pool(f: &Mat, m: &[f64]) -> Vec<f64> {
    f.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..m.len() {
                s += row[j] * m[j];
            }
            s
        })
        .collect()
}

fn affine(w: &Tensor<f64>, b: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| {
            let mut s = b.data()[i];
            for j in 0..w.cols() {
                s += w.at(i, j) * x[j];
            }
            s
        })
        .collect()
}

pub fn encode_image(p: &ModelParams<f64>, f: &Tensor<f64>) -> Vec<f64> {
    let (d, l) = (f.rows(), f.cols());
    let mut mean = vec![0.0; d];
    for i in 0..d {
        for j in 0..l {
            mean[i] += f.at(i, j);
        }
        mean[i] /= l as f64;
    }
    affine(&p.visual_w, &p.visual_b, &mean)
}

pub fn encode_pair(p: &ModelParams<f64>, a: &[f64], o: &[f64]) -> Vec<f64> {
    let mut x = a.to_vec();
    x.extend_from_slice(o);
    let h: Vec<f64> = affine(&p.pair_w1, &p.pair_b1, &x).into_iter().map(|v| v.max(0.0)).collect();
    affine(&p.pair_w2, &p.pair_b2, &h)
}

/// Selection-sort ranking: repeatedly takes the highest remaining score,
/// the smallest key among equals.
pub fn rank_by<K: Ord + Clone>(items: &[(K, f64)]) -> Vec<K> {
    let mut left: Vec<(K, f64)> = items.to_vec();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (ref k, s) = left[i];
            let (ref bk, bs) = left[best];
            if s > bs || (s == bs && k < bk) {
                best = i;
            }
        }
        out.push(left.remove(best).0);
    }
    out
}
