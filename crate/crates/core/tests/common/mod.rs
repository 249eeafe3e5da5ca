#![allow(dead_code)]

use flowtree::experiment::{gen_network, FamilyChoice, Template};
use flowtree::network::{CandidateEdge, EdgeKey};
use flowtree::{FlowFunctionSpec, NetworkGraph, NodeId};

pub fn key(a: usize, b: usize) -> EdgeKey {
    EdgeKey::new(NodeId(a), NodeId(b))
}

pub fn edge(a: usize, b: usize, operational: bool, flow: FlowFunctionSpec) -> CandidateEdge {
    CandidateEdge { u: NodeId(a), v: NodeId(b), operational, flow }
}

/// Random radial network with `n` nodes and up to `n` fictitious edges.
pub fn random_network(n: usize, family: FamilyChoice, seed: u64) -> NetworkGraph {
    let fictitious = n.min(n * (n - 1) / 2 - (n - 1));
    gen_network(Template::RandomRadial, n, fictitious, family, seed).unwrap()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        assert!(a[p][col].abs() > 1e-300, "singular");
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * y;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            if a[i][l] != 0.0 {
                for j in 0..m {
                    out[i][j] += a[i][l] * b[l][j];
                }
            }
        }
    }
    out
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.first().map_or(0, Vec::len);
    (0..m).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn to_f64(a: &[Vec<i8>]) -> Vec<Vec<f64>> {
    a.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
