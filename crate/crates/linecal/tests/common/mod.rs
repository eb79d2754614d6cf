//! Shared test support: independent oracles and fixture loading.
#![allow(dead_code)] // each test target uses a different subset

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use linecal::{ConnectedTree, PathStep};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_replica_tree() -> ConnectedTree {
    linecal::io::load_tree(&data_dir().join("trees/ieee118_hv.json")).expect("replica tree")
}

pub fn load_field_tree() -> ConnectedTree {
    linecal::io::load_tree(&data_dir().join("trees/field_chain.json")).expect("field tree")
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), unsorted.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale: f64 = (0..n).map(|i| m[(i, i)].abs()).fold(1e-300, f64::max);

    for _ in 0..200 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off < 1e-15 * scale {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Independent TLS route: find the closest rank-deficient augmented matrix by
/// deflating the smallest singular triple (obtained from the Gram-matrix
/// eigendecomposition), then solve the corrected system by ordinary least
/// squares via normal equations.
pub fn tls_truncation_oracle(d: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let rows = d.nrows();
    let cols = d.ncols();
    let mut aug = DMatrix::zeros(rows, cols + 1);
    aug.view_mut((0, 0), (rows, cols)).copy_from(d);
    aug.view_mut((0, cols), (rows, 1)).copy_from(c);

    let gram = aug.transpose() * &aug;
    let (vals, vecs) = jacobi_eigen(&gram);
    let min_idx = (0..vals.len())
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap();
    let sigma = vals[min_idx].max(0.0).sqrt();
    let v_min = vecs.column(min_idx).clone_owned();

    let deflated = if sigma > 1e-14 {
        let u = (&aug * &v_min) / sigma;
        aug - sigma * u * v_min.transpose()
    } else {
        aug
    };

    let d_hat = deflated.columns(0, cols).clone_owned();
    let c_hat = deflated.column(cols).clone_owned();
    let normal = d_hat.transpose() * &d_hat;
    let rhs = d_hat.transpose() * c_hat;
    normal
        .cholesky()
        .expect("deflated normal matrix is positive definite")
        .solve(&rhs)
}

/// Breadth-first-search path oracle over the tree adjacency, independent of
/// the library's DFS path finder.
pub fn bfs_path(tree: &ConnectedTree, start: usize, goal: usize) -> Vec<PathStep> {
    if start == goal {
        return Vec::new();
    }
    let mut parent: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    seen.insert(start);
    let mut queue = VecDeque::from([start]);
    while let Some(bus) = queue.pop_front() {
        for &(next, branch) in tree.adjacency(bus).unwrap_or(&[]) {
            if seen.insert(next) {
                parent.insert(next, (bus, branch));
                queue.push_back(next);
            }
        }
    }
    let mut steps = Vec::new();
    let mut cursor = goal;
    while cursor != start {
        let (prev, branch) = parent[&cursor];
        steps.push(PathStep {
            branch,
            entry_bus: prev,
            exit_bus: cursor,
        });
        cursor = prev;
    }
    steps.reverse();
    steps
}

/// Betweenness of every bus in a tree: number of bus pairs whose unique path
/// passes through it, computed from component sizes after removing the bus.
pub fn tree_betweenness(tree: &ConnectedTree) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for bus in tree.buses() {
        let v = bus.id;
        let mut sizes = Vec::new();
        for &(start, _) in tree.adjacency(v).unwrap_or(&[]) {
            // component containing `start` once v is removed
            let mut seen = BTreeSet::from([v, start]);
            let mut queue = VecDeque::from([start]);
            let mut size = 1usize;
            while let Some(b) = queue.pop_front() {
                for &(next, _) in tree.adjacency(b).unwrap_or(&[]) {
                    if seen.insert(next) {
                        size += 1;
                        queue.push_back(next);
                    }
                }
            }
            sizes.push(size);
        }
        let mut pairs = 0usize;
        for i in 0..sizes.len() {
            for j in (i + 1)..sizes.len() {
                pairs += sizes[i] * sizes[j];
            }
        }
        out.insert(v, pairs);
    }
    out
}
