//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use cross_core::agents::Mlp;
use cross_core::kinematics::{JointAngles, KinematicChain};

pub type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn identity() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn rot_x(t: f64) -> M4 {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn rot_z(t: f64) -> M4 {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn trans(x: f64, y: f64, z: f64) -> M4 {
    let mut m = identity();
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    m
}

/// End-effector position from a plain product of 4x4 homogeneous matrices.
pub fn fk_oracle(chain: &KinematicChain, q: &JointAngles) -> [f64; 3] {
    let mut t = identity();
    for (link, angle) in chain.links().iter().zip(q.0) {
        t = mul(&t, &rot_x(link.alpha));
        t = mul(&t, &trans(link.a, 0.0, 0.0));
        t = mul(&t, &rot_z(angle + link.theta_offset));
        t = mul(&t, &trans(0.0, 0.0, link.d));
    }
    t = mul(&t, &trans(0.0, 0.0, chain.flange()));
    [t[0][3], t[1][3], t[2][3]]
}

/// Forward pass recomputed element by element from the layer blocks.
pub fn mlp_oracle(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for l in 0..net.layer_count() {
        let (w, b) = net.layer(l);
        let n_in = a.len();
        let mut z = vec![0.0; b.len()];
        for j in 0..b.len() {
            let mut s = b[j];
            for i in 0..n_in {
                s += w[j * n_in + i] * a[i];
            }
            z[j] = if l + 1 < net.layer_count() && s < 0.0 { 0.0 } else { s };
        }
        a = z;
    }
    a
}

/// Central differences of `f` at `params`.
pub fn finite_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / (|a| + |b|)` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let denom = norm(a) + norm(b);
    if denom == 0.0 {
        0.0
    } else {
        norm(&diff) / denom
    }
}

/// Joint value `k` of `n` evenly spaced values from `lo` to `hi`.
pub fn grid_value(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k == n - 1 {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Smallest distance from `goal` over every configuration of the n-point joint grid.
pub fn best_grid_distance(chain: &KinematicChain, n: usize, goal: [f64; 3]) -> f64 {
    let lim = chain.limits();
    let grid: Vec<Vec<f64>> =
        (0..7).map(|j| (0..n).map(|k| grid_value(lim.min[j], lim.max[j], n, k)).collect()).collect();
    let mut best = f64::INFINITY;
    let mut idx = [0usize; 7];
    loop {
        let q = JointAngles(std::array::from_fn(|j| grid[j][idx[j]]));
        let p = fk_oracle(chain, &q);
        let d = ((p[0] - goal[0]).powi(2) + (p[1] - goal[1]).powi(2) + (p[2] - goal[2]).powi(2)).sqrt();
        best = best.min(d);
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == 7 {
                return best;
            }
        }
    }
}
