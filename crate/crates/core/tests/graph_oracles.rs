//! Spanning-tree and graph-distance routines checked against brute-force and
//! dense-algebra references written independently here.

use nalgebra::DMatrix;
use qmst::graph::{
    build_mst, deltacon0, effective_resistance, resistance_distance, tree_metrics, MstEdge, QMst,
};
use qmst::rhoq::QDistMatrix;
use qmst::synth::Variates;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("N{i}")).collect()
}

fn random_distances(n: usize, g: &mut Variates) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 2.0 * g.uniform();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn dist_matrix(values: Vec<Vec<f64>>) -> QDistMatrix {
    QDistMatrix {
        q: 2.0,
        s: 10,
        assets: labels(values.len()),
        values,
    }
}

/// Decodes a Prüfer sequence into the edges of a labelled tree.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

fn sorted_sum(mut w: Vec<f64>) -> f64 {
    w.sort_by(f64::total_cmp);
    w.iter().sum()
}

fn brute_force_minimum(d: &[Vec<f64>]) -> f64 {
    let n = d.len();
    if n == 2 {
        return d[0][1];
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        let w = sorted_sum(prufer_edges(&seq, n).iter().map(|&(a, b)| d[a][b]).collect());
        best = best.min(w);
        let mut k = 0;
        while k < len {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == len {
            return best;
        }
    }
}

#[test]
fn mst_matches_exhaustive_enumeration() {
    let mut g = Variates::new(101, 0);
    for trial in 0..60 {
        let n = 4 + trial % 4;
        let d = random_distances(n, &mut g);
        let tree = build_mst(&dist_matrix(d.clone())).unwrap();
        let w = sorted_sum(tree.edges().iter().map(|e| e.w).collect());
        assert_eq!(w, brute_force_minimum(&d), "trial {trial}");
    }
}

#[test]
fn cayley_count_of_decoded_trees() {
    // every Prüfer sequence decodes to a distinct spanning tree: 4^2 = 16 on K4
    let mut seen = std::collections::BTreeSet::new();
    for a in 0..4 {
        for b in 0..4 {
            let mut e: Vec<(usize, usize)> = prufer_edges(&[a, b], 4)
                .into_iter()
                .map(|(x, y)| (x.min(y), x.max(y)))
                .collect();
            e.sort();
            seen.insert(e);
        }
    }
    assert_eq!(seen.len(), 16);
}

#[test]
fn mst_invariant_under_monotone_transform() {
    let mut g = Variates::new(102, 0);
    for n in [5, 9, 17, 40] {
        let d = random_distances(n, &mut g);
        let sq: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
        let a = build_mst(&dist_matrix(d)).unwrap();
        let b = build_mst(&dist_matrix(sq)).unwrap();
        let pairs = |t: &QMst| {
            let mut p: Vec<(usize, usize)> = t.edges().iter().map(|e| (e.i, e.j)).collect();
            p.sort();
            p
        };
        assert_eq!(pairs(&a), pairs(&b));
    }
}

fn random_tree(n: usize, g: &mut Variates) -> QMst {
    let seq: Vec<usize> = (0..n.saturating_sub(2))
        .map(|_| ((g.uniform() * n as f64) as usize).min(n - 1))
        .collect();
    let edges = if n == 2 { vec![(0, 1)] } else { prufer_edges(&seq, n) };
    QMst::from_edges(
        labels(n),
        edges
            .into_iter()
            .map(|(a, b)| MstEdge { i: a.min(b), j: a.max(b), w: 1.0 })
            .collect(),
    )
    .unwrap()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn gauss_jordan_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    let pivot_row = a[c].clone();
                    a[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn deltacon_oracle(a1: &[Vec<f64>], a2: &[Vec<f64>]) -> f64 {
    let deg = |a: &[Vec<f64>]| a.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let eps = 1.0 / (1.0 + deg(a1).max(deg(a2)));
    let aff = |a: &[Vec<f64>]| {
        let n = a.len();
        let m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            1.0 + eps * eps * a[i].iter().sum::<f64>()
                        } else {
                            -eps * a[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        gauss_jordan_inverse(&m)
    };
    let (s1, s2) = (aff(a1), aff(a2));
    s1.iter()
        .flatten()
        .zip(s2.iter().flatten())
        .map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn resistance_oracle(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let l = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            a[i].iter().sum::<f64>()
        } else {
            -a[i][j]
        }
    });
    let p = l.pseudo_inverse(1e-10).unwrap();
    (0..n)
        .map(|i| (0..n).map(|j| p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)]).collect())
        .collect()
}

fn path(n: usize) -> QMst {
    QMst::from_edges(labels(n), (0..n - 1).map(|i| MstEdge { i, j: i + 1, w: 1.0 }).collect()).unwrap()
}

fn star(n: usize) -> QMst {
    QMst::from_edges(labels(n), (1..n).map(|j| MstEdge { i: 0, j, w: 1.0 }).collect()).unwrap()
}

#[test]
fn deltacon_matches_dense_oracle() {
    let (p, s) = (path(4).adjacency(), star(4).adjacency());
    let d = deltacon0(&p, &s).unwrap();
    assert!(d > 0.0);
    assert!((d - deltacon_oracle(&p, &s)).abs() < 1e-9);
    assert_eq!(d, deltacon0(&s, &p).unwrap());
    assert_eq!(deltacon0(&p, &p).unwrap(), 0.0);

    let mut g = Variates::new(103, 0);
    for n in [2, 3, 6, 12, 30] {
        for _ in 0..5 {
            let a = random_tree(n, &mut g).adjacency();
            let b = random_tree(n, &mut g).adjacency();
            let d = deltacon0(&a, &b).unwrap();
            assert!((d - deltacon_oracle(&a, &b)).abs() < 1e-9, "n={n}");
        }
    }
}

#[test]
fn resistance_matches_pseudoinverse_oracle() {
    let (p, s) = (path(4).adjacency(), star(4).adjacency());
    assert!((resistance_distance(&p, &s).unwrap() - 5.0).abs() < 1e-9);
    assert_eq!(resistance_distance(&p, &p).unwrap(), 0.0);

    // mirrored path with fixed labels: 3-2-1-0 equals 0-1-2-3 as a graph
    let rev = QMst::from_edges(labels(4), (0..3).rev().map(|i| MstEdge { i, j: i + 1, w: 1.0 }).collect())
        .unwrap()
        .adjacency();
    assert!(resistance_distance(&p, &rev).unwrap().abs() < 1e-9);

    let mut g = Variates::new(104, 0);
    for n in [3, 7, 15, 40] {
        let a = random_tree(n, &mut g).adjacency();
        let b = random_tree(n, &mut g).adjacency();
        let (ra, rb) = (resistance_oracle(&a), resistance_oracle(&b));
        let r = effective_resistance(&a).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((r[i][j] - ra[i][j]).abs() < 1e-9);
            }
        }
        let mut oracle = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                oracle += (ra[i][j] - rb[i][j]).abs();
            }
        }
        assert!((resistance_distance(&a, &b).unwrap() - oracle).abs() < 1e-8 * oracle.max(1.0));
    }
}

#[test]
fn tree_resistance_equals_hop_distance() {
    let mut g = Variates::new(105, 0);
    for n in [2, 5, 20, 60] {
        let t = random_tree(n, &mut g);
        let r = effective_resistance(&t.adjacency()).unwrap();
        let hops = t.hop_distances();
        for i in 0..n {
            for j in 0..n {
                assert!((r[i][j] - hops[i][j] as f64).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn star_and_path_metrics() {
    let m = tree_metrics(&star(4));
    assert_eq!(m.k_max, 3);
    assert_eq!(m.k_argmax, "N0");
    assert!((m.avg_path_len - 1.5).abs() < 1e-12);
    let m = tree_metrics(&path(4));
    assert_eq!(m.k_max, 2);
    assert_eq!(m.k_argmax, "N1");
    assert!((m.avg_path_len - 10.0 / 6.0).abs() < 1e-12);
    let m = tree_metrics(&path(2));
    assert_eq!((m.k_max, m.avg_path_len), (1, 1.0));
}

#[test]
fn disconnected_graph_is_rejected() {
    let a = vec![
        vec![0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 0.0],
    ];
    assert!(effective_resistance(&a).is_err());
}
