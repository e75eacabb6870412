//! Seeded graph generators. Every generator places vertices in the plane so
//! that Gaussian weights can be derived from coordinates.

use std::collections::HashSet;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::ParameterGraph;

fn circle(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            vec![a.cos(), a.sin()]
        })
        .collect()
}

fn build(coords: Vec<Vec<f64>>, edges: &[(usize, usize)]) -> Result<ParameterGraph> {
    let n = coords.len();
    ParameterGraph::new(coords, vec![0.0; n], edges, 2)
}

/// `n` vertices evenly spaced on the unit circle.
pub fn cycle(n: usize) -> Result<ParameterGraph> {
    if n < 3 {
        return Err(Error::invalid("a cycle needs at least 3 vertices"));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    build(circle(n), &edges)
}

/// Complete graph with vertices on the unit circle.
pub fn complete(n: usize) -> Result<ParameterGraph> {
    if n < 2 {
        return Err(Error::invalid("a complete graph needs at least 2 vertices"));
    }
    let edges: Vec<_> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    build(circle(n), &edges)
}

/// `rows x cols` lattice with unit spacing.
pub fn grid(rows: usize, cols: usize) -> Result<ParameterGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid dimensions must be positive"));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let coords = (0..rows * cols)
        .map(|k| vec![(k % cols) as f64, (k / cols) as f64])
        .collect();
    build(coords, &edges)
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Simple `d`-regular graph from the configuration model. Self-loops and
/// repeated edges left by the random pairing are removed with random
/// double-edge switches. Vertices are scattered uniformly in the unit square.
pub fn random_regular<R: Rng>(n: usize, d: usize, rng: &mut R) -> Result<ParameterGraph> {
    if d >= n || (n * d) % 2 == 1 {
        return Err(Error::invalid(format!(
            "no simple {d}-regular graph on {n} vertices"
        )));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    stubs.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = stubs.chunks_exact(2).map(|c| key(c[0], c[1])).collect();

    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(pairs.len());
    let mut bad = Vec::new();
    let mut is_bad = vec![false; pairs.len()];
    for (k, &p) in pairs.iter().enumerate() {
        if p.0 == p.1 || !seen.insert(p) {
            bad.push(k);
            is_bad[k] = true;
        }
    }
    let m = pairs.len();
    let mut attempts = 0usize;
    while let Some(&k) = bad.last() {
        attempts += 1;
        if attempts > 1000 * m.max(1) {
            return Err(Error::invalid("random-regular repair did not terminate"));
        }
        let j = rng.gen_range(0..m);
        if is_bad[j] {
            continue;
        }
        let (a, b) = pairs[k];
        let (c, e) = pairs[j];
        let (x, y) = if rng.gen_bool(0.5) {
            (key(a, c), key(b, e))
        } else {
            (key(a, e), key(b, c))
        };
        let fine = |p: (usize, usize)| p.0 != p.1 && !seen.contains(&p);
        if !fine(x) || !fine(y) || x == y {
            continue;
        }
        // pairs[j] is simple and owns its entry in `seen`; a bad pair owns
        // nothing, since a duplicate's entry belongs to its twin
        seen.remove(&pairs[j]);
        seen.insert(x);
        seen.insert(y);
        pairs[k] = x;
        pairs[j] = y;
        is_bad[k] = false;
        bad.pop();
    }
    let coords = (0..n)
        .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
        .collect();
    let graph = build(coords, &pairs)?;
    Ok(graph)
}

/// Unit-circle ring with jittered positions plus `chords` random extra
/// edges between non-adjacent vertices.
pub fn noisy_ring_with_chords<R: Rng>(
    n: usize,
    chords: usize,
    noise: f64,
    rng: &mut R,
) -> Result<ParameterGraph> {
    if n < 4 {
        return Err(Error::invalid("noisy ring needs at least 4 vertices"));
    }
    let available = n * (n - 3) / 2;
    if chords > available {
        return Err(Error::invalid(format!(
            "at most {available} chords fit on {n} vertices"
        )));
    }
    let coords: Vec<Vec<f64>> = circle(n)
        .into_iter()
        .map(|p| {
            p.into_iter()
                .map(|x| x + noise * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| key(i, (i + 1) % n)).collect();
    let mut seen: HashSet<_> = edges.iter().copied().collect();
    while edges.len() < n + chords {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let p = key(a, b);
        if a != b && seen.insert(p) {
            edges.push(p);
        }
    }
    build(coords, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::betti;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes() {
        let c = cycle(10).unwrap();
        assert_eq!((c.vertex_count(), c.edge_count()), (10, 10));
        let g = grid(3, 4).unwrap();
        assert_eq!(g.edge_count(), 3 * 3 + 2 * 4);
        assert!(cycle(2).is_err());
        assert_eq!(complete(5).unwrap().edge_count(), 10);
    }

    #[test]
    fn regular_is_simple_and_regular() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [10, 50, 500] {
            let g = random_regular(n, 4, &mut rng).unwrap();
            assert!((0..n).all(|v| g.degree(v) == 4));
            assert_eq!(g.edge_count(), 2 * n);
        }
        assert!(random_regular(5, 3, &mut rng).is_err());
    }

    #[test]
    fn noisy_ring_is_seeded() {
        let a = noisy_ring_with_chords(32, 8, 0.05, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = noisy_ring_with_chords(32, 8, 0.05, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.edge_count(), 40);
        assert_eq!(betti(&a).b1, 9);
    }
}
