//! Chord diagrams on cyclically ordered boundary points: non-crossing perfect
//! matchings (counted by Catalan numbers) and non-crossing partial matchings
//! (counted by Motzkin numbers), plus the gluing operation that counts closed
//! loops when an interior connectivity meets an exterior one.

use std::fmt;

use crate::error::{Error, Result};

/// A non-crossing (possibly partial) matching of `point_count` points labeled
/// `0..point_count` in cyclic anticlockwise order.
///
/// Chords are stored as `(min, max)` pairs sorted ascending; unmatched points
/// are sorted ascending. Two diagrams compare equal iff they pair the same
/// points, so the type is usable as an ordered map key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChordDiagram {
    point_count: usize,
    chords: Vec<(usize, usize)>,
    unmatched: Vec<usize>,
}

impl ChordDiagram {
    /// Builds a diagram from a chord list, validating that the chords are
    /// pairwise disjoint, in range, and non-crossing in cyclic order.
    pub fn new(point_count: usize, chords: &[(usize, usize)]) -> Result<Self> {
        let mut seen = vec![false; point_count];
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(chords.len());
        for &(x, y) in chords {
            if x == y || x >= point_count || y >= point_count {
                return Err(Error::InvalidArgument(format!(
                    "chord ({x},{y}) out of range for {point_count} points"
                )));
            }
            if seen[x] || seen[y] {
                return Err(Error::InvalidArgument(format!(
                    "point reused by chord ({x},{y})"
                )));
            }
            seen[x] = true;
            seen[y] = true;
            norm.push((x.min(y), x.max(y)));
        }
        norm.sort_unstable();
        for (i, &(a, b)) in norm.iter().enumerate() {
            for &(c, d) in &norm[i + 1..] {
                // cyclic interleaving reduces to strict nesting/disjointness on
                // sorted (min,max) pairs
                if a < c && c < b && b < d {
                    return Err(Error::InvalidArgument(format!(
                        "chords ({a},{b}) and ({c},{d}) cross"
                    )));
                }
            }
        }
        let unmatched = (0..point_count).filter(|&p| !seen[p]).collect();
        Ok(Self {
            point_count,
            chords: norm,
            unmatched,
        })
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn chords(&self) -> &[(usize, usize)] {
        &self.chords
    }

    pub fn unmatched(&self) -> &[usize] {
        &self.unmatched
    }

    pub fn is_perfect(&self) -> bool {
        self.unmatched.is_empty()
    }

    /// Partner of `p` if it is matched.
    pub fn partner(&self, p: usize) -> Option<usize> {
        self.chords.iter().find_map(|&(x, y)| {
            if x == p {
                Some(y)
            } else if y == p {
                Some(x)
            } else {
                None
            }
        })
    }

    /// Canonical string encoding used as a report key, e.g. `"(0-1)(2-5);u:3,4"`.
    pub fn encode(&self) -> String {
        let mut s = String::new();
        for &(x, y) in &self.chords {
            s.push_str(&format!("({x}-{y})"));
        }
        if !self.unmatched.is_empty() {
            s.push_str(";u:");
            let list: Vec<String> = self.unmatched.iter().map(|p| p.to_string()).collect();
            s.push_str(&list.join(","));
        }
        s
    }
}

impl fmt::Display for ChordDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// All non-crossing perfect matchings (`perfect = true`) or all non-crossing
/// partial matchings (`perfect = false`) of `m` points, each exactly once.
///
/// Order is deterministic: the first free point either stays unmatched
/// (partial mode) or pairs with each admissible partner in increasing order,
/// recursing on the enclosed and remaining segments.
pub fn enumerate_diagrams(m: usize, perfect: bool) -> Result<Vec<ChordDiagram>> {
    if perfect && !m.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "perfect matching requested for odd point count {m}"
        )));
    }
    let points: Vec<usize> = (0..m).collect();
    enumerate_rec(&points, perfect)
        .into_iter()
        .map(|chords| ChordDiagram::new(m, &chords))
        .collect()
}

fn enumerate_rec(points: &[usize], perfect: bool) -> Vec<Vec<(usize, usize)>> {
    let Some((&first, rest)) = points.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = Vec::new();
    if !perfect {
        out.extend(enumerate_rec(rest, perfect));
    }
    for (i, &p) in rest.iter().enumerate() {
        // pairing first with p splits the rest into an enclosed segment and a
        // tail; non-crossing diagrams never connect the two
        if perfect && i % 2 != 0 {
            continue;
        }
        let inner_list = enumerate_rec(&rest[..i], perfect);
        let outer_list = enumerate_rec(&rest[i + 1..], perfect);
        for inner in &inner_list {
            for outer in &outer_list {
                let mut matching = Vec::with_capacity(1 + inner.len() + outer.len());
                matching.push((first, p));
                matching.extend_from_slice(inner);
                matching.extend_from_slice(outer);
                out.push(matching);
            }
        }
    }
    out
}

/// Catalan number C_j (non-crossing perfect matchings of 2j points).
pub fn catalan(j: usize) -> u64 {
    let mut c = vec![0u64; j + 1];
    c[0] = 1;
    for m in 1..=j {
        c[m] = (0..m).map(|i| c[i] * c[m - 1 - i]).sum();
    }
    c[j]
}

/// Motzkin number M_m (non-crossing partial matchings of m points).
pub fn motzkin(m: usize) -> u64 {
    let mut v = vec![0u64; m.max(1) + 1];
    v[0] = 1;
    if m >= 1 {
        v[1] = 1;
    }
    for k in 2..=m {
        v[k] = v[k - 1] + (0..=k - 2).map(|i| v[i] * v[k - 2 - i]).sum::<u64>();
    }
    v[m]
}

/// Result of gluing two chord diagrams on the same point set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlueResult {
    /// Closed cycles formed by alternating inner and outer chords.
    pub closed_loops: usize,
    /// Maximal open chains, each listed from its smaller endpoint; isolated
    /// points (unmatched on both sides) appear as singleton chains.
    pub chains: Vec<Vec<usize>>,
}

/// Treats the chords of `inner` and `outer` as edges on the shared point set
/// and decomposes the union into closed loops and open chains.
pub fn glue(inner: &ChordDiagram, outer: &ChordDiagram) -> Result<GlueResult> {
    if inner.point_count != outer.point_count {
        return Err(Error::InvalidArgument(format!(
            "glue of diagrams on {} and {} points",
            inner.point_count, outer.point_count
        )));
    }
    let m = inner.point_count;
    let inner_p: Vec<Option<usize>> = (0..m).map(|p| inner.partner(p)).collect();
    let outer_p: Vec<Option<usize>> = (0..m).map(|p| outer.partner(p)).collect();

    let mut visited = vec![false; m];
    let mut closed_loops = 0;
    let mut chains = Vec::new();

    // open chains start at points unmatched on at least one side
    for start in 0..m {
        if visited[start] || (inner_p[start].is_some() && outer_p[start].is_some()) {
            continue;
        }
        visited[start] = true;
        let mut chain = vec![start];
        // walk alternating sides, beginning on whichever side matches start
        let mut use_inner = inner_p[start].is_some();
        let mut cur = start;
        while let Some(next) = if use_inner { inner_p[cur] } else { outer_p[cur] } {
            visited[next] = true;
            chain.push(next);
            cur = next;
            use_inner = !use_inner;
        }
        if *chain.last().unwrap() < chain[0] {
            chain.reverse();
        }
        chains.push(chain);
    }
    chains.sort();

    // whatever remains is fully matched on both sides: cycles
    for start in 0..m {
        if visited[start] {
            continue;
        }
        closed_loops += 1;
        let mut cur = start;
        let mut use_inner = true;
        loop {
            visited[cur] = true;
            let next = if use_inner { inner_p[cur] } else { outer_p[cur] }
                .expect("cycle points are matched on both sides");
            use_inner = !use_inner;
            cur = next;
            if cur == start && use_inner {
                break;
            }
        }
    }

    Ok(GlueResult {
        closed_loops,
        chains,
    })
}
