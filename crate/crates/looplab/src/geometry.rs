//! Rhombi with unit sides, simply connected rhombic domains, their boundary
//! data, and the star-triangle recombination move.
//!
//! Conventions frozen here and relied on everywhere else:
//!
//! - Rhombus vertices are stored anticlockwise with the tagged corner first;
//!   the interior angle at the tagged corner equals the opening angle.
//! - Side `k` runs from vertex `k` to vertex `k + 1` (mod 4), so boundary
//!   sides inherit the anticlockwise orientation of their rhombus.
//! - The domain boundary is the anticlockwise cycle of unshared sides,
//!   starting at the lexicographically smallest midpoint.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for coincidence of points that should be equal exactly.
const GEOM_TOL: f64 = 1e-9;

/// Reference to side `k` of the rhombus at position `r` in a domain.
pub type SideRef = (usize, usize);

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// A unit-side rhombus with a tagged corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhombus {
    id: usize,
    opening: f64,
    vertices: [Complex64; 4],
}

impl Rhombus {
    /// Builds from the tagged corner and the two anticlockwise unit side
    /// directions emanating from it.
    pub fn new(id: usize, anchor: Complex64, d1: Complex64, d2: Complex64, opening: f64) -> Result<Self> {
        Self::from_vertices(id, [anchor, anchor + d1, anchor + d1 + d2, anchor + d2], opening)
    }

    /// Builds from an explicit vertex list (anticlockwise, tagged corner
    /// first), validating unit sides, orientation, closure, and that the
    /// interior angle at the tag equals `opening`.
    pub fn from_vertices(id: usize, vertices: [Complex64; 4], opening: f64) -> Result<Self> {
        if !(opening > 0.0 && opening < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!(
                "opening angle {opening} outside (0, pi)"
            )));
        }
        let d1 = vertices[1] - vertices[0];
        let d2 = vertices[3] - vertices[0];
        for (k, d) in [(0, d1), (3, d2)] {
            if (d.norm() - 1.0).abs() > GEOM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "side at vertex {k} of rhombus {id} has length {}",
                    d.norm()
                )));
            }
        }
        if cross(d1, d2) <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "vertices of rhombus {id} are not anticlockwise"
            )));
        }
        let closure = vertices[2] - (vertices[1] + vertices[3] - vertices[0]);
        if closure.norm() > GEOM_TOL {
            return Err(Error::InvalidArgument(format!(
                "vertices of rhombus {id} do not close a rhombus (defect {})",
                closure.norm()
            )));
        }
        let angle = (d2 / d1).arg();
        if (angle - opening).abs() > GEOM_TOL {
            return Err(Error::InvalidArgument(format!(
                "interior angle {angle} at the tagged corner of rhombus {id} \
                 does not equal the opening {opening}"
            )));
        }
        Ok(Self {
            id,
            opening,
            vertices,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn opening_angle(&self) -> f64 {
        self.opening
    }

    pub fn vertices(&self) -> &[Complex64; 4] {
        &self.vertices
    }

    /// Vector of side `k`, from vertex `k` to vertex `k + 1`.
    pub fn side(&self, k: usize) -> Complex64 {
        self.vertices[(k + 1) % 4] - self.vertices[k]
    }

    /// Midpoint of side `k`.
    pub fn midpoint(&self, k: usize) -> Complex64 {
        (self.vertices[k] + self.vertices[(k + 1) % 4]) / 2.0
    }

    /// Interior angle at vertex `k`: the opening at even corners, its
    /// supplement at odd corners.
    pub fn interior_angle(&self, k: usize) -> f64 {
        if k.is_multiple_of(2) {
            self.opening
        } else {
            std::f64::consts::PI - self.opening
        }
    }

    /// Direction of the tag axis, from the tagged corner to its opposite.
    pub fn tag_axis(&self) -> Complex64 {
        self.vertices[2] - self.vertices[0]
    }

    /// The same rhombus re-tagged at the adjacent corner, which swaps the
    /// diagonal family and replaces the opening by its supplement. Used to
    /// demonstrate that calibrated identities fail under the wrong tag.
    pub fn retag_adjacent(&self) -> Rhombus {
        let v = self.vertices;
        Rhombus {
            id: self.id,
            opening: std::f64::consts::PI - self.opening,
            vertices: [v[1], v[2], v[3], v[0]],
        }
    }

    /// Whether two rhombi are the same tile with the same tag family: equal
    /// openings and equal vertex cycles, allowing the tag to sit at either
    /// end of the same diagonal. Every derived quantity (side states,
    /// turning angles, weights) is invariant under that end swap.
    pub fn same_tile(&self, other: &Rhombus) -> bool {
        if (self.opening - other.opening).abs() > GEOM_TOL {
            return false;
        }
        let direct = (0..4).all(|k| (self.vertices[k] - other.vertices[k]).norm() <= GEOM_TOL);
        let end_swapped =
            (0..4).all(|k| (self.vertices[k] - other.vertices[(k + 2) % 4]).norm() <= GEOM_TOL);
        direct || end_swapped
    }

    fn transformed(&self, rotation: Complex64, translation: Complex64) -> Rhombus {
        Rhombus {
            id: self.id,
            opening: self.opening,
            vertices: self.vertices.map(|v| rotation * v + translation),
        }
    }

    fn with_id(&self, id: usize) -> Rhombus {
        Rhombus { id, ..self.clone() }
    }
}

/// Registry assigning stable indices to points, merging points closer than
/// the geometric tolerance.
#[derive(Default)]
struct PointIndex {
    points: Vec<Complex64>,
}

impl PointIndex {
    fn id_of(&mut self, z: Complex64) -> usize {
        if let Some(i) = self.find(z) {
            return i;
        }
        self.points.push(z);
        self.points.len() - 1
    }

    fn find(&self, z: Complex64) -> Option<usize> {
        self.points.iter().position(|p| (p - z).norm() <= GEOM_TOL)
    }

    fn len(&self) -> usize {
        self.points.len()
    }
}

/// A simply connected domain tiled by unit rhombi, with precomputed
/// adjacency and anticlockwise boundary data.
#[derive(Debug, Clone)]
pub struct RhombicDomain {
    rhombi: Vec<Rhombus>,
    shared: Vec<(SideRef, SideRef)>,
    internal_index: HashMap<SideRef, usize>,
    boundary: Vec<SideRef>,
    boundary_mid: Vec<Complex64>,
    boundary_delta: Vec<Complex64>,
    exterior_angles: Vec<f64>,
    b_index: HashMap<SideRef, usize>,
}

impl RhombicDomain {
    /// Validates the tiling and computes adjacency and boundary data.
    ///
    /// Requirements: rhombus ids equal their positions, sides that meet
    /// coincide exactly (up to tolerance), the union is simply connected,
    /// and the boundary is a single simple anticlockwise cycle.
    pub fn new(rhombi: Vec<Rhombus>) -> Result<Self> {
        if rhombi.is_empty() {
            return Err(Error::InvalidArgument("empty domain".into()));
        }
        for (i, r) in rhombi.iter().enumerate() {
            if r.id() != i {
                return Err(Error::InvalidArgument(format!(
                    "rhombus id {} at position {i}; ids must equal positions",
                    r.id()
                )));
            }
        }

        // classify sides by midpoint: one occupant = boundary, two = shared
        let mut mids = PointIndex::default();
        let mut occupants: HashMap<usize, Vec<SideRef>> = HashMap::new();
        for (i, r) in rhombi.iter().enumerate() {
            for k in 0..4 {
                let id = mids.id_of(r.midpoint(k));
                occupants.entry(id).or_default().push((i, k));
            }
        }
        let mut shared = Vec::new();
        let mut boundary_sides = Vec::new();
        for occ in occupants.values() {
            match occ.as_slice() {
                [s] => boundary_sides.push(*s),
                [s1, s2] => {
                    let (a, b) = if s1 < s2 { (*s1, *s2) } else { (*s2, *s1) };
                    let (ra, rb) = (&rhombi[a.0], &rhombi[b.0]);
                    // shared sides must coincide with reversed orientation
                    let ha = ra.vertices[a.1];
                    let ta = ra.vertices[(a.1 + 1) % 4];
                    let hb = rb.vertices[b.1];
                    let tb = rb.vertices[(b.1 + 1) % 4];
                    if (ha - tb).norm() > GEOM_TOL || (ta - hb).norm() > GEOM_TOL {
                        return Err(Error::EmbeddingInvalid(format!(
                            "sides {a:?} and {b:?} meet at a midpoint without coinciding"
                        )));
                    }
                    shared.push((a, b));
                }
                occ => {
                    return Err(Error::EmbeddingInvalid(format!(
                        "midpoint shared by more than two sides: {occ:?}"
                    )));
                }
            }
        }
        shared.sort_unstable();
        let mut internal_index = HashMap::new();
        for (idx, &(a, b)) in shared.iter().enumerate() {
            internal_index.insert(a, idx);
            internal_index.insert(b, idx);
        }

        // chain the boundary anticlockwise, starting at the smallest midpoint
        let mut verts = PointIndex::default();
        let mut start_at: HashMap<usize, SideRef> = HashMap::new();
        for &(i, k) in &boundary_sides {
            let vid = verts.id_of(rhombi[i].vertices[k]);
            if start_at.insert(vid, (i, k)).is_some() {
                return Err(Error::EmbeddingInvalid(
                    "boundary touches itself at a vertex".into(),
                ));
            }
        }
        let quant = |z: Complex64| ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64);
        let first = *boundary_sides
            .iter()
            .min_by_key(|&&(i, k)| quant(rhombi[i].midpoint(k)))
            .ok_or_else(|| Error::EmbeddingInvalid("domain has no boundary".into()))?;
        let mut boundary = vec![first];
        loop {
            let (i, k) = *boundary.last().unwrap();
            let head = rhombi[i].vertices[(k + 1) % 4];
            let vid = verts
                .find(head)
                .ok_or_else(|| Error::EmbeddingInvalid("boundary chain breaks".into()))?;
            let next = *start_at
                .get(&vid)
                .ok_or_else(|| Error::EmbeddingInvalid("boundary chain breaks".into()))?;
            if next == first {
                break;
            }
            boundary.push(next);
            if boundary.len() > boundary_sides.len() {
                return Err(Error::EmbeddingInvalid("boundary does not close".into()));
            }
        }
        if boundary.len() != boundary_sides.len() {
            return Err(Error::EmbeddingInvalid(
                "boundary splits into several cycles; domain is not simply connected".into(),
            ));
        }

        let boundary_mid: Vec<Complex64> = boundary.iter().map(|&(i, k)| rhombi[i].midpoint(k)).collect();
        let boundary_delta: Vec<Complex64> = boundary.iter().map(|&(i, k)| rhombi[i].side(k)).collect();
        let closure: Complex64 = boundary_delta.iter().sum();
        if closure.norm() > GEOM_TOL {
            return Err(Error::EmbeddingInvalid(format!(
                "boundary displacement sum {} is not zero",
                closure.norm()
            )));
        }
        let starts: Vec<Complex64> = boundary.iter().map(|&(i, k)| rhombi[i].vertices[k]).collect();
        let area: f64 = (0..starts.len())
            .map(|j| cross(starts[j], starts[(j + 1) % starts.len()]) / 2.0)
            .sum();
        if area <= 0.0 {
            return Err(Error::EmbeddingInvalid(
                "boundary cycle is not anticlockwise".into(),
            ));
        }

        let m = boundary.len();
        let exterior_angles: Vec<f64> = (0..m)
            .map(|j| (boundary_delta[(j + 1) % m] / boundary_delta[j]).arg())
            .collect();
        let b_index: HashMap<SideRef, usize> =
            boundary.iter().enumerate().map(|(j, &s)| (s, j)).collect();

        // simple connectivity: vertices - edges + faces must equal 1
        let mut all_verts = PointIndex::default();
        for r in &rhombi {
            for v in r.vertices() {
                all_verts.id_of(*v);
            }
        }
        let vertices = all_verts.len();
        let edges = 4 * rhombi.len() - shared.len();
        let euler = vertices as i64 - edges as i64 + rhombi.len() as i64;
        if euler != 1 {
            return Err(Error::EmbeddingInvalid(format!(
                "Euler characteristic {euler}; the tiling is not a simply connected disk"
            )));
        }

        Ok(Self {
            rhombi,
            shared,
            internal_index,
            boundary,
            boundary_mid,
            boundary_delta,
            exterior_angles,
            b_index,
        })
    }

    pub fn rhombi(&self) -> &[Rhombus] {
        &self.rhombi
    }

    /// Shared sides as sorted pairs, in a stable order.
    pub fn adjacency(&self) -> &[(SideRef, SideRef)] {
        &self.shared
    }

    /// Boundary sides in anticlockwise order.
    pub fn boundary(&self) -> &[SideRef] {
        &self.boundary
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn boundary_midpoint(&self, j: usize) -> Complex64 {
        self.boundary_mid[j]
    }

    pub fn boundary_delta(&self, j: usize) -> Complex64 {
        self.boundary_delta[j]
    }

    /// Exterior turning angle between boundary sides `j` and `j + 1`.
    pub fn exterior_angle(&self, j: usize) -> f64 {
        self.exterior_angles[j]
    }

    /// Boundary position of a side, if it lies on the boundary.
    pub fn boundary_index(&self, side: SideRef) -> Option<usize> {
        self.b_index.get(&side).copied()
    }

    /// Index of a shared side in [`Self::adjacency`], if internal.
    pub fn internal_side_index(&self, side: SideRef) -> Option<usize> {
        self.internal_index.get(&side).copied()
    }

    /// The coinciding side of the neighboring rhombus, if internal.
    pub fn partner_side(&self, side: SideRef) -> Option<SideRef> {
        let idx = self.internal_side_index(side)?;
        let (a, b) = self.shared[idx];
        Some(if a == side { b } else { a })
    }

    /// Boundary position of the side whose midpoint coincides with `z`
    /// within tolerance.
    pub fn boundary_index_at(&self, z: Complex64) -> Result<usize> {
        self.boundary_mid
            .iter()
            .position(|m| (m - z).norm() <= GEOM_TOL)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no boundary midpoint at {z}"))
            })
    }
}

/// A train track: the maximal strip of rhombi crossed through opposite
/// sides, entering and leaving the domain at boundary sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Transversal {
    /// Common direction of the crossed sides, normalized to `[0, pi)`.
    pub direction: f64,
    /// Crossed sides in order: entry boundary side, internal sides (each as
    /// its lexicographically smaller reference), exit boundary side.
    pub member_sides: Vec<SideRef>,
    /// Rhombi traversed, in order.
    pub rhombi: Vec<usize>,
}

/// Traces all train tracks of the domain and validates that no track
/// crosses itself and no pair of tracks crosses twice.
pub fn trace_train_tracks(domain: &RhombicDomain) -> Result<Vec<Transversal>> {
    let mut used = vec![false; domain.boundary_len()];
    let mut tracks = Vec::new();
    for start in 0..domain.boundary_len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (mut i, mut k) = domain.boundary()[start];
        let entry_side = (i, k);
        let mut member_sides = vec![entry_side];
        let mut rhombi = Vec::new();
        loop {
            if rhombi.contains(&i) {
                return Err(Error::EmbeddingInvalid(format!(
                    "train track crosses rhombus {i} twice"
                )));
            }
            rhombi.push(i);
            let out = (i, (k + 2) % 4);
            match domain.partner_side(out) {
                Some((ni, nk)) => {
                    member_sides.push(out.min((ni, nk)));
                    (i, k) = (ni, nk);
                }
                None => {
                    member_sides.push(out);
                    let j = domain
                        .boundary_index(out)
                        .expect("unshared side lies on the boundary");
                    used[j] = true;
                    break;
                }
            }
        }
        let d = domain.rhombi()[entry_side.0].side(entry_side.1);
        let direction = d.arg().rem_euclid(std::f64::consts::PI);
        tracks.push(Transversal {
            direction,
            member_sides,
            rhombi,
        });
    }
    for (t, a) in tracks.iter().enumerate() {
        for b in tracks.iter().skip(t + 1) {
            let crossings = a.rhombi.iter().filter(|r| b.rhombi.contains(r)).count();
            if crossings > 1 {
                return Err(Error::EmbeddingInvalid(
                    "two train tracks cross more than once".into(),
                ));
            }
        }
    }
    Ok(tracks)
}

fn require_convex(name: &str, angle: f64) -> Result<()> {
    if !(angle > 0.0 && angle < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {angle} outside (0, pi)"
        )));
    }
    Ok(())
}

/// A single rhombus with opening angle `alpha`, tagged at the origin.
pub fn make_domain_single(alpha: f64) -> Result<RhombicDomain> {
    require_convex("alpha", alpha)?;
    let r = Rhombus::new(
        0,
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::from_polar(1.0, alpha),
        alpha,
    )?;
    RhombicDomain::new(vec![r])
}

/// Two rhombi sharing a side, with opening angles `alpha` and `beta` and
/// collinear tag axes.
pub fn make_domain_pair(alpha: f64, beta: f64) -> Result<RhombicDomain> {
    require_convex("alpha", alpha)?;
    require_convex("beta", beta)?;
    let v1 = Complex64::new(1.0, 0.0);
    let v2 = Complex64::from_polar(1.0, alpha);
    let w = Complex64::from_polar(1.0, alpha + beta - std::f64::consts::PI);
    let r0 = Rhombus::new(0, Complex64::new(0.0, 0.0), v1, v2, alpha)?;
    let r1 = Rhombus::new(1, v1 + v2, -v2, w, beta)?;
    RhombicDomain::new(vec![r0, r1])
}

/// The two ways of tiling a hexagon with three rhombi.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HexArrangement {
    /// The three rhombi meet at an interior vertex on the hexagon's center
    /// side of the tagged rhombus.
    Star,
    /// The recombined arrangement with the other interior vertex.
    Triangle,
}

impl HexArrangement {
    pub fn other(self) -> Self {
        match self {
            HexArrangement::Star => HexArrangement::Triangle,
            HexArrangement::Triangle => HexArrangement::Star,
        }
    }
}

fn hexagon_rhombi(alpha: f64, beta: f64, arrangement: HexArrangement) -> Result<[Rhombus; 3]> {
    let gamma = 2.0 * std::f64::consts::PI - alpha - beta;
    let p = Complex64::new(1.0, 0.0);
    let q = Complex64::from_polar(1.0, std::f64::consts::PI - alpha);
    let r = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI - alpha - beta);
    Ok(match arrangement {
        HexArrangement::Star => [
            Rhombus::new(0, p, q, -p, alpha)?,
            Rhombus::new(1, q, r, -q, beta)?,
            Rhombus::new(2, q, p, r, gamma)?,
        ],
        HexArrangement::Triangle => {
            let c = p + r;
            [
                Rhombus::new(0, c, q, -p, alpha)?,
                Rhombus::new(1, c, -r, q, beta)?,
                Rhombus::new(2, Complex64::new(0.0, 0.0), p, r, gamma)?,
            ]
        }
    })
}

/// A hexagon of three rhombi with opening angles `alpha`, `beta`, and
/// `gamma` (in rhombus order 0, 1, 2), which must sum to `2 pi`.
pub fn make_domain_hexagon(
    alpha: f64,
    beta: f64,
    gamma: f64,
    arrangement: HexArrangement,
) -> Result<RhombicDomain> {
    require_convex("alpha", alpha)?;
    require_convex("beta", beta)?;
    require_convex("gamma", gamma)?;
    if (alpha + beta + gamma - 2.0 * std::f64::consts::PI).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "opening angles sum to {}, expected 2 pi",
            alpha + beta + gamma
        )));
    }
    RhombicDomain::new(hexagon_rhombi(alpha, beta, arrangement)?.to_vec())
}

/// A hexagon plus a fourth rhombus of opening `delta` glued below its base
/// side, so that star-triangle recombination of the hexagon leaves one
/// rhombus untouched.
pub fn make_domain_four(
    alpha: f64,
    beta: f64,
    delta: f64,
    arrangement: HexArrangement,
) -> Result<RhombicDomain> {
    require_convex("delta", delta)?;
    let gamma = 2.0 * std::f64::consts::PI - alpha - beta;
    require_convex("gamma", gamma)?;
    let mut rhombi = hexagon_rhombi(alpha, beta, arrangement)?.to_vec();
    let w = Complex64::from_polar(1.0, delta);
    rhombi.push(Rhombus::new(3, -w, Complex64::new(1.0, 0.0), w, delta)?);
    RhombicDomain::new(rhombi)
}

const PERMS3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Replaces the hexagon formed by the three listed rhombi with the other
/// arrangement of the same hexagon, leaving everything else untouched.
///
/// The listed rhombi must tile a hexagon (pairwise adjacent, six boundary
/// sides). The move is an involution and preserves the domain boundary.
pub fn star_triangle_move(domain: &RhombicDomain, hexagon: &[usize; 3]) -> Result<RhombicDomain> {
    let nr = domain.rhombi().len();
    for (slot, &i) in hexagon.iter().enumerate() {
        if i >= nr {
            return Err(Error::InvalidArgument(format!(
                "rhombus index {i} out of range"
            )));
        }
        if hexagon[..slot].contains(&i) {
            return Err(Error::InvalidArgument("repeated rhombus index".into()));
        }
    }

    // sub-domain of the three rhombi, renumbered 0..3
    let sub_rhombi: Vec<Rhombus> = hexagon
        .iter()
        .enumerate()
        .map(|(pos, &i)| domain.rhombi()[i].with_id(pos))
        .collect();
    let sub = RhombicDomain::new(sub_rhombi)
        .map_err(|e| Error::InvalidArgument(format!("selected rhombi do not tile: {e}")))?;
    if sub.boundary_len() != 6 {
        return Err(Error::InvalidArgument(format!(
            "selected rhombi bound {} sides, not a hexagon",
            sub.boundary_len()
        )));
    }
    let actual_vertices: Vec<Complex64> = sub
        .boundary()
        .iter()
        .map(|&(i, k)| sub.rhombi()[i].vertices()[k])
        .collect();
    let angles: Vec<f64> = sub.rhombi().iter().map(|r| r.opening_angle()).collect();

    for arrangement in [HexArrangement::Star, HexArrangement::Triangle] {
        for perm in PERMS3 {
            let (a0, a1, a2) = (angles[perm[0]], angles[perm[1]], angles[perm[2]]);
            if (a0 + a1 + a2 - 2.0 * std::f64::consts::PI).abs() > 1e-9 {
                continue;
            }
            let Ok(canon) = hexagon_rhombi(a0, a1, arrangement) else {
                continue;
            };
            let Ok(canon_dom) = RhombicDomain::new(canon.to_vec()) else {
                continue;
            };
            let canon_vertices: Vec<Complex64> = canon_dom
                .boundary()
                .iter()
                .map(|&(i, k)| canon_dom.rhombi()[i].vertices()[k])
                .collect();
            for rot in 0..6 {
                let u = (actual_vertices[(rot + 1) % 6] - actual_vertices[rot])
                    / (canon_vertices[1] - canon_vertices[0]);
                if (u.norm() - 1.0).abs() > GEOM_TOL {
                    continue;
                }
                let t = actual_vertices[rot] - u * canon_vertices[0];
                let boundary_matches = (0..6).all(|j| {
                    (u * canon_vertices[j] + t - actual_vertices[(rot + j) % 6]).norm() <= GEOM_TOL
                });
                if !boundary_matches {
                    continue;
                }
                // each transformed canonical rhombus must coincide with one
                // of the selected rhombi, vertex by vertex (tags included)
                let mut role_to_old = [usize::MAX; 3];
                let mut all_found = true;
                for (role, c) in canon.iter().enumerate() {
                    let tc = c.transformed(u, t);
                    let found = hexagon.iter().find(|&&old| {
                        let r = &domain.rhombi()[old];
                        (0..4).all(|v| (r.vertices()[v] - tc.vertices()[v]).norm() <= GEOM_TOL)
                            && (r.opening_angle() - tc.opening_angle()).abs() <= GEOM_TOL
                    });
                    match found {
                        Some(&old) => role_to_old[role] = old,
                        None => {
                            all_found = false;
                            break;
                        }
                    }
                }
                if !all_found || role_to_old.iter().collect::<std::collections::HashSet<_>>().len() != 3
                {
                    continue;
                }
                // matched: emit the other arrangement under the same motion
                let other = hexagon_rhombi(a0, a1, arrangement.other())?;
                let mut new_rhombi = domain.rhombi().to_vec();
                for (role, c) in other.iter().enumerate() {
                    let id = role_to_old[role];
                    new_rhombi[id] = c.transformed(u, t).with_id(id);
                }
                let moved = RhombicDomain::new(new_rhombi)?;
                if moved.boundary_len() != domain.boundary_len() {
                    return Err(Error::EmbeddingInvalid(
                        "recombination changed the boundary".into(),
                    ));
                }
                for j in 0..moved.boundary_len() {
                    if (moved.boundary_midpoint(j) - domain.boundary_midpoint(j)).norm() > GEOM_TOL
                    {
                        return Err(Error::EmbeddingInvalid(
                            "recombination changed the boundary".into(),
                        ));
                    }
                }
                return Ok(moved);
            }
        }
    }
    Err(Error::InvalidArgument(
        "selected rhombi do not form a recombinable hexagon".into(),
    ))
}

#[derive(Serialize, Deserialize)]
struct RhombusJson {
    id: usize,
    angle: f64,
    vertices: Vec<[f64; 2]>,
    tag: usize,
}

#[derive(Serialize, Deserialize)]
struct DomainJson {
    rhombi: Vec<RhombusJson>,
    adjacency: Vec<[[usize; 2]; 2]>,
}

/// Serializes a domain; vertices are stored tag-first, so `tag` is 0.
pub fn domain_to_json(domain: &RhombicDomain) -> Result<String> {
    let doc = DomainJson {
        rhombi: domain
            .rhombi()
            .iter()
            .map(|r| RhombusJson {
                id: r.id(),
                angle: r.opening_angle(),
                vertices: r.vertices().iter().map(|v| [v.re, v.im]).collect(),
                tag: 0,
            })
            .collect(),
        adjacency: domain
            .adjacency()
            .iter()
            .map(|&((r, s), (r2, s2))| [[r, s], [r2, s2]])
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Deserializes and fully revalidates a domain, rotating vertex lists whose
/// tag is nonzero and checking the declared adjacency against the computed
/// one.
pub fn domain_from_json(text: &str) -> Result<RhombicDomain> {
    let doc: DomainJson = serde_json::from_str(text)?;
    let mut rhombi = Vec::with_capacity(doc.rhombi.len());
    for rj in &doc.rhombi {
        if rj.vertices.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "rhombus {} has {} vertices",
                rj.id,
                rj.vertices.len()
            )));
        }
        if rj.tag >= 4 {
            return Err(Error::InvalidArgument(format!(
                "rhombus {} has tag {} outside 0..4",
                rj.id, rj.tag
            )));
        }
        let raw: Vec<Complex64> = rj
            .vertices
            .iter()
            .map(|&[x, y]| Complex64::new(x, y))
            .collect();
        let rotated: [Complex64; 4] = std::array::from_fn(|k| raw[(k + rj.tag) % 4]);
        rhombi.push(Rhombus::from_vertices(rj.id, rotated, rj.angle)?);
    }
    let domain = RhombicDomain::new(rhombi)?;
    let mut declared: Vec<(SideRef, SideRef)> = doc
        .adjacency
        .iter()
        .map(|&[[r, s], [r2, s2]]| {
            let (a, b) = ((r, s), (r2, s2));
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    declared.sort_unstable();
    if declared != domain.adjacency() {
        return Err(Error::InvalidArgument(format!(
            "declared adjacency {declared:?} does not match computed {:?}",
            domain.adjacency()
        )));
    }
    Ok(domain)
}
