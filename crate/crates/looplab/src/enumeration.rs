//! Exact enumeration of loop configurations on rhombic domains: plaquette
//! state tables, exterior diagrams, path tracing with winding angles, and
//! configuration weights.
//!
//! Conventions frozen here:
//!
//! - Side midpoints of a rhombus are numbered by its sides `0..4`.
//! - A path crosses a side along the inward normal `i * side` when entering
//!   and the outward normal `-i * side` when leaving; the turn inside a
//!   plaquette is the argument of their ratio. Around a corner this gives a
//!   turn of plus or minus the corner's interior angle, which is what the
//!   calibrated single-rhombus identities require.
//! - Exterior chords route around the boundary on whichever side avoids the
//!   blocked points (the entry, and the exit point in the dense model).
//! - Enumeration is lexicographic in (rhombus index, state index).

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::combinatorics::{glue, ChordDiagram};
use crate::error::{Error, Result};
use crate::geometry::{RhombicDomain, Rhombus};
use crate::weights::{
    dense_weights, dilute_weights, DenseParams, DenseWeights, DiluteParams, DiluteWeights, Model,
    ModelParams, SpinPhase,
};

/// One local plaquette state: its weight label and the arcs pairing side
/// midpoints inside the rhombus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalState {
    pub label: &'static str,
    pub arcs: &'static [(usize, usize)],
}

/// Dense plaquette states: the two corner-arc pairings of the four sides.
/// With the tag at vertex 0, the `a` state hugs the corners off the tag
/// diagonal and the `b` state hugs the tagged corner and its opposite.
pub const DENSE_STATES: [LocalState; 2] = [
    LocalState { label: "a", arcs: &[(0, 1), (2, 3)] },
    LocalState { label: "b", arcs: &[(0, 3), (1, 2)] },
];

/// Dilute plaquette states: empty, four single corner arcs, two straight
/// crossings, and the two dense pairings. Order is frozen; enumeration
/// indices refer to it.
pub const DILUTE_STATES: [LocalState; 9] = [
    LocalState { label: "t", arcs: &[] },
    LocalState { label: "u1", arcs: &[(0, 1)] },
    LocalState { label: "u1", arcs: &[(2, 3)] },
    LocalState { label: "u2", arcs: &[(0, 3)] },
    LocalState { label: "u2", arcs: &[(1, 2)] },
    LocalState { label: "v", arcs: &[(0, 2)] },
    LocalState { label: "v", arcs: &[(1, 3)] },
    LocalState { label: "a", arcs: &[(0, 1), (2, 3)] },
    LocalState { label: "b", arcs: &[(0, 3), (1, 2)] },
];

/// The state table of a model.
pub fn states_for(model: Model) -> &'static [LocalState] {
    match model {
        Model::Dense => &DENSE_STATES,
        Model::Dilute => &DILUTE_STATES,
    }
}

/// An assignment of one local state to every rhombus of a domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    model: Model,
    states: Vec<usize>,
}

impl Configuration {
    pub fn new(model: Model, states: Vec<usize>) -> Result<Self> {
        let table = states_for(model);
        if let Some(&bad) = states.iter().find(|&&s| s >= table.len()) {
            return Err(Error::InvalidArgument(format!(
                "state index {bad} out of range for {} states",
                table.len()
            )));
        }
        Ok(Self { model, states })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn state_indices(&self) -> &[usize] {
        &self.states
    }

    pub fn state(&self, rhombus: usize) -> LocalState {
        states_for(self.model)[self.states[rhombus]]
    }

    pub fn label(&self, rhombus: usize) -> &'static str {
        self.state(rhombus).label
    }

    /// The state's arcs as a chord diagram on the rhombus's 4 side
    /// midpoints.
    pub fn local_diagram(&self, rhombus: usize) -> ChordDiagram {
        ChordDiagram::new(4, self.state(rhombus).arcs)
            .expect("state tables hold valid non-crossing diagrams")
    }

    /// The side paired with `side` inside `rhombus`, if occupied.
    pub fn partner_within(&self, rhombus: usize, side: usize) -> Option<usize> {
        self.state(rhombus)
            .arcs
            .iter()
            .find_map(|&(x, y)| match side {
                s if s == x => Some(y),
                s if s == y => Some(x),
                _ => None,
            })
    }

    /// Whether the midpoint of `side` carries a strand of `rhombus`.
    pub fn occupied(&self, rhombus: usize, side: usize) -> bool {
        self.partner_within(rhombus, side).is_some()
    }
}

/// Whether every shared side is used by both adjacent plaquettes or by
/// neither (no strand may start or end abruptly in the bulk).
pub fn bulk_consistent(domain: &RhombicDomain, config: &Configuration) -> bool {
    domain
        .adjacency()
        .iter()
        .all(|&((i1, k1), (i2, k2))| config.occupied(i1, k1) == config.occupied(i2, k2))
}

/// Cap on the raw number of state assignments an enumeration may visit.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationLimits {
    pub max_configs: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_configs: 100_000_000,
        }
    }
}

impl EnumerationLimits {
    /// Default limits, overridden by the `LOOPLAB_MAX_CONFIGS` environment
    /// variable when set to a positive integer.
    pub fn from_env() -> Self {
        let mut limits = Self::default();
        if let Ok(text) = std::env::var("LOOPLAB_MAX_CONFIGS") {
            if let Ok(v) = text.trim().parse::<u64>() {
                if v > 0 {
                    limits.max_configs = v;
                }
            }
        }
        limits
    }
}

/// Iterator over state assignments in lexicographic order.
pub struct ConfigIter<'a> {
    domain: &'a RhombicDomain,
    model: Model,
    raw: bool,
    nstates: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for ConfigIter<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        loop {
            let states = self.next.take()?;
            // odometer increment, last rhombus fastest
            let mut bumped = states.clone();
            let mut pos = bumped.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                bumped[pos] += 1;
                if bumped[pos] < self.nstates {
                    self.next = Some(bumped);
                    break;
                }
                bumped[pos] = 0;
            }
            let config = Configuration {
                model: self.model,
                states,
            };
            if self.raw || self.model == Model::Dense || bulk_consistent(self.domain, &config) {
                return Some(config);
            }
        }
    }
}

/// Enumerates every state assignment exactly once. For the dilute model the
/// default filters bulk-inconsistent assignments; `raw` yields all of them.
pub fn enumerate_configs<'a>(
    domain: &'a RhombicDomain,
    model: Model,
    raw: bool,
    limits: EnumerationLimits,
) -> Result<ConfigIter<'a>> {
    let nstates = states_for(model).len();
    let total = (nstates as u64).checked_pow(domain.rhombi().len() as u32);
    match total {
        Some(t) if t <= limits.max_configs => {}
        _ => {
            return Err(Error::ResourceLimit(format!(
                "{nstates}^{} states exceed the cap of {}",
                domain.rhombi().len(),
                limits.max_configs
            )))
        }
    }
    Ok(ConfigIter {
        domain,
        model,
        raw,
        nstates,
        next: Some(vec![0; domain.rhombi().len()]),
    })
}

/// Signed turn of a strand crossing `rhombus` from `side_in` to `side_out`,
/// measured between the inward normal at entry and the outward normal at
/// exit. Around a shared corner the magnitude equals that corner's interior
/// angle; across opposite sides it is zero.
pub fn turning_angle(rhombus: &Rhombus, side_in: usize, side_out: usize) -> Result<f64> {
    if side_in >= 4 || side_out >= 4 {
        return Err(Error::InvalidArgument(format!(
            "side index out of range: {side_in}, {side_out}"
        )));
    }
    if side_in == side_out {
        return Err(Error::InvalidArgument(
            "a strand cannot leave through its entry side".into(),
        ));
    }
    let i = Complex64::i();
    let u_in = i * rhombus.side(side_in);
    let u_out = -i * rhombus.side(side_out);
    Ok((u_out / u_in).arg())
}

/// Turn contributed by an exterior chord from boundary index `from` to
/// `to`: the route goes anticlockwise around the domain unless that passes
/// a blocked boundary point, in which case it goes clockwise.
pub fn exterior_turn(domain: &RhombicDomain, from: usize, to: usize, blocked: &[usize]) -> f64 {
    let m = domain.boundary_len();
    let mut acw_clear = true;
    let mut k = (from + 1) % m;
    while k != to {
        if blocked.contains(&k) {
            acw_clear = false;
            break;
        }
        k = (k + 1) % m;
    }
    if acw_clear {
        let mut s = std::f64::consts::PI;
        let mut k = from;
        while k != to {
            s += domain.exterior_angle(k);
            k = (k + 1) % m;
        }
        s
    } else {
        let mut s = -std::f64::consts::PI;
        let mut k = to;
        while k != from {
            s -= domain.exterior_angle(k);
            k = (k + 1) % m;
        }
        s
    }
}

/// An exterior connection pattern on the boundary midpoints: the entry
/// point (connected to the marked point A outside), for the dense model a
/// designated exit point (connected to B), and non-crossing exterior chords
/// pairing further boundary points. Unpaired points are expected unoccupied
/// in the dilute model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalDiagram {
    point_count: usize,
    entry: usize,
    bpoint: Option<usize>,
    chords: Vec<(usize, usize)>,
}

impl ExternalDiagram {
    /// Dense pattern: entry, exit, and chords must together form a
    /// non-crossing perfect matching of all boundary points.
    pub fn dense(
        point_count: usize,
        entry: usize,
        bpoint: usize,
        chords: &[(usize, usize)],
    ) -> Result<Self> {
        if entry == bpoint {
            return Err(Error::InvalidArgument(
                "entry and exit must be distinct".into(),
            ));
        }
        let mut full: Vec<(usize, usize)> = chords.to_vec();
        full.push((entry.min(bpoint), entry.max(bpoint)));
        let diagram = ChordDiagram::new(point_count, &full)?;
        if !diagram.is_perfect() {
            return Err(Error::InvalidArgument(
                "dense exterior pattern must cover every boundary point".into(),
            ));
        }
        let mut chords: Vec<(usize, usize)> = chords
            .iter()
            .map(|&(x, y)| (x.min(y), x.max(y)))
            .collect();
        chords.sort_unstable();
        Ok(Self {
            point_count,
            entry,
            bpoint: Some(bpoint),
            chords,
        })
    }

    /// Dilute pattern: non-crossing chords leaving the entry unpaired;
    /// remaining unpaired points are expected unoccupied.
    pub fn dilute(point_count: usize, entry: usize, chords: &[(usize, usize)]) -> Result<Self> {
        let diagram = ChordDiagram::new(point_count, chords)?;
        if entry >= point_count {
            return Err(Error::InvalidArgument(format!(
                "entry {entry} out of range for {point_count} points"
            )));
        }
        if diagram.partner(entry).is_some() {
            return Err(Error::InvalidArgument(
                "the entry point must not carry an exterior chord".into(),
            ));
        }
        Ok(Self {
            point_count,
            entry,
            bpoint: None,
            chords: diagram.chords().to_vec(),
        })
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn bpoint(&self) -> Option<usize> {
        self.bpoint
    }

    pub fn chords(&self) -> &[(usize, usize)] {
        &self.chords
    }

    /// Exterior chord partner of a boundary point, if any.
    pub fn partner(&self, point: usize) -> Option<usize> {
        self.chords.iter().find_map(|&(x, y)| match point {
            p if p == x => Some(y),
            p if p == y => Some(x),
            _ => None,
        })
    }

    /// Whether the exterior pattern expects a strand at this boundary
    /// point.
    pub fn expects_occupied(&self, point: usize) -> bool {
        point == self.entry || self.bpoint == Some(point) || self.partner(point).is_some()
    }

    /// The chords alone as a diagram (entry and exit unpaired), ready for
    /// gluing with an internal connectivity.
    pub fn exterior_diagram(&self) -> ChordDiagram {
        ChordDiagram::new(self.point_count, &self.chords)
            .expect("validated at construction")
    }

    /// Boundary points exterior routes must not pass: the entry (the point
    /// A sits next to it) and the dense exit.
    pub fn blocked(&self) -> Vec<usize> {
        let mut b = vec![self.entry];
        if let Some(bp) = self.bpoint {
            b.push(bp);
        }
        b
    }
}

/// All admissible dense exterior patterns for a fixed entry: the
/// non-crossing perfect matchings of the boundary points in cyclic order;
/// the entry's partner is the exit. Order is frozen by the diagram
/// enumerator.
pub fn dense_externals(point_count: usize, entry: usize) -> Result<Vec<ExternalDiagram>> {
    if entry >= point_count {
        return Err(Error::InvalidArgument(format!(
            "entry {entry} out of range for {point_count} points"
        )));
    }
    let mut out = Vec::new();
    for diagram in crate::combinatorics::enumerate_diagrams(point_count, true)? {
        let bpoint = diagram
            .partner(entry)
            .expect("perfect matching pairs every point");
        let pair = (entry.min(bpoint), entry.max(bpoint));
        let chords: Vec<(usize, usize)> = diagram
            .chords()
            .iter()
            .copied()
            .filter(|&c| c != pair)
            .collect();
        out.push(ExternalDiagram::dense(point_count, entry, bpoint, &chords)?);
    }
    Ok(out)
}

/// All admissible dilute exterior patterns for a fixed entry: non-crossing
/// partial matchings of the other boundary points in the linear order
/// starting just after the entry (Motzkin family). Order is frozen by the
/// diagram enumerator.
pub fn dilute_externals(point_count: usize, entry: usize) -> Result<Vec<ExternalDiagram>> {
    if entry >= point_count {
        return Err(Error::InvalidArgument(format!(
            "entry {entry} out of range for {point_count} points"
        )));
    }
    let mut out = Vec::new();
    for local in crate::combinatorics::enumerate_diagrams(point_count - 1, false)? {
        let chords: Vec<(usize, usize)> = local
            .chords()
            .iter()
            .map(|&(x, y)| {
                let gx = (entry + 1 + x) % point_count;
                let gy = (entry + 1 + y) % point_count;
                (gx.min(gy), gx.max(gy))
            })
            .collect();
        out.push(ExternalDiagram::dilute(point_count, entry, &chords)?);
    }
    Ok(out)
}

/// A midpoint on the exploration path: a boundary index or an index into
/// the domain's shared-side list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PathPoint {
    Boundary(usize),
    Internal(usize),
}

/// The exploration path of one configuration under one exterior pattern:
/// visited midpoints with accumulated winding, and the terminal midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub visited: Vec<(PathPoint, f64)>,
    pub terminal: PathPoint,
}

/// Traces the exploration path from the entry. Returns `None` for dilute
/// configurations that do not contribute under this exterior pattern
/// (more than one strand defect, or the defect unreachable from the
/// entry). Dense paths must reach the exit point.
pub fn trace_path(
    domain: &RhombicDomain,
    config: &Configuration,
    external: &ExternalDiagram,
) -> Result<Option<PathTrace>> {
    let m = domain.boundary_len();
    if external.point_count() != m {
        return Err(Error::BoundaryMismatch(format!(
            "exterior pattern on {} points, boundary has {m}",
            external.point_count()
        )));
    }
    let dense = config.model() == Model::Dense;

    // dilute: locate strand defects (midpoints where occupation disagrees
    // with the neighbor or with the exterior pattern)
    let mut defects: Vec<PathPoint> = Vec::new();
    if !dense {
        for (idx, &((i1, k1), (i2, k2))) in domain.adjacency().iter().enumerate() {
            if config.occupied(i1, k1) != config.occupied(i2, k2) {
                defects.push(PathPoint::Internal(idx));
            }
        }
        for j in 0..m {
            let (i, k) = domain.boundary()[j];
            if config.occupied(i, k) != external.expects_occupied(j) {
                defects.push(PathPoint::Boundary(j));
            }
        }
        if defects.len() > 1 {
            return Ok(None);
        }
    }

    let entry = external.entry();
    let blocked = external.blocked();
    let mut visited = vec![(PathPoint::Boundary(entry), 0.0)];
    let mut seen = vec![PathPoint::Boundary(entry)];
    let mut winding = 0.0;
    let mut visit = |p: PathPoint, w: f64, visited: &mut Vec<(PathPoint, f64)>| -> Result<()> {
        if seen.contains(&p) {
            return Err(Error::MalformedConfiguration(format!(
                "exploration path revisits {p:?}"
            )));
        }
        seen.push(p);
        visited.push((p, w));
        Ok(())
    };

    let (i0, k0) = domain.boundary()[entry];
    let terminal;
    if config.partner_within(i0, k0).is_none() {
        terminal = PathPoint::Boundary(entry);
    } else {
        let (mut ci, mut ck) = (i0, k0);
        loop {
            let k_out = config
                .partner_within(ci, ck)
                .expect("strand continues inside the plaquette");
            winding += turning_angle(&domain.rhombi()[ci], ck, k_out)?;
            match domain.partner_side((ci, k_out)) {
                None => {
                    let j_out = domain
                        .boundary_index((ci, k_out))
                        .expect("unshared side lies on the boundary");
                    visit(PathPoint::Boundary(j_out), winding, &mut visited)?;
                    if dense && external.bpoint() == Some(j_out) {
                        terminal = PathPoint::Boundary(j_out);
                        break;
                    }
                    if let Some(j_next) = external.partner(j_out) {
                        winding += exterior_turn(domain, j_out, j_next, &blocked);
                        visit(PathPoint::Boundary(j_next), winding, &mut visited)?;
                        let (i2, k2) = domain.boundary()[j_next];
                        if config.partner_within(i2, k2).is_none() {
                            terminal = PathPoint::Boundary(j_next);
                            break;
                        }
                        (ci, ck) = (i2, k2);
                    } else {
                        terminal = PathPoint::Boundary(j_out);
                        break;
                    }
                }
                Some((ni, nk)) => {
                    let idx = domain
                        .internal_side_index((ni, nk))
                        .expect("shared side has an internal index");
                    visit(PathPoint::Internal(idx), winding, &mut visited)?;
                    if config.partner_within(ni, nk).is_none() {
                        terminal = PathPoint::Internal(idx);
                        break;
                    }
                    (ci, ck) = (ni, nk);
                }
            }
        }
    }

    if dense {
        if Some(terminal) != external.bpoint().map(PathPoint::Boundary) {
            return Err(Error::MalformedConfiguration(
                "dense exploration path did not reach the exit point".into(),
            ));
        }
    } else {
        match defects.first() {
            Some(&d) if d == terminal => {}
            _ => return Ok(None),
        }
    }
    Ok(Some(PathTrace { visited, terminal }))
}

/// Boundary-to-boundary connectivity induced by the interior strands, plus
/// the number of loops closed entirely inside the domain.
pub fn internal_chord_diagram(
    domain: &RhombicDomain,
    config: &Configuration,
) -> Result<(ChordDiagram, usize)> {
    let node_of = |i: usize, k: usize| -> PathPoint {
        match domain.boundary_index((i, k)) {
            Some(j) => PathPoint::Boundary(j),
            None => PathPoint::Internal(
                domain
                    .internal_side_index((i, k))
                    .expect("side is boundary or shared"),
            ),
        }
    };
    let mut adj: BTreeMap<PathPoint, Vec<PathPoint>> = BTreeMap::new();
    for i in 0..domain.rhombi().len() {
        for &(x, y) in config.state(i).arcs {
            let a = node_of(i, x);
            let b = node_of(i, y);
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
    }
    let mut chords = Vec::new();
    let mut interior_loops = 0;
    let mut done: Vec<PathPoint> = Vec::new();
    for &start in adj.keys() {
        if done.contains(&start) {
            continue;
        }
        let mut component = vec![start];
        let mut stack = vec![start];
        done.push(start);
        while let Some(u) = stack.pop() {
            for &v in &adj[&u] {
                if !done.contains(&v) {
                    done.push(v);
                    component.push(v);
                    stack.push(v);
                }
            }
        }
        if component.iter().all(|p| adj[p].len() == 2) {
            interior_loops += 1;
            continue;
        }
        let ends: Vec<PathPoint> = component
            .iter()
            .copied()
            .filter(|p| adj[p].len() == 1)
            .collect();
        if let [PathPoint::Boundary(x), PathPoint::Boundary(y)] = ends.as_slice() {
            chords.push((*x.min(y), *x.max(y)));
        }
    }
    let diagram = ChordDiagram::new(domain.boundary_len(), &chords)?;
    Ok((diagram, interior_loops))
}

/// Per-plaquette weights for one domain, with the loop fugacity and spin
/// phase of the model.
#[derive(Debug, Clone)]
pub enum PlaquetteWeightSet {
    Dense(DenseWeights),
    Dilute(DiluteWeights),
}

impl PlaquetteWeightSet {
    pub fn model(&self) -> Model {
        match self {
            PlaquetteWeightSet::Dense(_) => Model::Dense,
            PlaquetteWeightSet::Dilute(_) => Model::Dilute,
        }
    }

    /// The weight for a state label of the matching model.
    pub fn value(&self, label: &str) -> Result<f64> {
        match self {
            PlaquetteWeightSet::Dense(w) => match label {
                "a" => Ok(w.a),
                "b" => Ok(w.b),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown dense weight label {label:?}"
                ))),
            },
            PlaquetteWeightSet::Dilute(w) => match label {
                "t" => Ok(w.t),
                "u1" => Ok(w.u1),
                "u2" => Ok(w.u2),
                "v" => Ok(w.v),
                "a" => Ok(w.a),
                "b" => Ok(w.b),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown dilute weight label {label:?}"
                ))),
            },
        }
    }

    pub fn perturb(&mut self, label: &str, factor: f64) -> Result<()> {
        match self {
            PlaquetteWeightSet::Dense(w) => w.perturb(label, factor),
            PlaquetteWeightSet::Dilute(w) => w.perturb(label, factor),
        }
    }
}

/// Model data bound to a domain: one weight set per rhombus, the loop
/// fugacity, and the spin phase.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    model: Model,
    plaquettes: Vec<PlaquetteWeightSet>,
    fugacity: f64,
    spin: SpinPhase,
}

impl ModelWeights {
    /// Critical dense weights from each rhombus's opening angle.
    pub fn dense(domain: &RhombicDomain, params: &DenseParams) -> Self {
        Self {
            model: Model::Dense,
            plaquettes: domain
                .rhombi()
                .iter()
                .map(|r| PlaquetteWeightSet::Dense(dense_weights(r.opening_angle(), params)))
                .collect(),
            fugacity: params.fugacity(),
            spin: params.spin_phase(),
        }
    }

    /// Critical dilute weights from each rhombus's opening angle.
    pub fn dilute(domain: &RhombicDomain, params: &DiluteParams) -> Self {
        Self {
            model: Model::Dilute,
            plaquettes: domain
                .rhombi()
                .iter()
                .map(|r| PlaquetteWeightSet::Dilute(dilute_weights(r.opening_angle(), params)))
                .collect(),
            fugacity: params.fugacity(),
            spin: params.spin_phase(),
        }
    }

    /// Critical weights for either model.
    pub fn on_family(domain: &RhombicDomain, params: &ModelParams) -> Self {
        match params {
            ModelParams::Dense(p) => Self::dense(domain, p),
            ModelParams::Dilute(p) => Self::dilute(domain, p),
        }
    }

    /// Arbitrary weights, for identity-in-the-weights checks.
    pub fn from_parts(
        plaquettes: Vec<PlaquetteWeightSet>,
        fugacity: f64,
        spin: SpinPhase,
    ) -> Result<Self> {
        let model = plaquettes
            .first()
            .map(PlaquetteWeightSet::model)
            .ok_or_else(|| Error::InvalidArgument("no plaquette weights given".into()))?;
        if plaquettes.iter().any(|p| p.model() != model) {
            return Err(Error::InvalidArgument(
                "plaquette weight sets mix models".into(),
            ));
        }
        Ok(Self {
            model,
            plaquettes,
            fugacity,
            spin,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn fugacity(&self) -> f64 {
        self.fugacity
    }

    pub fn spin(&self) -> SpinPhase {
        self.spin
    }

    pub fn plaquettes(&self) -> &[PlaquetteWeightSet] {
        &self.plaquettes
    }

    pub fn weight_of(&self, rhombus: usize, label: &str) -> Result<f64> {
        self.plaquettes[rhombus].value(label)
    }

    /// Scales one weight label on every plaquette; label `n` also scales
    /// the loop fugacity.
    pub fn perturb(&mut self, label: &str, factor: f64) -> Result<()> {
        for p in &mut self.plaquettes {
            p.perturb(label, factor)?;
        }
        if label == "n" {
            self.fugacity *= factor;
        }
        Ok(())
    }
}

/// Weight of one configuration under one exterior pattern: the product of
/// plaquette weights times fugacity^loops, counting loops by gluing the
/// internal connectivity with the exterior chords and adding the loops
/// closed entirely inside.
pub fn config_weight(
    domain: &RhombicDomain,
    config: &Configuration,
    external: &ExternalDiagram,
    weights: &ModelWeights,
) -> Result<f64> {
    if weights.model() != config.model() {
        return Err(Error::InvalidArgument(
            "configuration and weights belong to different models".into(),
        ));
    }
    let (diagram, interior_loops) = internal_chord_diagram(domain, config)?;
    let glued = glue(&diagram, &external.exterior_diagram())?;
    let loops = glued.closed_loops + interior_loops;
    let mut weight = weights.fugacity().powi(loops as i32);
    for r in 0..domain.rhombi().len() {
        weight *= weights.weight_of(r, config.label(r))?;
    }
    Ok(weight)
}

/// One debug line per configuration: state labels, weight, internal
/// connectivity, and interior loop count.
pub fn config_dump_line(
    domain: &RhombicDomain,
    config: &Configuration,
    external: &ExternalDiagram,
    weights: &ModelWeights,
) -> Result<String> {
    let labels: Vec<&str> = (0..domain.rhombi().len()).map(|r| config.label(r)).collect();
    let (diagram, interior_loops) = internal_chord_diagram(domain, config)?;
    let weight = config_weight(domain, config, external, weights)?;
    Ok(format!(
        "states={} weight={weight:.17e} internal={} interior_loops={interior_loops}",
        labels.join(","),
        diagram.encode(),
    ))
}

/// Compensated (Kahan) accumulator for complex sums, keeping aggregation
/// error near machine precision regardless of term order.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: Complex64,
    compensation: Complex64,
}

impl KahanSum {
    pub fn add(&mut self, term: Complex64) {
        let y = term - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> Complex64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::motzkin;
    use crate::geometry::{
        make_domain_hexagon, make_domain_pair, make_domain_single, HexArrangement,
    };
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn limits() -> EnumerationLimits {
        EnumerationLimits::default()
    }

    fn collect(
        domain: &RhombicDomain,
        model: Model,
        raw: bool,
    ) -> Vec<Configuration> {
        enumerate_configs(domain, model, raw, limits())
            .unwrap()
            .collect()
    }

    /// Loop count by direct cycle tracing over strands plus exterior
    /// chords, mirroring how a drawing of the configuration closes loops.
    fn direct_loop_count(
        domain: &RhombicDomain,
        config: &Configuration,
        external: &ExternalDiagram,
    ) -> usize {
        let node_of = |i: usize, k: usize| -> PathPoint {
            match domain.boundary_index((i, k)) {
                Some(j) => PathPoint::Boundary(j),
                None => {
                    PathPoint::Internal(domain.internal_side_index((i, k)).unwrap())
                }
            }
        };
        let mut adj: BTreeMap<PathPoint, Vec<PathPoint>> = BTreeMap::new();
        for i in 0..domain.rhombi().len() {
            for &(x, y) in config.state(i).arcs {
                let a = node_of(i, x);
                let b = node_of(i, y);
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        for &(x, y) in external.chords() {
            let a = PathPoint::Boundary(x);
            let b = PathPoint::Boundary(y);
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut loops = 0;
        let mut done: Vec<PathPoint> = Vec::new();
        for &start in adj.keys() {
            if done.contains(&start) {
                continue;
            }
            let mut component = vec![start];
            let mut stack = vec![start];
            done.push(start);
            while let Some(u) = stack.pop() {
                for &v in &adj[&u] {
                    if !done.contains(&v) {
                        done.push(v);
                        component.push(v);
                        stack.push(v);
                    }
                }
            }
            if component.iter().all(|p| adj[p].len() == 2) {
                loops += 1;
            }
        }
        loops
    }

    #[test]
    fn state_tables_are_valid_diagrams() {
        for (table, perfect) in [(&DENSE_STATES[..], true), (&DILUTE_STATES[..], false)] {
            for state in table {
                let d = ChordDiagram::new(4, state.arcs).unwrap();
                if perfect {
                    assert!(d.is_perfect());
                }
            }
        }
        let mut labels: Vec<&str> = DILUTE_STATES.iter().map(|s| s.label).collect();
        labels.sort_unstable();
        assert_eq!(labels, ["a", "b", "t", "u1", "u1", "u2", "u2", "v", "v"]);
    }

    #[test]
    fn configuration_counts() {
        let single = make_domain_single(1.1).unwrap();
        assert_eq!(collect(&single, Model::Dense, false).len(), 2);
        assert_eq!(collect(&single, Model::Dilute, true).len(), 9);
        assert_eq!(collect(&single, Model::Dilute, false).len(), 9);

        let gamma = 2.0 * PI - 2.0 - 2.2;
        let hex = make_domain_hexagon(2.0, 2.2, gamma, HexArrangement::Star).unwrap();
        assert_eq!(collect(&hex, Model::Dense, false).len(), 8);
        let raw = collect(&hex, Model::Dilute, true);
        assert_eq!(raw.len(), 729);
        let filtered = collect(&hex, Model::Dilute, false);
        assert!(filtered.iter().all(|c| bulk_consistent(&hex, c)));
        assert!(!filtered.is_empty() && filtered.len() < 729);
        assert_eq!(
            raw.iter().filter(|c| bulk_consistent(&hex, c)).count(),
            filtered.len()
        );
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let gamma = 2.0 * PI - 2.0 - 2.2;
        let hex = make_domain_hexagon(2.0, 2.2, gamma, HexArrangement::Star).unwrap();
        let tight = EnumerationLimits { max_configs: 100 };
        assert!(matches!(
            enumerate_configs(&hex, Model::Dilute, true, tight),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn turning_angles_match_corner_interiors() {
        let alpha = 1.1;
        let domain = make_domain_single(alpha).unwrap();
        let r = &domain.rhombi()[0];
        assert!(turning_angle(r, 1, 1).is_err());
        assert!(turning_angle(r, 0, 4).is_err());
        // opposite sides: straight crossing
        assert_abs_diff_eq!(turning_angle(r, 0, 2).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(turning_angle(r, 1, 3).unwrap(), 0.0, epsilon = 1e-12);
        // around the corners off the tag diagonal: magnitude pi - alpha
        assert_abs_diff_eq!(turning_angle(r, 0, 1).unwrap(), alpha - PI, epsilon = 1e-12);
        assert_abs_diff_eq!(turning_angle(r, 2, 3).unwrap(), alpha - PI, epsilon = 1e-12);
        // around the tagged corner and its opposite: magnitude alpha
        assert_abs_diff_eq!(turning_angle(r, 0, 3).unwrap(), alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(turning_angle(r, 2, 1).unwrap(), alpha, epsilon = 1e-12);
        // reversing a crossing negates the turn; around any shared corner
        // the magnitude is that corner's interior angle
        for k_in in 0..4usize {
            for k_out in 0..4usize {
                if k_in == k_out {
                    continue;
                }
                assert_abs_diff_eq!(
                    turning_angle(r, k_in, k_out).unwrap(),
                    -turning_angle(r, k_out, k_in).unwrap(),
                    epsilon = 1e-12
                );
                let corner = if k_out == (k_in + 1) % 4 {
                    Some((k_in + 1) % 4)
                } else if k_out == (k_in + 3) % 4 {
                    Some(k_in)
                } else {
                    None
                };
                if let Some(v) = corner {
                    assert_abs_diff_eq!(
                        turning_angle(r, k_in, k_out).unwrap().abs(),
                        r.interior_angle(v),
                        epsilon = 1e-12
                    );
                }
            }
        }
        // square rhombus: quarter turns
        let square = make_domain_single(PI / 2.0).unwrap();
        let sq = &square.rhombi()[0];
        assert_abs_diff_eq!(
            turning_angle(sq, 0, 1).unwrap().abs(),
            PI / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn external_diagram_counts_and_validation() {
        assert_eq!(dense_externals(4, 1).unwrap().len(), 2);
        assert_eq!(dense_externals(6, 0).unwrap().len(), 5);
        assert_eq!(dilute_externals(4, 1).unwrap().len(), motzkin(3) as usize);
        assert_eq!(dilute_externals(6, 2).unwrap().len(), motzkin(5) as usize);
        for e in dense_externals(6, 3).unwrap() {
            assert_eq!(e.entry(), 3);
            let b = e.bpoint().unwrap();
            assert_ne!(b, 3);
            for j in 0..6 {
                assert!(e.expects_occupied(j));
            }
        }
        for e in dilute_externals(6, 3).unwrap() {
            assert_eq!(e.bpoint(), None);
            assert!(e.partner(3).is_none());
        }
        // crossing chords rejected
        assert!(ExternalDiagram::dilute(6, 0, &[(1, 3), (2, 4)]).is_err());
        // dense pattern must be perfect
        assert!(ExternalDiagram::dense(6, 0, 1, &[(2, 3)]).is_err());
        // entry may not carry a chord
        assert!(ExternalDiagram::dilute(6, 0, &[(0, 3)]).is_err());
    }

    #[test]
    fn dense_single_rhombus_traces() {
        let alpha = 1.1;
        let domain = make_domain_single(alpha).unwrap();
        let entry = domain.boundary_index((0, 0)).unwrap();
        let m = 4;
        let bp = (entry + 1) % m;
        let external = ExternalDiagram::dense(
            m,
            entry,
            bp,
            &[((entry + 2) % m, (entry + 3) % m)],
        )
        .unwrap();

        // a-state: one interior arc from the entry side to the next side
        let a_cfg = Configuration::new(Model::Dense, vec![0]).unwrap();
        let trace = trace_path(&domain, &a_cfg, &external).unwrap().unwrap();
        assert_eq!(trace.visited.len(), 2);
        assert_eq!(trace.terminal, PathPoint::Boundary(bp));
        assert_abs_diff_eq!(trace.visited[0].1, 0.0);
        assert_abs_diff_eq!(trace.visited[1].1, alpha - PI, epsilon = 1e-12);

        // b-state: leaves through the previous side, rides the exterior
        // chord, and re-enters
        let b_cfg = Configuration::new(Model::Dense, vec![1]).unwrap();
        let trace = trace_path(&domain, &b_cfg, &external).unwrap().unwrap();
        assert_eq!(trace.visited.len(), 4);
        assert_eq!(trace.terminal, PathPoint::Boundary(bp));
        assert_abs_diff_eq!(trace.visited[1].1, alpha, epsilon = 1e-12);
        let r = &domain.rhombi()[0];
        let hop = exterior_turn(&domain, (entry + 3) % m, (entry + 2) % m, &external.blocked());
        assert_abs_diff_eq!(trace.visited[2].1, alpha + hop, epsilon = 1e-12);
        assert_abs_diff_eq!(
            trace.visited[3].1,
            alpha + hop + turning_angle(r, 2, 1).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dilute_empty_state_ends_at_entry() {
        let domain = make_domain_single(0.9).unwrap();
        let entry = domain.boundary_index((0, 0)).unwrap();
        let external = ExternalDiagram::dilute(4, entry, &[]).unwrap();
        let t_cfg = Configuration::new(Model::Dilute, vec![0]).unwrap();
        let trace = trace_path(&domain, &t_cfg, &external).unwrap().unwrap();
        assert_eq!(trace.terminal, PathPoint::Boundary(entry));
        assert_eq!(trace.visited, vec![(PathPoint::Boundary(entry), 0.0)]);
        // a state whose defect is not reachable from the entry contributes
        // nothing: strand on the far sides, two defects -> skip
        let far = Configuration::new(Model::Dilute, vec![2]).unwrap();
        assert!(trace_path(&domain, &far, &external).unwrap().is_none());
    }

    #[test]
    fn config_weight_closes_expected_loops() {
        let alpha = 1.1;
        let lambda = 0.8;
        let params = DenseParams::new(lambda, 0).unwrap();
        let domain = make_domain_single(alpha).unwrap();
        let weights = ModelWeights::dense(&domain, &params);
        let entry = domain.boundary_index((0, 0)).unwrap();
        let m = 4;
        let external = ExternalDiagram::dense(
            m,
            entry,
            (entry + 1) % m,
            &[((entry + 2) % m, (entry + 3) % m)],
        )
        .unwrap();
        let w = dense_weights(alpha, &params);
        let a_cfg = Configuration::new(Model::Dense, vec![0]).unwrap();
        let b_cfg = Configuration::new(Model::Dense, vec![1]).unwrap();
        // the a state plus the exterior chord closes one loop
        assert_abs_diff_eq!(
            config_weight(&domain, &a_cfg, &external, &weights).unwrap(),
            w.a * params.fugacity(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            config_weight(&domain, &b_cfg, &external, &weights).unwrap(),
            w.b,
            epsilon = 1e-14
        );
    }

    #[test]
    fn glue_loop_count_matches_direct_tracing() {
        let gamma = 2.0 * PI - 2.0 - 2.2;
        let cases: Vec<(RhombicDomain, Model)> = vec![
            (make_domain_single(1.1).unwrap(), Model::Dense),
            (make_domain_single(0.9).unwrap(), Model::Dilute),
            (make_domain_pair(1.2, 0.8).unwrap(), Model::Dense),
            (
                make_domain_hexagon(2.0, 2.2, gamma, HexArrangement::Star).unwrap(),
                Model::Dense,
            ),
            (
                make_domain_hexagon(2.0, 2.2, gamma, HexArrangement::Triangle).unwrap(),
                Model::Dilute,
            ),
        ];
        for (domain, model) in &cases {
            let m = domain.boundary_len();
            let externals = match model {
                Model::Dense => dense_externals(m, 0).unwrap(),
                Model::Dilute => dilute_externals(m, 0).unwrap(),
            };
            for config in collect(domain, *model, false) {
                let (diagram, interior) = internal_chord_diagram(domain, &config).unwrap();
                for external in &externals {
                    let glued = glue(&diagram, &external.exterior_diagram()).unwrap();
                    assert_eq!(
                        glued.closed_loops + interior,
                        direct_loop_count(domain, &config, external),
                        "loop count mismatch"
                    );
                }
            }
        }
    }

    #[test]
    fn internal_diagrams_cover_catalan_set_on_hexagon() {
        let gamma = 2.0 * PI - 2.0 - 2.2;
        let mut seen = Vec::new();
        for arrangement in [HexArrangement::Star, HexArrangement::Triangle] {
            let hex = make_domain_hexagon(2.0, 2.2, gamma, arrangement).unwrap();
            for config in collect(&hex, Model::Dense, false) {
                let (diagram, _) = internal_chord_diagram(&hex, &config).unwrap();
                assert!(diagram.is_perfect());
                if !seen.contains(&diagram) {
                    seen.push(diagram);
                }
            }
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn interior_loop_detected_on_star_hexagon() {
        let gamma = 2.0 * PI - 2.0 - 2.2;
        let hex = make_domain_hexagon(2.0, 2.2, gamma, HexArrangement::Star).unwrap();
        // all-b dense states join the three shared sides into a central loop
        let config = Configuration::new(Model::Dense, vec![1, 1, 1]).unwrap();
        let (diagram, interior) = internal_chord_diagram(&hex, &config).unwrap();
        assert_eq!(interior, 1);
        assert!(diagram.is_perfect());
        let total_interior: usize = collect(&hex, Model::Dense, false)
            .iter()
            .map(|c| internal_chord_diagram(&hex, c).unwrap().1)
            .sum();
        assert_eq!(total_interior, 1, "only the all-b state closes inside");
    }

    #[test]
    fn dilute_all_empty_leaves_boundary_unmatched() {
        let domain = make_domain_single(0.9).unwrap();
        let config = Configuration::new(Model::Dilute, vec![0]).unwrap();
        let (diagram, interior) = internal_chord_diagram(&domain, &config).unwrap();
        assert_eq!(interior, 0);
        assert!(diagram.chords().is_empty());
        assert_eq!(diagram.unmatched(), &[0, 1, 2, 3]);
    }

    #[test]
    fn model_weights_bind_openings_and_perturb() {
        let pair = make_domain_pair(1.2, 0.8).unwrap();
        let params = DenseParams::new(0.9, 0).unwrap();
        let mut weights = ModelWeights::dense(&pair, &params);
        let expected0 = dense_weights(1.2, &params);
        match &weights.plaquettes()[0] {
            PlaquetteWeightSet::Dense(w) => {
                assert_abs_diff_eq!(w.a, expected0.a);
                assert_abs_diff_eq!(w.b, expected0.b);
            }
            PlaquetteWeightSet::Dilute(_) => panic!("dense expected"),
        }
        let before = weights.weight_of(1, "a").unwrap();
        weights.perturb("a", 1.01).unwrap();
        assert_abs_diff_eq!(weights.weight_of(1, "a").unwrap(), before * 1.01);
        let n_before = weights.fugacity();
        weights.perturb("n", 2.0).unwrap();
        assert_abs_diff_eq!(weights.fugacity(), n_before * 2.0);
        assert!(weights.perturb("zz", 1.0).is_err());
    }

    #[test]
    fn kahan_sum_is_stable_under_reordering() {
        let terms: Vec<Complex64> = (0..1000)
            .map(|k| Complex64::new((k as f64 * 0.7).sin() * 1e-3, (k as f64).cos()))
            .collect();
        let mut forward = KahanSum::default();
        for &t in &terms {
            forward.add(t);
        }
        let mut backward = KahanSum::default();
        for &t in terms.iter().rev() {
            backward.add(t);
        }
        assert!((forward.value() - backward.value()).norm() < 1e-14);
    }

    #[test]
    fn dump_line_is_informative() {
        let domain = make_domain_single(1.1).unwrap();
        let params = DenseParams::new(0.8, 0).unwrap();
        let weights = ModelWeights::dense(&domain, &params);
        let entry = domain.boundary_index((0, 0)).unwrap();
        let external = ExternalDiagram::dense(
            4,
            entry,
            (entry + 1) % 4,
            &[((entry + 2) % 4, (entry + 3) % 4)],
        )
        .unwrap();
        let config = Configuration::new(Model::Dense, vec![0]).unwrap();
        let line = config_dump_line(&domain, &config, &external, &weights).unwrap();
        assert!(line.contains("states=a"));
        assert!(line.contains("weight="));
        assert!(line.contains("internal="));
    }
}
