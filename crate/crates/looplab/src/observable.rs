//! The edge observable and its discrete contour sums: per-configuration
//! phases `exp(-i sigma W)` accumulated at side midpoints, summed against
//! boundary increments, and compared with the closed-form identities they
//! reproduce on one, two, and three rhombi.
//!
//! Normalizations frozen by calibration against the single-rhombus closed
//! forms:
//!
//! - On a single rhombus the contour sum equals the closed-form residual
//!   times the boundary increment at the entry, exactly.
//! - On the two-rhombus domain the contour sum times
//!   `n exp(-i(beta + sigma(alpha - beta)))` equals the quadratic
//!   closed form.
//! - On the hexagon the contour sum times `n exp(-i(pi - alpha))` equals
//!   the displayed combinations of the three-rhombus weight function.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::enumeration::{
    config_weight, enumerate_configs, trace_path, EnumerationLimits, ExternalDiagram, KahanSum,
    ModelWeights, PathPoint, PlaquetteWeightSet,
};
use crate::error::{Error, Result};
use crate::geometry::{make_domain_hexagon, make_domain_pair, HexArrangement, RhombicDomain};
use crate::weights::{
    dense_weights, dense_yb_function, DenseParams, DenseWeights, Model, SpinPhase,
};

/// Report keys for the identities verified in this module.
pub const KEY_SINGLE_DENSE: &str = "holo.single.dense";
pub const KEY_SINGLE_DILUTE: &str = "holo.single.dilute";
pub const KEY_PAIR_QUADRATIC: &str = "holo.pair.quadratic";
pub const KEY_HEX_DIRECT: &str = "holo.hexV";
pub const KEY_STAR_DIFF: [&str; 5] = [
    "holo.stardiff.I",
    "holo.stardiff.II",
    "holo.stardiff.III",
    "holo.stardiff.IV",
    "holo.stardiff.V",
];

/// Pinned tolerance for enumerated-versus-closed-form comparisons.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

/// The observable on one domain under one exterior pattern: a value per
/// boundary midpoint, and values at the internal midpoints the traces
/// visited. Internal values are diagnostic; they cancel pairwise in the
/// boundary contour sum.
#[derive(Debug, Clone)]
pub struct PsiMap {
    pub boundary: Vec<Complex64>,
    pub internal: BTreeMap<usize, Complex64>,
}

/// Accumulates the observable by exact enumeration. Dense traces deposit
/// `exp(-i sigma W) * weight` at every midpoint they visit; dilute traces
/// deposit only at the terminal midpoint of the open path.
pub fn psi(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    external: &ExternalDiagram,
    limits: EnumerationLimits,
) -> Result<PsiMap> {
    let dense = weights.model() == Model::Dense;
    if dense != external.bpoint().is_some() {
        return Err(Error::InvalidArgument(
            "exterior pattern kind does not match the model".into(),
        ));
    }
    let spin = weights.spin();
    let mut boundary = vec![KahanSum::default(); domain.boundary_len()];
    let mut internal: BTreeMap<usize, KahanSum> = BTreeMap::new();
    for config in enumerate_configs(domain, weights.model(), true, limits)? {
        let Some(trace) = trace_path(domain, &config, external)? else {
            continue;
        };
        let weight = config_weight(domain, &config, external, weights)?;
        if weight == 0.0 {
            continue;
        }
        if dense {
            for &(point, winding) in &trace.visited {
                let term = spin.psi_factor(winding) * weight;
                match point {
                    PathPoint::Boundary(j) => boundary[j].add(term),
                    PathPoint::Internal(idx) => internal.entry(idx).or_default().add(term),
                }
            }
        } else {
            let &(point, winding) = trace
                .visited
                .last()
                .expect("a trace visits at least the entry");
            debug_assert_eq!(point, trace.terminal);
            let term = spin.psi_factor(winding) * weight;
            match point {
                PathPoint::Boundary(j) => boundary[j].add(term),
                PathPoint::Internal(idx) => internal.entry(idx).or_default().add(term),
            }
        }
    }
    Ok(PsiMap {
        boundary: boundary.iter().map(KahanSum::value).collect(),
        internal: internal.iter().map(|(&k, s)| (k, s.value())).collect(),
    })
}

/// Discrete contour sum of the observable against the boundary increments.
pub fn contour_sum(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    external: &ExternalDiagram,
    limits: EnumerationLimits,
) -> Result<Complex64> {
    let map = psi(domain, weights, external, limits)?;
    let mut sum = KahanSum::default();
    for j in 0..domain.boundary_len() {
        sum.add(map.boundary[j] * domain.boundary_delta(j));
    }
    Ok(sum.value())
}

/// Contour sum of one rhombus against its own anticlockwise sides, reading
/// observable values off a shared map.
fn rhombus_contour(domain: &RhombicDomain, map: &PsiMap, rhombus: usize) -> Complex64 {
    let mut sum = Complex64::default();
    for k in 0..4 {
        let value = match domain.boundary_index((rhombus, k)) {
            Some(j) => map.boundary[j],
            None => {
                let idx = domain
                    .internal_side_index((rhombus, k))
                    .expect("side is boundary or shared");
                map.internal.get(&idx).copied().unwrap_or_default()
            }
        };
        sum += value * domain.rhombi()[rhombus].side(k);
    }
    sum
}

/// Deviation between the whole-domain contour sum and the sum of
/// per-rhombus contour sums; internal increments cancel pairwise, so this
/// is a pure floating-point cancellation check.
pub fn decomposition_check(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    external: &ExternalDiagram,
    limits: EnumerationLimits,
) -> Result<f64> {
    let map = psi(domain, weights, external, limits)?;
    let mut whole = KahanSum::default();
    for j in 0..domain.boundary_len() {
        whole.add(map.boundary[j] * domain.boundary_delta(j));
    }
    let mut parts = KahanSum::default();
    for r in 0..domain.rhombi().len() {
        parts.add(rhombus_contour(domain, &map, r));
    }
    Ok((whole.value() - parts.value()).norm())
}

/// Closed-form quadratic combination that the two-rhombus contour sum
/// reproduces; an identity in the weights for any fugacity and spin.
pub fn two_rhombus_quadratic(
    w_alpha: &DenseWeights,
    w_beta: &DenseWeights,
    fugacity: f64,
    phase: SpinPhase,
) -> Complex64 {
    use std::f64::consts::PI;
    let p = |t: f64| phase.phi(t);
    let (alpha, beta) = (w_alpha.alpha, w_beta.alpha);
    let n = fugacity;
    (p(PI - beta) - p(alpha - PI)) * n * n * w_alpha.a * w_beta.a
        + (p(-beta) - p(alpha)) * n * n * w_alpha.b * w_beta.b
        + (p(PI - beta) + p(-beta) - p(alpha) - p(alpha - PI))
            * (n * w_alpha.a * w_beta.b + n * w_alpha.b * w_beta.a)
}

/// Normalization relating the enumerated two-rhombus contour sum to the
/// quadratic closed form.
fn pair_normalization(fugacity: f64, phase: SpinPhase, alpha: f64, beta: f64) -> Complex64 {
    Complex64::from_polar(fugacity, -(beta + phase.spin() * (alpha - beta)))
}

/// Builds the exterior pattern pairing boundary offsets `(i, j)` from the
/// entry; the pair containing offset 0 fixes the exit point.
fn offset_external(
    domain: &RhombicDomain,
    entry: usize,
    offsets: &[(usize, usize)],
) -> Result<ExternalDiagram> {
    let m = domain.boundary_len();
    let mut bpoint = None;
    let mut chords = Vec::new();
    for &(i, j) in offsets {
        if i == 0 {
            bpoint = Some((entry + j) % m);
        } else {
            chords.push(((entry + i) % m, (entry + j) % m));
        }
    }
    let bpoint = bpoint.ok_or_else(|| {
        Error::InvalidArgument("offset pattern must pair the entry".into())
    })?;
    ExternalDiagram::dense(m, entry, bpoint, &chords)
}

/// Enumerated two-rhombus contour sum under the straight-through exterior
/// pattern, normalized to the closed-form side.
pub fn two_rhombus_enumerated(
    w_alpha: &DenseWeights,
    w_beta: &DenseWeights,
    fugacity: f64,
    phase: SpinPhase,
    limits: EnumerationLimits,
) -> Result<Complex64> {
    let (alpha, beta) = (w_alpha.alpha, w_beta.alpha);
    let domain = make_domain_pair(alpha, beta)?;
    let weights = ModelWeights::from_parts(
        vec![
            PlaquetteWeightSet::Dense(*w_alpha),
            PlaquetteWeightSet::Dense(*w_beta),
        ],
        fugacity,
        phase,
    )?;
    let entry = domain
        .boundary_index((0, 3))
        .expect("side (0,3) lies on the pair boundary");
    let external = offset_external(&domain, entry, &[(0, 3), (1, 2), (4, 5)])?;
    let sum = contour_sum(&domain, &weights, &external, limits)?;
    Ok(pair_normalization(fugacity, phase, alpha, beta) * sum)
}

/// The two-rhombus quadratic residual. Returns the closed form; for convex
/// angle pairs it also enumerates the contour sum and insists the two
/// agree. At `beta = -alpha` the closed form reduces to
/// `(phi(pi+alpha) - phi(alpha-pi)) * n * (inversion residual)`.
pub fn two_rhombus_residual(alpha: f64, beta: f64, params: &DenseParams) -> Result<Complex64> {
    use std::f64::consts::PI;
    let w_alpha = dense_weights(alpha, params);
    let w_beta = dense_weights(beta, params);
    let phase = params.spin_phase();
    let n = params.fugacity();
    let closed = two_rhombus_quadratic(&w_alpha, &w_beta, n, phase);
    let convex = alpha > 0.0 && alpha < PI && beta > 0.0 && beta < PI;
    if convex {
        let enumerated = two_rhombus_enumerated(
            &w_alpha,
            &w_beta,
            n,
            phase,
            EnumerationLimits::from_env(),
        )?;
        let deviation = (enumerated - closed).norm();
        if deviation > CLOSED_FORM_TOL {
            return Err(Error::CheckFailed {
                key: KEY_PAIR_QUADRATIC.into(),
                deviation,
            });
        }
    }
    Ok(closed)
}

/// Phase normalizing hexagon contour sums: contour times
/// `fugacity / hexagon_entry_phase` lands on the closed-form side.
pub fn hexagon_entry_phase(alpha: f64) -> Complex64 {
    Complex64::from_polar(1.0, std::f64::consts::PI - alpha)
}

/// The five exterior patterns of the hexagon as boundary offsets from the
/// entry, in the frozen order I..V used by the report keys.
pub const HEX_EXTERNAL_OFFSETS: [[(usize, usize); 3]; 5] = [
    [(0, 1), (2, 3), (4, 5)],
    [(0, 5), (1, 4), (2, 3)],
    [(0, 1), (2, 5), (3, 4)],
    [(0, 5), (1, 2), (3, 4)],
    [(0, 3), (1, 2), (4, 5)],
];

/// Entry side of the hexagon arrangements: the first boundary side of the
/// middle rhombus, shared between arrangements through its midpoint.
pub(crate) fn hexagon_entry(domain: &RhombicDomain) -> usize {
    domain
        .boundary_index((1, 1))
        .expect("side (1,1) lies on the hexagon boundary")
}

/// The five closed-form prefactors multiplying the three-rhombus weight
/// function in the star-minus-triangle differences, in the order I..V.
pub fn star_triangle_prefactors(
    alpha: f64,
    beta: f64,
    fugacity: f64,
    phase: SpinPhase,
) -> [Complex64; 5] {
    use std::f64::consts::PI;
    let p = |t: f64| phase.phi(t);
    let n = fugacity;
    let n2 = n * n;
    let n3 = n2 * n;
    [
        p(alpha - 2.0 * PI) * n - p(alpha) * n + p(-beta) * n3 - Complex64::from(n3),
        (p(-beta) - p(2.0 * PI - beta)) * n2,
        (p(alpha - 2.0 * PI) - p(alpha)) * n2,
        Complex64::from(n3) - p(2.0 * PI - beta) * n + p(-beta) * n - p(alpha) * n3,
        (p(-beta) - p(alpha)) * 2.0 * n2,
    ]
}

fn hexagon_weights(
    plaquettes: &[DenseWeights; 3],
    fugacity: f64,
    phase: SpinPhase,
) -> Result<ModelWeights> {
    ModelWeights::from_parts(
        plaquettes
            .iter()
            .map(|w| PlaquetteWeightSet::Dense(*w))
            .collect(),
        fugacity,
        phase,
    )
}

/// Enumerated hexagon contour sum under one offset pattern, normalized by
/// `fugacity / hexagon_entry_phase(alpha)`.
fn hexagon_contour_normalized(
    domain: &RhombicDomain,
    entry: usize,
    weights: &ModelWeights,
    offsets: &[(usize, usize)],
    alpha: f64,
    limits: EnumerationLimits,
) -> Result<Complex64> {
    let external = offset_external(domain, entry, offsets)?;
    let sum = contour_sum(domain, weights, &external, limits)?;
    Ok(sum * weights.fugacity() / hexagon_entry_phase(alpha))
}

/// Enumerated single-arrangement hexagon contour sum under the crossing
/// pattern V, on arbitrary weights; returns the normalized enumerated value
/// and the closed form `(phi(-beta) - phi(alpha)) n^2 YB`.
pub fn hexagon_yb_direct_with(
    plaquettes: &[DenseWeights; 3],
    fugacity: f64,
    phase: SpinPhase,
    limits: EnumerationLimits,
) -> Result<(Complex64, Complex64)> {
    let (alpha, beta, gamma) = (
        plaquettes[0].alpha,
        plaquettes[1].alpha,
        plaquettes[2].alpha,
    );
    let domain = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star)?;
    let weights = hexagon_weights(plaquettes, fugacity, phase)?;
    let entry = hexagon_entry(&domain);
    let enumerated = hexagon_contour_normalized(
        &domain,
        entry,
        &weights,
        &HEX_EXTERNAL_OFFSETS[4],
        alpha,
        limits,
    )?;
    let yb = dense_yb_function(&plaquettes[0], &plaquettes[1], &plaquettes[2], fugacity);
    let closed =
        (phase.phi(-beta) - phase.phi(alpha)) * fugacity * fugacity * yb;
    Ok((enumerated, closed))
}

/// Single-arrangement hexagon identity at the critical weights: the
/// normalized contour sum under pattern V equals
/// `(phi(-beta) - phi(alpha)) n^2 YB(alpha, beta, gamma)` and vanishes on
/// the critical family.
pub fn hexagon_yb_direct(alpha: f64, beta: f64, params: &DenseParams) -> Result<Complex64> {
    let gamma = 2.0 * std::f64::consts::PI - alpha - beta;
    let plaquettes = [
        dense_weights(alpha, params),
        dense_weights(beta, params),
        dense_weights(gamma, params),
    ];
    let (enumerated, closed) = hexagon_yb_direct_with(
        &plaquettes,
        params.fugacity(),
        params.spin_phase(),
        EnumerationLimits::from_env(),
    )?;
    let deviation = (enumerated - closed).norm();
    if deviation > CLOSED_FORM_TOL {
        return Err(Error::CheckFailed {
            key: KEY_HEX_DIRECT.into(),
            deviation,
        });
    }
    Ok(enumerated)
}

/// Star-minus-triangle contour differences under the five exterior
/// patterns, on arbitrary weights; returns the normalized differences and
/// their closed forms `prefactor_k * YB`.
pub fn star_triangle_differences_with(
    plaquettes: &[DenseWeights; 3],
    fugacity: f64,
    phase: SpinPhase,
    limits: EnumerationLimits,
) -> Result<([Complex64; 5], [Complex64; 5])> {
    let (alpha, beta, gamma) = (
        plaquettes[0].alpha,
        plaquettes[1].alpha,
        plaquettes[2].alpha,
    );
    let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star)?;
    let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle)?;
    let weights = hexagon_weights(plaquettes, fugacity, phase)?;
    let entry_star = hexagon_entry(&star);
    let entry_triangle =
        triangle.boundary_index_at(star.boundary_midpoint(entry_star))?;
    let yb = dense_yb_function(&plaquettes[0], &plaquettes[1], &plaquettes[2], fugacity);
    let prefactors = star_triangle_prefactors(alpha, beta, fugacity, phase);
    let mut enumerated = [Complex64::default(); 5];
    let mut closed = [Complex64::default(); 5];
    for k in 0..5 {
        let s = hexagon_contour_normalized(
            &star,
            entry_star,
            &weights,
            &HEX_EXTERNAL_OFFSETS[k],
            alpha,
            limits,
        )?;
        let t = hexagon_contour_normalized(
            &triangle,
            entry_triangle,
            &weights,
            &HEX_EXTERNAL_OFFSETS[k],
            alpha,
            limits,
        )?;
        enumerated[k] = s - t;
        closed[k] = prefactors[k] * yb;
    }
    Ok((enumerated, closed))
}

/// Star-minus-triangle differences at the critical weights; each must
/// match its closed form, and all vanish on the critical family.
pub fn dense_star_triangle_differences(
    alpha: f64,
    beta: f64,
    params: &DenseParams,
) -> Result<[Complex64; 5]> {
    let gamma = 2.0 * std::f64::consts::PI - alpha - beta;
    let plaquettes = [
        dense_weights(alpha, params),
        dense_weights(beta, params),
        dense_weights(gamma, params),
    ];
    let (enumerated, closed) = star_triangle_differences_with(
        &plaquettes,
        params.fugacity(),
        params.spin_phase(),
        EnumerationLimits::from_env(),
    )?;
    for k in 0..5 {
        let deviation = (enumerated[k] - closed[k]).norm();
        if deviation > CLOSED_FORM_TOL {
            return Err(Error::CheckFailed {
                key: KEY_STAR_DIFF[k].into(),
                deviation,
            });
        }
    }
    Ok(enumerated)
}
