//! Partition functions resolved by boundary connectivity, and their
//! invariance under the local three-rhombus rearrangement: the partition
//! table and the boundary observable are unchanged when a star fan is
//! swapped for the triangle fan on the same hexagonal outline.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::combinatorics::{glue, ChordDiagram};
use crate::enumeration::{
    config_weight, enumerate_configs, internal_chord_diagram, EnumerationLimits, ExternalDiagram,
    ModelWeights,
};
use crate::error::{Error, Result};
use crate::geometry::RhombicDomain;
use crate::observable::psi;

/// Partition function per boundary connectivity: for each internal chord
/// diagram, the sum over configurations realizing it of the plaquette
/// weight product times fugacity^(loops closed inside the domain).
pub type DiagramPartition = BTreeMap<ChordDiagram, f64>;

/// Accumulates the partition table by exact enumeration over
/// bulk-consistent configurations.
pub fn partition_by_diagram(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    limits: EnumerationLimits,
) -> Result<DiagramPartition> {
    let mut table = DiagramPartition::new();
    for config in enumerate_configs(domain, weights.model(), false, limits)? {
        let (diagram, interior_loops) = internal_chord_diagram(domain, &config)?;
        let mut weight = weights.fugacity().powi(interior_loops as i32);
        for r in 0..domain.rhombi().len() {
            weight *= weights.weight_of(r, config.label(r))?;
        }
        *table.entry(diagram).or_insert(0.0) += weight;
    }
    Ok(table)
}

/// Index map sending each boundary position of `from` to the position of
/// the same physical midpoint on `to`; errors when the outlines differ.
pub fn boundary_index_map(from: &RhombicDomain, to: &RhombicDomain) -> Result<Vec<usize>> {
    if from.boundary_len() != to.boundary_len() {
        return Err(Error::BoundaryMismatch(format!(
            "boundary lengths differ: {} vs {}",
            from.boundary_len(),
            to.boundary_len()
        )));
    }
    (0..from.boundary_len())
        .map(|j| {
            to.boundary_index_at(from.boundary_midpoint(j))
                .map_err(|_| {
                    Error::BoundaryMismatch(format!(
                        "midpoint {j} of the first domain is absent from the second"
                    ))
                })
        })
        .collect()
}

/// Rewrites an exterior pattern through a boundary index map.
pub fn remap_external(external: &ExternalDiagram, map: &[usize]) -> Result<ExternalDiagram> {
    let m = external.point_count();
    if map.len() != m {
        return Err(Error::InvalidArgument(
            "index map length does not match the pattern".into(),
        ));
    }
    let chords: Vec<(usize, usize)> = external
        .chords()
        .iter()
        .map(|&(x, y)| (map[x], map[y]))
        .collect();
    match external.bpoint() {
        Some(bp) => ExternalDiagram::dense(m, map[external.entry()], map[bp], &chords),
        None => ExternalDiagram::dilute(m, map[external.entry()], &chords),
    }
}

fn remap_diagram(diagram: &ChordDiagram, map: &[usize]) -> Result<ChordDiagram> {
    let chords: Vec<(usize, usize)> = diagram
        .chords()
        .iter()
        .map(|&(x, y)| (map[x].min(map[y]), map[x].max(map[y])))
        .collect();
    ChordDiagram::new(diagram.point_count(), &chords)
}

/// Largest per-connectivity deviation between the partition tables of two
/// domains sharing one boundary; connectivities absent from one side count
/// as zero.
pub fn z_invariance_residual_with(
    first: &RhombicDomain,
    first_weights: &ModelWeights,
    second: &RhombicDomain,
    second_weights: &ModelWeights,
    limits: EnumerationLimits,
) -> Result<f64> {
    let map = boundary_index_map(second, first)?;
    let table_first = partition_by_diagram(first, first_weights, limits)?;
    let table_second = partition_by_diagram(second, second_weights, limits)?;
    let mut aligned = DiagramPartition::new();
    for (diagram, value) in &table_second {
        *aligned.entry(remap_diagram(diagram, &map)?).or_insert(0.0) += value;
    }
    let mut worst: f64 = 0.0;
    for key in table_first.keys().chain(aligned.keys()) {
        let a = table_first.get(key).copied().unwrap_or(0.0);
        let b = aligned.get(key).copied().unwrap_or(0.0);
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

/// Per-connectivity comparison rows for two domains sharing one boundary:
/// `(encoding, first value, second value, absolute difference)`, sorted by
/// encoding.
pub fn partition_comparison(
    first: &RhombicDomain,
    first_weights: &ModelWeights,
    second: &RhombicDomain,
    second_weights: &ModelWeights,
    limits: EnumerationLimits,
) -> Result<Vec<(String, f64, f64, f64)>> {
    let map = boundary_index_map(second, first)?;
    let table_first = partition_by_diagram(first, first_weights, limits)?;
    let table_second = partition_by_diagram(second, second_weights, limits)?;
    let mut aligned = DiagramPartition::new();
    for (diagram, value) in &table_second {
        *aligned.entry(remap_diagram(diagram, &map)?).or_insert(0.0) += value;
    }
    let mut rows = Vec::new();
    let mut keys: Vec<&ChordDiagram> = table_first.keys().chain(aligned.keys()).collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        let a = table_first.get(key).copied().unwrap_or(0.0);
        let b = aligned.get(key).copied().unwrap_or(0.0);
        rows.push((key.encode(), a, b, (a - b).abs()));
    }
    Ok(rows)
}

/// CSV rendering of a partition comparison.
pub fn partition_csv(rows: &[(String, f64, f64, f64)]) -> String {
    let mut out = String::from("diagram,p_first,p_second,abs_diff\n");
    for (encoding, a, b, diff) in rows {
        out.push_str(&format!("{encoding},{a:.17e},{b:.17e},{diff:.3e}\n"));
    }
    out
}

/// The observable at one boundary midpoint under one exterior pattern.
pub fn boundary_observable(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    z: Complex64,
    external: &ExternalDiagram,
    limits: EnumerationLimits,
) -> Result<Complex64> {
    let j = domain.boundary_index_at(z)?;
    Ok(psi(domain, weights, external, limits)?.boundary[j])
}

/// Largest pointwise deviation of the boundary observable between two
/// domains sharing one boundary, for one exterior pattern given on the
/// first domain's indexing.
pub fn boundary_observable_residual(
    first: &RhombicDomain,
    first_weights: &ModelWeights,
    second: &RhombicDomain,
    second_weights: &ModelWeights,
    external: &ExternalDiagram,
    limits: EnumerationLimits,
) -> Result<f64> {
    let map = boundary_index_map(first, second)?;
    let external_second = remap_external(external, &map)?;
    let map_first = psi(first, first_weights, external, limits)?;
    let map_second = psi(second, second_weights, &external_second, limits)?;
    let mut worst: f64 = 0.0;
    for (j, &mj) in map.iter().enumerate() {
        worst = worst.max((map_first.boundary[j] - map_second.boundary[mj]).norm());
    }
    Ok(worst)
}

/// Grouping-completeness identity: for any exterior pattern, the full
/// configuration sum equals the partition table folded with the loop
/// factors from gluing each connectivity against the exterior chords.
pub fn partition_completeness_residual(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    external: &ExternalDiagram,
    limits: EnumerationLimits,
) -> Result<f64> {
    let table = partition_by_diagram(domain, weights, limits)?;
    let exterior = external.exterior_diagram();
    let mut folded = 0.0;
    for (diagram, value) in &table {
        let loops = glue(diagram, &exterior)?.closed_loops;
        folded += value * weights.fugacity().powi(loops as i32);
    }
    let mut direct = 0.0;
    for config in enumerate_configs(domain, weights.model(), false, limits)? {
        direct += config_weight(domain, &config, external, weights)?;
    }
    Ok((folded - direct).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::{dense_externals, dilute_externals, trace_path, Configuration};
    use crate::geometry::{
        make_domain_four, make_domain_hexagon, make_domain_single, star_triangle_move,
        HexArrangement,
    };
    use crate::weights::{
        dense_weights, dilute_weights, DenseParams, DiluteParams, Model,
    };
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn limits() -> EnumerationLimits {
        EnumerationLimits::default()
    }

    #[test]
    fn single_rhombus_partition_is_the_weights() {
        let alpha = 1.1;
        let params = DenseParams::new(0.8, 0).unwrap();
        let domain = make_domain_single(alpha).unwrap();
        let weights = ModelWeights::dense(&domain, &params);
        let table = partition_by_diagram(&domain, &weights, limits()).unwrap();
        assert_eq!(table.len(), 2);
        let w = dense_weights(alpha, &params);
        for (idx, expected) in [(0usize, w.a), (1usize, w.b)] {
            let config = Configuration::new(Model::Dense, vec![idx]).unwrap();
            let (diagram, _) = internal_chord_diagram(&domain, &config).unwrap();
            assert!((table[&diagram] - expected).abs() < 1e-15);
        }

        let params = DiluteParams::new(0.6).unwrap();
        let weights = ModelWeights::dilute(&domain, &params);
        let table = partition_by_diagram(&domain, &weights, limits()).unwrap();
        let w = dilute_weights(alpha, &params);
        let empty = ChordDiagram::new(4, &[]).unwrap();
        assert!((table[&empty] - w.t).abs() < 1e-15);
        // nine states, but the two u1 states (and u2, v) share diagrams
        // only when their arcs coincide, which they do not: one key each
        assert_eq!(table.len(), 9);
    }

    #[test]
    fn hexagon_partition_covers_and_completes() {
        let params = DenseParams::new(1.0, 0).unwrap();
        let third = 2.0 * PI / 3.0;
        let hex = make_domain_hexagon(third, third, third, HexArrangement::Star).unwrap();
        let weights = ModelWeights::dense(&hex, &params);
        let table = partition_by_diagram(&hex, &weights, limits()).unwrap();
        assert_eq!(table.len(), 5, "all five pairings occur");
        for external in dense_externals(hex.boundary_len(), 0).unwrap() {
            let residual =
                partition_completeness_residual(&hex, &weights, &external, limits()).unwrap();
            assert!(residual < 1e-13, "residual {residual:e}");
        }
    }

    #[test]
    fn dilute_hexagon_empty_connectivity_value() {
        let eta = 0.55;
        let params = DiluteParams::new(eta).unwrap();
        let third = 2.0 * PI / 3.0;
        let hex = make_domain_hexagon(third, third, third, HexArrangement::Star).unwrap();
        let weights = ModelWeights::dilute(&hex, &params);
        let table = partition_by_diagram(&hex, &weights, limits()).unwrap();
        let empty = ChordDiagram::new(6, &[]).unwrap();
        let w = dilute_weights(third, &params);
        // all-empty plaquettes, plus the central loop closed by the three
        // crossing states along the internal sides
        let expected = w.t.powi(3) + params.fugacity() * w.u2.powi(3);
        assert!(
            (table[&empty] - expected).abs() < 1e-14,
            "got {} expected {expected}",
            table[&empty]
        );
    }

    #[test]
    fn hexagon_rearrangement_preserves_partitions() {
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
        let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle).unwrap();

        let params = DenseParams::new(0.9, 0).unwrap();
        let ws = ModelWeights::dense(&star, &params);
        let wt = ModelWeights::dense(&triangle, &params);
        let residual = z_invariance_residual_with(&star, &ws, &triangle, &wt, limits()).unwrap();
        assert!(residual < 1e-12, "dense residual {residual:e}");

        let params = DiluteParams::new(0.55).unwrap();
        let third = 2.0 * PI / 3.0;
        let star = make_domain_hexagon(third, third, third, HexArrangement::Star).unwrap();
        let triangle =
            make_domain_hexagon(third, third, third, HexArrangement::Triangle).unwrap();
        let ws = ModelWeights::dilute(&star, &params);
        let wt = ModelWeights::dilute(&triangle, &params);
        let residual = z_invariance_residual_with(&star, &ws, &triangle, &wt, limits()).unwrap();
        assert!(residual < 1e-12, "dilute residual {residual:e}");
    }

    #[test]
    fn off_family_weights_break_invariance() {
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
        let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle).unwrap();
        let params = DenseParams::new(0.9, 0).unwrap();
        let shifted = DenseParams::new(0.95, 0).unwrap();
        let ws = ModelWeights::dense(&star, &params);
        // weights from a shifted family member, loop fugacity held fixed
        let wt = ModelWeights::from_parts(
            ModelWeights::dense(&triangle, &shifted).plaquettes().to_vec(),
            params.fugacity(),
            params.spin_phase(),
        )
        .unwrap();
        let residual = z_invariance_residual_with(&star, &ws, &triangle, &wt, limits()).unwrap();
        assert!(residual > 1e-4, "residual {residual:e}");
    }

    #[test]
    fn boundary_observable_matches_psi_on_single_rhombus() {
        let domain = make_domain_single(1.1).unwrap();
        let params = DenseParams::new(0.8, 0).unwrap();
        let weights = ModelWeights::dense(&domain, &params);
        let e = domain.boundary_index((0, 0)).unwrap();
        let external =
            ExternalDiagram::dense(4, e, (e + 1) % 4, &[((e + 2) % 4, (e + 3) % 4)]).unwrap();
        let map = psi(&domain, &weights, &external, limits()).unwrap();
        for j in 0..4 {
            let z = domain.boundary_midpoint(j);
            let value = boundary_observable(&domain, &weights, z, &external, limits()).unwrap();
            assert!((value - map.boundary[j]).norm() < 1e-15);
        }
    }

    #[test]
    fn rearrangement_preserves_boundary_observable() {
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
        let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle).unwrap();
        let params = DenseParams::new(0.9, 0).unwrap();
        let ws = ModelWeights::dense(&star, &params);
        let wt = ModelWeights::dense(&triangle, &params);
        for entry in 0..star.boundary_len() {
            for external in dense_externals(star.boundary_len(), entry).unwrap() {
                let worst = boundary_observable_residual(
                    &star, &ws, &triangle, &wt, &external, limits(),
                )
                .unwrap();
                assert!(worst < 1e-10, "entry {entry}: worst {worst:e}");
            }
        }

        let params = DiluteParams::new(0.55).unwrap();
        let third = 2.0 * PI / 3.0;
        let star = make_domain_hexagon(third, third, third, HexArrangement::Star).unwrap();
        let triangle =
            make_domain_hexagon(third, third, third, HexArrangement::Triangle).unwrap();
        let ws = ModelWeights::dilute(&star, &params);
        let wt = ModelWeights::dilute(&triangle, &params);
        for entry in 0..star.boundary_len() {
            for external in dilute_externals(star.boundary_len(), entry).unwrap() {
                let worst = boundary_observable_residual(
                    &star, &ws, &triangle, &wt, &external, limits(),
                )
                .unwrap();
                assert!(worst < 1e-10, "entry {entry}: worst {worst:e}");
            }
        }
    }

    #[test]
    fn four_rhombus_internal_move_is_invariant() {
        let domain = make_domain_four(2.0, 2.2, 0.9, HexArrangement::Star).unwrap();
        let moved = star_triangle_move(&domain, &[0, 1, 2]).unwrap();
        let params = DenseParams::new(0.9, 0).unwrap();
        let w1 = ModelWeights::dense(&domain, &params);
        let w2 = ModelWeights::dense(&moved, &params);
        let residual = z_invariance_residual_with(&domain, &w1, &moved, &w2, limits()).unwrap();
        assert!(residual < 1e-10, "partition residual {residual:e}");
        let m = domain.boundary_len();
        for entry in 0..m {
            for external in dense_externals(m, entry).unwrap() {
                let worst = boundary_observable_residual(
                    &domain, &w1, &moved, &w2, &external, limits(),
                )
                .unwrap();
                assert!(worst < 1e-10, "entry {entry}: worst {worst:e}");
            }
        }
    }

    #[test]
    fn winding_is_rigid_within_a_connectivity() {
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let hex = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
        for entry in 0..hex.boundary_len() {
            for external in dense_externals(hex.boundary_len(), entry).unwrap() {
                let mut seen: BTreeMap<(String, usize), f64> = BTreeMap::new();
                for config in
                    enumerate_configs(&hex, Model::Dense, false, limits()).unwrap()
                {
                    let (diagram, _) = internal_chord_diagram(&hex, &config).unwrap();
                    let trace = trace_path(&hex, &config, &external).unwrap().unwrap();
                    for &(point, winding) in &trace.visited {
                        let crate::enumeration::PathPoint::Boundary(j) = point else {
                            continue;
                        };
                        let key = (diagram.encode(), j);
                        if let Some(&prior) = seen.get(&key) {
                            assert!(
                                (prior - winding).abs() < 1e-9,
                                "winding differs within one connectivity"
                            );
                        } else {
                            seen.insert(key, winding);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn comparison_rows_render_as_csv() {
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
        let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle).unwrap();
        let params = DenseParams::new(0.9, 0).unwrap();
        let ws = ModelWeights::dense(&star, &params);
        let wt = ModelWeights::dense(&triangle, &params);
        let rows = partition_comparison(&star, &ws, &triangle, &wt, limits()).unwrap();
        assert_eq!(rows.len(), 5);
        let csv = partition_csv(&rows);
        assert!(csv.starts_with("diagram,p_first,p_second,abs_diff\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dense_rearrangement_invariance_on_family(
            alpha in 1.8f64..2.3,
            beta in 1.8f64..2.3,
            lambda in 0.2f64..1.4,
            ell in 0i32..2,
        ) {
            let gamma = 2.0 * PI - alpha - beta;
            let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
            let triangle =
                make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle).unwrap();
            let params = DenseParams::new(lambda, ell).unwrap();
            let ws = ModelWeights::dense(&star, &params);
            let wt = ModelWeights::dense(&triangle, &params);
            let residual =
                z_invariance_residual_with(&star, &ws, &triangle, &wt, limits()).unwrap();
            prop_assert!(residual < 1e-10, "residual {residual:e}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dilute_rearrangement_invariance_on_family(
            alpha in 1.8f64..2.3,
            beta in 1.8f64..2.3,
            eta in 0.15f64..0.72,
        ) {
            let gamma = 2.0 * PI - alpha - beta;
            let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star).unwrap();
            let triangle =
                make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle).unwrap();
            let params = DiluteParams::new(eta).unwrap();
            let ws = ModelWeights::dilute(&star, &params);
            let wt = ModelWeights::dilute(&triangle, &params);
            let residual =
                z_invariance_residual_with(&star, &ws, &triangle, &wt, limits()).unwrap();
            prop_assert!(residual < 1e-10, "residual {residual:e}");
        }
    }
}
