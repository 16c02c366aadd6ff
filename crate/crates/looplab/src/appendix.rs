//! Reduction of the dilute three-rhombus identities to a single generator.
//!
//! The six local relations produced by the hexagon contour argument are
//! linear in the Yang-Baxter combinations `YB_1..YB_6` evaluated at
//! permuted rhombus roles.  After the exact argument symmetries are used
//! to fuse columns, 27 canonical unknowns remain; this module builds the
//! full relation system over those unknowns, replays the elimination
//! chain that collapses it to one nonzero multiple of a single unknown,
//! and certifies the trivial null space by singular values.  A sampling
//! fit also identifies which enumerated star-minus-triangle difference
//! realises which relation, since the printed forms cover only six of
//! the 21 external connectivities.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::enumeration::{
    dilute_externals, EnumerationLimits, ModelWeights, PlaquetteWeightSet,
};
use crate::error::{Error, Result};
use crate::geometry::{make_domain_hexagon, HexArrangement};
use crate::observable::{contour_sum, hexagon_entry};
use crate::weights::{
    dilute_weights, dilute_yb_functions, DiluteParams, DiluteWeights, SpinPhase,
};
use crate::zinvariance::{boundary_index_map, remap_external};

/// Singular values below this fraction of the largest count as null
/// directions; above it the null space is declared trivial.
pub const NULLSPACE_RATIO_CUTOFF: f64 = 1e-8;
/// Pivots and closed-form factors smaller than this abort the chain with a
/// degenerate-parameters error instead of dividing.
pub const DEGENERACY_CUTOFF: f64 = 1e-10;
/// Relative residual allowed when fitting an enumerated difference onto
/// the span of the canonical unknowns.
pub const FIT_RESIDUAL_TOL: f64 = 1e-9;
/// Relative residual under which a difference counts as proportional to a
/// single relation row.
pub const PROJECTION_TOL: f64 = 1e-8;

/// Number of relations per role assignment.
pub const RELATION_COUNT: usize = 6;
/// Number of canonical unknowns after the symmetry substitutions.
pub const UNKNOWN_COUNT: usize = 27;

const LEX_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Canonical representative and sign of `YB_func(args)` under the exact
/// argument symmetries: `YB_2` flips sign when its outer slots are
/// reversed, `YB_5` is invariant under the same reversal, and `YB_3` is
/// symmetric in its last two slots.  Other functions keep their arguments
/// as written (further numerical symmetries exist but are not used to
/// fuse columns).
pub fn canonical(func: usize, args: [usize; 3]) -> ([usize; 3], f64) {
    let rev = [args[2], args[1], args[0]];
    match func {
        2 => {
            if args <= rev {
                (args, 1.0)
            } else {
                (rev, -1.0)
            }
        }
        5 => (args.min(rev), 1.0),
        3 => {
            let sw = [args[0], args[2], args[1]];
            (args.min(sw), 1.0)
        }
        _ => (args, 1.0),
    }
}

/// Fixed ordered list of the canonical unknowns: function indices `1..=6`
/// crossed with role permutations in lexicographic order, deduplicated by
/// [`canonical`].  Every coefficient lookup routes through this table so
/// signs from the substitutions are applied uniformly.
#[derive(Debug, Clone)]
pub struct YbIndex {
    list: Vec<(usize, [usize; 3])>,
}

impl YbIndex {
    pub fn new() -> Self {
        let mut list = Vec::with_capacity(UNKNOWN_COUNT);
        for func in 1..=RELATION_COUNT {
            for perm in LEX_PERMS {
                let (args, _) = canonical(func, perm);
                if !list.contains(&(func, args)) {
                    list.push((func, args));
                }
            }
        }
        debug_assert_eq!(list.len(), UNKNOWN_COUNT);
        Self { list }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    /// Column index and sign of `YB_func(args)` after canonicalization.
    pub fn column(&self, func: usize, args: [usize; 3]) -> (usize, f64) {
        let (canon, sign) = canonical(func, args);
        let pos = self
            .list
            .iter()
            .position(|&u| u == (func, canon))
            .expect("every function and permutation has a canonical column");
        (pos, sign)
    }

    /// The `(function, arguments)` pair stored at a column.
    pub fn unknown(&self, column: usize) -> (usize, [usize; 3]) {
        self.list[column]
    }

    fn add_term(&self, row: &mut [Complex64], coeff: Complex64, func: usize, args: [usize; 3]) {
        let (pos, sign) = self.column(func, args);
        row[pos] += coeff * sign;
    }
}

impl Default for YbIndex {
    fn default() -> Self {
        Self::new()
    }
}

/// Evaluates the canonical unknowns on a concrete weight triple: column
/// `k` holds `YB_func(args)` where `args` picks rhombi out of `w` by role
/// before the six combination functions are evaluated.
pub fn yb_values(index: &YbIndex, w: &[DiluteWeights; 3], n: f64) -> [f64; UNKNOWN_COUNT] {
    let mut out = [0.0; UNKNOWN_COUNT];
    for (k, &(func, args)) in index.list.iter().enumerate() {
        let permuted = [w[args[0]], w[args[1]], w[args[2]]];
        out[k] = dilute_yb_functions(&permuted, n)[func - 1];
    }
    out
}

type Row = Vec<Complex64>;

/// The six relation rows for one assignment of the hexagon angles to the
/// template roles: slot `k` of `assignment` names which angle plays role
/// `k`.  Rows are ordered as the elimination chain consumes them: the two
/// rows solved for single unknowns first, then the three rows that get
/// simplified, then the wide row carrying `YB_6`.
pub fn relation_rows(
    index: &YbIndex,
    assignment: [usize; 3],
    angles: [f64; 3],
    n: f64,
    phase: SpinPhase,
) -> [Row; RELATION_COUNT] {
    let [a, b, g] = assignment;
    let al = angles[a];
    let be = angles[b];
    let ph = |t: f64| phase.phi(t);
    let re = |x: f64| Complex64::new(x, 0.0);
    let mut rows: [Row; RELATION_COUNT] =
        std::array::from_fn(|_| vec![Complex64::default(); index.len()]);

    let r = &mut rows[0];
    index.add_term(r, ph(al), 4, [a, g, b]);
    index.add_term(r, -n * ph(al), 4, [b, g, a]);
    index.add_term(r, re(n), 2, [a, b, g]);
    index.add_term(r, -ph(PI), 1, [a, g, b]);
    index.add_term(r, ph(al + PI), 3, [g, a, b]);
    index.add_term(r, -ph(al - 3.0 * PI), 5, [a, g, b]);

    let r = &mut rows[1];
    index.add_term(r, ph(al - PI), 4, [b, g, a]);
    index.add_term(r, -n * ph(al - PI), 4, [a, g, b]);
    index.add_term(r, ph(al), 5, [a, g, b]);
    index.add_term(r, -n * ph(al), 3, [g, a, b]);
    index.add_term(r, re(n), 1, [a, g, b]);
    index.add_term(r, ph(-PI), 2, [g, b, a]);

    let r = &mut rows[2];
    index.add_term(r, ph(-be), 1, [a, g, b]);
    index.add_term(r, -ph(al), 1, [b, g, a]);
    index.add_term(r, ph(PI - be), 2, [a, b, g]);
    index.add_term(r, ph(al - PI), 2, [g, a, b]);

    let r = &mut rows[3];
    index.add_term(r, n * ph(PI - be), 4, [b, g, a]);
    index.add_term(r, -ph(PI - be), 4, [a, g, b]);
    index.add_term(r, n * ph(-be), 3, [g, a, b]);
    index.add_term(r, -ph(-be), 5, [a, g, b]);
    index.add_term(r, re(-n), 1, [b, g, a]);
    index.add_term(r, ph(PI), 2, [b, a, g]);

    let r = &mut rows[4];
    index.add_term(r, n * ph(-be), 4, [a, g, b]);
    index.add_term(r, -ph(-be), 4, [b, g, a]);
    index.add_term(r, re(n), 2, [g, a, b]);
    index.add_term(r, ph(-PI), 1, [b, g, a]);
    index.add_term(r, -ph(-be - PI), 3, [g, a, b]);
    index.add_term(r, ph(3.0 * PI - be), 5, [a, g, b]);

    let r = &mut rows[5];
    index.add_term(r, ph(al) * (1.0 - n * n), 6, [a, b, g]);
    index.add_term(r, re(n * n), 3, [a, b, g]);
    index.add_term(r, re(-n), 5, [b, a, g]);
    index.add_term(r, n * ph(2.0 * PI - be), 5, [a, g, b]);
    index.add_term(r, -ph(2.0 * PI - be), 3, [g, a, b]);
    index.add_term(r, n * ph(-be - PI), 4, [a, g, b]);
    index.add_term(r, -ph(-be - PI), 4, [b, g, a]);
    index.add_term(r, n * ph(-PI), 4, [b, a, g]);
    index.add_term(r, -ph(-PI), 4, [g, a, b]);

    rows
}

/// The full relation system over the canonical unknowns: six role
/// assignments times six relations, 36 rows in all.  The first block uses
/// the identity assignment and matches the printed relations directly.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    index: YbIndex,
    rows: Vec<Row>,
    labels: Vec<(usize, [usize; 3])>,
}

impl LinearSystem {
    pub fn index(&self) -> &YbIndex {
        &self.index
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// `(relation, assignment)` of a row.
    pub fn row_label(&self, row: usize) -> (usize, [usize; 3]) {
        self.labels[row]
    }

    /// The identity-assignment block, one row per printed relation.
    pub fn displayed_rows(&self) -> &[Row] {
        &self.rows[..RELATION_COUNT]
    }

    /// Largest `|row . values|` over all rows; vanishes when the values
    /// solve every relation.
    pub fn max_row_residual(&self, values: &[f64; UNKNOWN_COUNT]) -> f64 {
        self.rows
            .iter()
            .map(|row| {
                let mut acc = Complex64::default();
                for (c, v) in row.iter().zip(values) {
                    acc += *c * *v;
                }
                acc.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Singular values of the real form (real and imaginary parts stacked
    /// as separate rows), descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let m = self.rows.len();
        let stacked = DMatrix::from_fn(2 * m, UNKNOWN_COUNT, |i, j| {
            if i < m {
                self.rows[i][j].re
            } else {
                self.rows[i - m][j].im
            }
        });
        stacked.svd(false, false).singular_values.iter().copied().collect()
    }

    /// Smallest over largest singular value; the null space is trivial
    /// when this exceeds [`NULLSPACE_RATIO_CUTOFF`].
    pub fn nullspace_ratio(&self) -> f64 {
        let sv = self.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }

    /// Numerical rank at the [`NULLSPACE_RATIO_CUTOFF`] threshold.
    pub fn rank(&self) -> usize {
        let sv = self.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > max * NULLSPACE_RATIO_CUTOFF).count()
    }
}

/// Builds the 36-row system at `gamma = 2 pi - alpha - beta`.
pub fn appendix_system(alpha: f64, beta: f64, n: f64, phase: SpinPhase) -> LinearSystem {
    let angles = [alpha, beta, 2.0 * PI - alpha - beta];
    let index = YbIndex::new();
    let mut rows = Vec::with_capacity(LEX_PERMS.len() * RELATION_COUNT);
    let mut labels = Vec::with_capacity(rows.capacity());
    for assignment in LEX_PERMS {
        let block = relation_rows(&index, assignment, angles, n, phase);
        for (relation, row) in block.into_iter().enumerate() {
            rows.push(row);
            labels.push((relation, assignment));
        }
    }
    LinearSystem { index, rows, labels }
}

fn scaled(row: &[Complex64], c: Complex64) -> Row {
    row.iter().map(|&x| x * c).collect()
}

/// Subtracts multiples of pivot rows to zero the named columns, guarding
/// every division by a pivot coefficient.
fn eliminate(mut row: Row, pivots: &[(usize, &Row, &str)]) -> Result<Row> {
    for &(col, pivot_row, factor) in pivots {
        let p = pivot_row[col];
        if p.norm() < DEGENERACY_CUTOFF {
            return Err(Error::DegenerateParameters {
                factor: factor.to_string(),
                value: p.norm(),
            });
        }
        let c = row[col] / p;
        for (r, q) in row.iter_mut().zip(pivot_row) {
            *r -= c * q;
        }
    }
    Ok(row)
}

fn build_row(index: &YbIndex, terms: &[(Complex64, usize, [usize; 3])]) -> Row {
    let mut row = vec![Complex64::default(); index.len()];
    for &(c, f, args) in terms {
        index.add_term(&mut row, c, f, args);
    }
    row
}

/// Distance of `got` from the complex line spanned by `expected`,
/// relative to the size of `got`.
fn up_to_scale_deviation(got: &[Complex64], expected: &[Complex64]) -> f64 {
    let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
    };
    let ee = dot(expected, expected);
    let scale = dot(expected, got) / ee;
    let norm_got = got.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff: f64 = got
        .iter()
        .zip(expected)
        .map(|(g, e)| (g - scale * e).norm_sqr())
        .sum();
    diff.sqrt() / norm_got.max(f64::MIN_POSITIVE)
}

/// Diagnostics of one elimination-chain run.  Each step records either
/// how far a computed row sits from its closed form (up to one complex
/// scale) or how large a coefficient remained where an exact cancellation
/// was expected; all of them vanish to rounding at generic parameters.
#[derive(Debug, Clone)]
pub struct ChainReport {
    pub alpha: f64,
    pub beta: f64,
    pub n: f64,
    pub steps: Vec<(String, f64)>,
    /// Coefficient multiplying the surviving unknown in the final row.
    pub final_prefactor: Complex64,
    /// The printed closed form of that coefficient, up to the chain's
    /// overall scale.
    pub displayed_prefactor: Complex64,
    pub prefactor_ratio: Complex64,
    pub nullspace_ratio: f64,
    pub rank: usize,
    pub trivial_nullspace: bool,
}

impl ChainReport {
    pub fn max_step_deviation(&self) -> f64 {
        self.steps.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }
}

/// Replays the elimination chain at generic parameters: solve two
/// relations for single unknowns, substitute them into three more, form
/// the two combinations that cancel first `YB_3` and then `YB_2`, and
/// land on a single nonzero multiple of one `YB_5` unknown.  The full
/// system's singular values then certify that only the zero vector solves
/// every relation, forcing all 27 unknowns to vanish.
pub fn elimination_chain(alpha: f64, beta: f64, n: f64, phase: SpinPhase) -> Result<ChainReport> {
    let nsq = n * n - 1.0;
    if nsq.abs() < DEGENERACY_CUTOFF {
        return Err(Error::DegenerateParameters {
            factor: "n^2 - 1".into(),
            value: nsq.abs(),
        });
    }
    let ph = |t: f64| phase.phi(t);
    let angles = [alpha, beta, 2.0 * PI - alpha - beta];
    let index = YbIndex::new();
    let identity = [0usize, 1, 2];
    let swapped = [1usize, 0, 2];
    let rows_id = relation_rows(&index, identity, angles, n, phase);
    let rows_sw = relation_rows(&index, swapped, angles, n, phase);

    let col = |func: usize, args: [usize; 3]| index.column(func, args).0;
    let k1_agb = col(1, [0, 2, 1]);
    let k1_bga = col(1, [1, 2, 0]);
    let k4_agb = col(4, [0, 2, 1]);
    let k4_bga = col(4, [1, 2, 0]);
    let k3_gab = col(3, [2, 0, 1]);
    let k2_abg = col(2, [0, 1, 2]);
    let k2_bag = col(2, [1, 0, 2]);
    let k5_agb = col(5, [0, 2, 1]);

    let mut steps: Vec<(String, f64)> = Vec::new();

    // The first relation, scaled by phi(-pi), is solved form for one
    // first-function unknown (unit coefficient) in each assignment.
    let yb1_first = scaled(&rows_id[0], ph(-PI));
    let yb1_second = scaled(&rows_sw[0], ph(-PI));
    steps.push((
        "solved first-function unknown: unit coefficient (first)".into(),
        (yb1_first[k1_agb] + 1.0).norm(),
    ));
    steps.push((
        "solved first-function unknown: unit coefficient (second)".into(),
        (yb1_second[k1_bga] + 1.0).norm(),
    ));

    // Substituting it into the second relation cancels two more terms
    // identically and leaves a row solved for a fourth-function unknown.
    let unit = "unit coefficient of the solved first-function unknown";
    let yb4_second = eliminate(rows_id[1].clone(), &[(k1_agb, &yb1_first, unit)])?;
    steps.push((
        "fourth-function row: leftover at the substituted slot".into(),
        yb4_second[k4_agb].norm(),
    ));
    steps.push((
        "fourth-function row: leftover at the third-function slot".into(),
        yb4_second[k3_gab].norm(),
    ));
    let yb4_first = eliminate(rows_sw[1].clone(), &[(k1_bga, &yb1_second, unit)])?;

    let inv_nsq = 1.0 / nsq;
    let exp_yb4_second = build_row(
        &index,
        &[
            (Complex64::new(1.0, 0.0), 4, [1, 2, 0]),
            (-n * n * ph(-alpha) * inv_nsq, 2, [0, 1, 2]),
            (-ph(-alpha) * inv_nsq, 2, [2, 1, 0]),
            ((n * ph(-3.0 * PI) - ph(PI)) * inv_nsq, 5, [0, 2, 1]),
        ],
    );
    steps.push((
        "fourth-function row matches its closed form (second)".into(),
        up_to_scale_deviation(&yb4_second, &exp_yb4_second),
    ));
    let exp_yb4_first = build_row(
        &index,
        &[
            (Complex64::new(1.0, 0.0), 4, [0, 2, 1]),
            (-n * n * ph(-beta) * inv_nsq, 2, [1, 0, 2]),
            (-ph(-beta) * inv_nsq, 2, [2, 0, 1]),
            ((n * ph(-3.0 * PI) - ph(PI)) * inv_nsq, 5, [1, 2, 0]),
        ],
    );
    steps.push((
        "fourth-function row matches its closed form (first)".into(),
        up_to_scale_deviation(&yb4_first, &exp_yb4_first),
    ));

    // Substitute all four solved unknowns into the remaining narrow
    // relations and clear denominators with the factor n + 1.
    let np1 = Complex64::new(n + 1.0, 0.0);
    let pivots: [(usize, &Row, &str); 4] = [
        (k1_agb, &yb1_first, unit),
        (k1_bga, &yb1_second, unit),
        (k4_bga, &yb4_second, "(1 - n^2) phi(alpha - pi)"),
        (k4_agb, &yb4_first, "(1 - n^2) phi(beta - pi)"),
    ];
    let simplify = |row: &Row| -> Result<Row> { Ok(scaled(&eliminate(row.clone(), &pivots)?, np1)) };
    let simple1 = simplify(&rows_id[2])?;
    let simple4 = simplify(&rows_id[3])?;
    let simple12 = simplify(&rows_id[4])?;

    let exp_simple1 = build_row(
        &index,
        &[
            (
                -ph(alpha - beta) - ph(alpha - beta - 4.0 * PI)
                    + ph(alpha + beta)
                    + ph(alpha + beta - 4.0 * PI),
                5,
                [0, 2, 1],
            ),
            (-np1 * (ph(alpha - PI) - ph(alpha - 2.0 * beta - PI)), 2, [1, 0, 2]),
            (np1 * (ph(PI - beta) - ph(beta - PI)), 2, [0, 1, 2]),
            (np1 * (ph(alpha - beta) - ph(alpha + beta)), 3, [2, 0, 1]),
        ],
    );
    steps.push((
        "first simplified relation matches its closed form".into(),
        up_to_scale_deviation(&simple1, &exp_simple1),
    ));
    let exp_simple4 = build_row(
        &index,
        &[
            (
                ph(2.0 * PI - beta) - ph(-beta) - n * ph(-beta - 2.0 * PI) - n * ph(-beta)
                    + n * ph(beta)
                    + n * ph(beta - 4.0 * PI),
                5,
                [0, 2, 1],
            ),
            (np1 * (ph(PI) - ph(PI - 2.0 * beta)), 2, [1, 0, 2]),
            (n * np1 * (ph(-beta) - ph(beta)), 3, [2, 0, 1]),
            (n * np1 * (ph(-alpha - beta + PI) - ph(-alpha + beta - PI)), 2, [0, 1, 2]),
        ],
    );
    steps.push((
        "second simplified relation matches its closed form".into(),
        up_to_scale_deviation(&simple4, &exp_simple4),
    ));
    let exp_simple12 = build_row(
        &index,
        &[
            (
                ph(-beta) * (ph(PI) + ph(3.0 * PI) - n * ph(-3.0 * PI) + n * ph(3.0 * PI))
                    - ph(beta) * (ph(-5.0 * PI) + ph(-PI)),
                5,
                [0, 2, 1],
            ),
            (n * np1 * (ph(-2.0 * beta) - 1.0), 2, [1, 0, 2]),
            (-np1 * (ph(-beta - PI) - ph(beta - PI)), 3, [2, 0, 1]),
            (-np1 * (ph(-alpha - beta) - ph(-alpha + beta - 2.0 * PI)), 2, [0, 1, 2]),
        ],
    );
    steps.push((
        "third simplified relation matches its closed form".into(),
        up_to_scale_deviation(&simple12, &exp_simple12),
    ));

    // Pairwise combinations cancel the third-function unknown; each
    // combination also drops one second-function column on its own.
    let comb14 = eliminate(
        simple1,
        &[(k3_gab, &simple4, "n (n + 1) (phi(-beta) - phi(beta))")],
    )?;
    let comb412 = eliminate(
        simple4,
        &[(k3_gab, &simple12, "(n + 1) phi(-pi) (phi(-beta) - phi(beta))")],
    )?;
    steps.push((
        "first combination: second-function leftover".into(),
        comb14[k2_abg].norm(),
    ));
    steps.push((
        "second combination: second-function leftover".into(),
        comb412[k2_abg].norm(),
    ));

    let exp_comb14 = build_row(
        &index,
        &[
            (np1 * (ph(PI) + n * ph(-PI)) * (ph(-beta) - ph(beta)), 2, [1, 0, 2]),
            (
                -n * ph(-4.0 * PI) + n * ph(-2.0 * PI) - ph(2.0 * PI) + 1.0,
                5,
                [0, 2, 1],
            ),
        ],
    );
    steps.push((
        "first combination matches its closed form".into(),
        up_to_scale_deviation(&comb14, &exp_comb14),
    ));
    let exp_comb412 = build_row(
        &index,
        &[
            (nsq * (ph(-beta) - ph(beta)), 2, [1, 0, 2]),
            (
                -n * ph(-3.0 * PI) + n * ph(3.0 * PI) - ph(-PI) + ph(PI),
                5,
                [0, 2, 1],
            ),
        ],
    );
    steps.push((
        "second combination matches its closed form".into(),
        up_to_scale_deviation(&comb412, &exp_comb412),
    ));

    // The last elimination removes the remaining second-function column
    // and leaves a single multiple of one fifth-function unknown.
    let final_row = eliminate(
        comb14,
        &[(k2_bag, &comb412, "(n - 1)(n + 1)(phi(-beta) - phi(beta))")],
    )?;
    let leftover = final_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k5_agb)
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    steps.push(("final row: leftover off the generator".into(), leftover));

    let final_prefactor = final_row[k5_agb];
    if final_prefactor.norm() < DEGENERACY_CUTOFF {
        return Err(Error::DegenerateParameters {
            factor: "final generator prefactor".into(),
            value: final_prefactor.norm(),
        });
    }
    let displayed_prefactor = n * ph(-2.0 * PI) - n * ph(2.0 * PI) + ph(-4.0 * PI)
        + ph(-2.0 * PI)
        - ph(2.0 * PI)
        - ph(4.0 * PI);

    let system = appendix_system(alpha, beta, n, phase);
    let nullspace_ratio = system.nullspace_ratio();
    Ok(ChainReport {
        alpha,
        beta,
        n,
        steps,
        final_prefactor,
        displayed_prefactor,
        prefactor_ratio: final_prefactor / displayed_prefactor,
        nullspace_ratio,
        rank: system.rank(),
        trivial_nullspace: nullspace_ratio > NULLSPACE_RATIO_CUTOFF,
    })
}

/// Statistics of repeated chain runs at random admissible hexagon angles
/// and dilute parameters; serialized as-is by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawStats {
    pub draws: usize,
    pub trivial_nullspace: usize,
    pub degenerate: Vec<String>,
    pub max_row_residual: f64,
}

/// Runs the chain on seeded random draws: convex hexagon angles, a dilute
/// parameter away from the known degenerate points, and on-family weights
/// for the row-residual bookkeeping.  Degenerate draws are reported in
/// the statistics rather than failing the run.
pub fn draw_statistics(draws: usize, seed: u64) -> Result<DrawStats> {
    if draws == 0 {
        return Err(Error::Usage("draw count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = YbIndex::new();
    let mut trivial = 0usize;
    let mut degenerate = Vec::new();
    let mut max_row_residual = 0.0f64;
    for draw in 0..draws {
        let alpha = rng.gen_range(FRAC_PI_2 + 0.1..PI - 0.1);
        let beta = rng.gen_range(FRAC_PI_2 + 0.1..PI - 0.1);
        let eta = rng.gen_range(0.05..FRAC_PI_4 - 0.02);
        let gamma = 2.0 * PI - alpha - beta;
        let params = DiluteParams::new(eta)?;
        let n = params.fugacity();
        let phase = params.spin_phase();
        let w = [
            dilute_weights(alpha, &params),
            dilute_weights(beta, &params),
            dilute_weights(gamma, &params),
        ];
        let values = yb_values(&index, &w, n);
        let system = appendix_system(alpha, beta, n, phase);
        max_row_residual = max_row_residual.max(system.max_row_residual(&values));
        match elimination_chain(alpha, beta, n, phase) {
            Ok(report) if report.trivial_nullspace => trivial += 1,
            Ok(report) => degenerate.push(format!(
                "draw {draw}: nullspace ratio {:.3e} at alpha={alpha:.6}, beta={beta:.6}, eta={eta:.6}",
                report.nullspace_ratio
            )),
            Err(Error::DegenerateParameters { factor, value }) => degenerate.push(format!(
                "draw {draw}: degenerate factor {factor} = {value:.3e} at alpha={alpha:.6}, beta={beta:.6}, eta={eta:.6}"
            )),
            Err(e) => return Err(e),
        }
    }
    Ok(DrawStats {
        draws,
        trivial_nullspace: trivial,
        degenerate,
        max_row_residual,
    })
}

/// All 21 star-minus-triangle contour differences of the dilute hexagon,
/// sharing one plaquette-weight triple between the two tilings.  Entries
/// follow the frozen enumeration order of the external patterns around
/// the fixed entry.
pub fn dilute_hexagon_differences_with(
    plaquettes: &[DiluteWeights; 3],
    fugacity: f64,
    phase: SpinPhase,
    limits: EnumerationLimits,
) -> Result<Vec<Complex64>> {
    let (alpha, beta, gamma) = (
        plaquettes[0].alpha,
        plaquettes[1].alpha,
        plaquettes[2].alpha,
    );
    let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star)?;
    let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle)?;
    let weights = ModelWeights::from_parts(
        plaquettes
            .iter()
            .map(|w| PlaquetteWeightSet::Dilute(*w))
            .collect(),
        fugacity,
        phase,
    )?;
    let entry = hexagon_entry(&star);
    let map = boundary_index_map(&star, &triangle)?;
    let mut out = Vec::with_capacity(21);
    for external in dilute_externals(star.boundary_len(), entry)? {
        let s = contour_sum(&star, &weights, &external, limits)?;
        let t = contour_sum(&triangle, &weights, &remap_external(&external, &map)?, limits)?;
        out.push(s - t);
    }
    Ok(out)
}

/// The same differences on the critical family, where every one of the 21
/// vanishes.
pub fn dilute_hexagon_differences(
    alpha: f64,
    beta: f64,
    params: &DiluteParams,
) -> Result<Vec<Complex64>> {
    let gamma = 2.0 * PI - alpha - beta;
    let plaquettes = [
        dilute_weights(alpha, params),
        dilute_weights(beta, params),
        dilute_weights(gamma, params),
    ];
    dilute_hexagon_differences_with(
        &plaquettes,
        params.fugacity(),
        params.spin_phase(),
        EnumerationLimits::default(),
    )
}

/// One identified pairing: across all draws, the difference of external
/// pattern `diagram` equals `kappa` times relation row `relation` applied
/// to the drawn Yang-Baxter values.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingEntry {
    pub diagram: usize,
    pub relation: usize,
    pub kappa: Complex64,
}

/// Result of fitting every enumerated difference onto the span of the
/// canonical unknowns over random weight draws, plus the identification
/// of the six differences that realise the displayed relations.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub draws: usize,
    /// Rank of the sampled value matrix; the numerical symmetries beyond
    /// the encoded substitutions keep it below the column count.
    pub design_rank: usize,
    pub fit_residuals: Vec<f64>,
    pub mapping: Vec<MappingEntry>,
    /// Common proportionality constant of the identified pairings.
    pub kappa: Complex64,
}

/// Samples random off-family weight triples, verifies that every one of
/// the 21 enumerated differences is a fixed linear combination of the
/// canonical unknowns (residual below [`FIT_RESIDUAL_TOL`]), and reports
/// which difference matches which displayed relation row, with the shared
/// proportionality constant.  The pairing is identified empirically, not
/// assumed.
pub fn fit_differences(
    alpha: f64,
    beta: f64,
    n: f64,
    phase: SpinPhase,
    draws: usize,
    seed: u64,
    limits: EnumerationLimits,
) -> Result<FitReport> {
    if draws < UNKNOWN_COUNT {
        return Err(Error::Usage(format!(
            "need at least {UNKNOWN_COUNT} draws for the fit, got {draws}"
        )));
    }
    let index = YbIndex::new();
    let gamma = 2.0 * PI - alpha - beta;
    let angles = [alpha, beta, gamma];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut design = DMatrix::<f64>::zeros(draws, UNKNOWN_COUNT);
    let mut responses: Vec<Vec<Complex64>> = Vec::new();
    let mut diagram_count = 0usize;
    for d in 0..draws {
        let mut w = [DiluteWeights {
            alpha: 0.0,
            t: 0.0,
            u1: 0.0,
            u2: 0.0,
            v: 0.0,
            a: 0.0,
            b: 0.0,
            n,
        }; 3];
        for (k, wk) in w.iter_mut().enumerate() {
            wk.alpha = angles[k];
            wk.t = rng.gen_range(0.2..1.5);
            wk.u1 = rng.gen_range(0.2..1.5);
            wk.u2 = rng.gen_range(0.2..1.5);
            wk.v = rng.gen_range(0.2..1.5);
            wk.a = rng.gen_range(0.2..1.5);
            wk.b = rng.gen_range(0.2..1.5);
        }
        let values = yb_values(&index, &w, n);
        for (j, v) in values.iter().enumerate() {
            design[(d, j)] = *v;
        }
        let diffs = dilute_hexagon_differences_with(&w, n, phase, limits)?;
        if responses.is_empty() {
            diagram_count = diffs.len();
            responses = vec![vec![Complex64::default(); draws]; diagram_count];
        }
        for (q, z) in diffs.iter().enumerate() {
            responses[q][d] = *z;
        }
    }

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * NULLSPACE_RATIO_CUTOFF;
    let design_rank = svd.singular_values.iter().filter(|&&s| s > eps).count();

    let mut fit_residuals = Vec::with_capacity(diagram_count);
    for (q, response) in responses.iter().enumerate() {
        let rhs_re = DVector::from_iterator(draws, response.iter().map(|z| z.re));
        let rhs_im = DVector::from_iterator(draws, response.iter().map(|z| z.im));
        let coef_re = svd
            .solve(&rhs_re, eps)
            .map_err(|e| Error::SingularInput(e.to_string()))?;
        let coef_im = svd
            .solve(&rhs_im, eps)
            .map_err(|e| Error::SingularInput(e.to_string()))?;
        let fit_re = &design * &coef_re;
        let fit_im = &design * &coef_im;
        let mut err2 = 0.0;
        let mut mag2 = 0.0;
        for d in 0..draws {
            let z = response[d];
            err2 += (fit_re[d] - z.re).powi(2) + (fit_im[d] - z.im).powi(2);
            mag2 += z.norm_sqr();
        }
        let rel = err2.sqrt() / mag2.sqrt().max(f64::MIN_POSITIVE);
        if rel > FIT_RESIDUAL_TOL {
            return Err(Error::CheckFailed {
                key: format!("appendix.fit.{q}"),
                deviation: rel,
            });
        }
        fit_residuals.push(rel);
    }

    // Per-draw value of each displayed relation row on the drawn weights,
    // then a one-parameter projection of every difference onto it.
    let system = appendix_system(alpha, beta, n, phase);
    let displayed = system.displayed_rows();
    let mut row_values = vec![vec![Complex64::default(); draws]; RELATION_COUNT];
    for (r, row) in displayed.iter().enumerate() {
        for d in 0..draws {
            let mut acc = Complex64::default();
            for (j, c) in row.iter().enumerate() {
                acc += *c * design[(d, j)];
            }
            row_values[r][d] = acc;
        }
    }
    let mut mapping: Vec<MappingEntry> = Vec::new();
    for (q, response) in responses.iter().enumerate() {
        for (r, ev) in row_values.iter().enumerate() {
            let ee: f64 = ev.iter().map(|z| z.norm_sqr()).sum();
            if ee == 0.0 {
                continue;
            }
            let ed: Complex64 = ev.iter().zip(response).map(|(e, d)| e.conj() * d).sum();
            let kappa = ed / ee;
            let dnorm: f64 = response.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let res: f64 = ev
                .iter()
                .zip(response)
                .map(|(e, d)| (d - kappa * e).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if dnorm > 0.0 && res / dnorm < PROJECTION_TOL {
                mapping.push(MappingEntry {
                    diagram: q,
                    relation: r,
                    kappa,
                });
            }
        }
    }
    if mapping.len() != RELATION_COUNT {
        return Err(Error::CheckFailed {
            key: "appendix.fit.mapping".into(),
            deviation: (mapping.len() as f64 - RELATION_COUNT as f64).abs(),
        });
    }
    let mut seen_relation = [false; RELATION_COUNT];
    let mut seen_diagram = std::collections::BTreeSet::new();
    for entry in &mapping {
        if seen_relation[entry.relation] || !seen_diagram.insert(entry.diagram) {
            return Err(Error::CheckFailed {
                key: "appendix.fit.mapping".into(),
                deviation: 1.0,
            });
        }
        seen_relation[entry.relation] = true;
    }
    let kappa = mapping[0].kappa;
    let spread = mapping
        .iter()
        .map(|m| (m.kappa - kappa).norm())
        .fold(0.0, f64::max);
    if spread > 1e-6 {
        return Err(Error::CheckFailed {
            key: "appendix.fit.kappa".into(),
            deviation: spread,
        });
    }
    Ok(FitReport {
        draws,
        design_rank,
        fit_residuals,
        mapping,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::hexagon_entry_phase;

    fn random_weights(rng: &mut ChaCha8Rng, alpha: f64, n: f64) -> DiluteWeights {
        DiluteWeights {
            alpha,
            t: rng.gen_range(0.2..1.5),
            u1: rng.gen_range(0.2..1.5),
            u2: rng.gen_range(0.2..1.5),
            v: rng.gen_range(0.2..1.5),
            a: rng.gen_range(0.2..1.5),
            b: rng.gen_range(0.2..1.5),
            n,
        }
    }

    fn yb_at(w: &[DiluteWeights; 3], n: f64, func: usize, args: [usize; 3]) -> f64 {
        let permuted = [w[args[0]], w[args[1]], w[args[2]]];
        dilute_yb_functions(&permuted, n)[func - 1]
    }

    #[test]
    fn index_lists_27_canonical_unknowns() {
        let index = YbIndex::new();
        assert_eq!(index.len(), UNKNOWN_COUNT);
        let count = |func: usize| {
            (0..index.len())
                .filter(|&k| index.unknown(k).0 == func)
                .count()
        };
        assert_eq!(
            [count(1), count(2), count(3), count(4), count(5), count(6)],
            [6, 3, 3, 6, 3, 6]
        );
        for func in 1..=6 {
            for perm in LEX_PERMS {
                let (pos, sign) = index.column(func, perm);
                assert!(pos < UNKNOWN_COUNT);
                assert!(sign == 1.0 || sign == -1.0);
                assert_eq!(index.unknown(pos).0, func);
            }
        }
    }

    #[test]
    fn symmetry_substitutions_hold_for_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(0.3..1.7);
            let w = [
                random_weights(&mut rng, 2.0, n),
                random_weights(&mut rng, 2.2, n),
                random_weights(&mut rng, 2.0 * PI - 4.2, n),
            ];
            for perm in LEX_PERMS {
                let rev = [perm[2], perm[1], perm[0]];
                let sw = [perm[0], perm[2], perm[1]];
                let v2 = yb_at(&w, n, 2, perm);
                assert!((yb_at(&w, n, 2, rev) + v2).abs() < 1e-13 * (1.0 + v2.abs()));
                let v3 = yb_at(&w, n, 3, perm);
                assert!((yb_at(&w, n, 3, sw) - v3).abs() < 1e-13 * (1.0 + v3.abs()));
                let v5 = yb_at(&w, n, 5, perm);
                assert!((yb_at(&w, n, 5, rev) - v5).abs() < 1e-13 * (1.0 + v5.abs()));
                // Beyond the encoded substitutions: the first function is
                // symmetric in its first two slots and the sixth is fully
                // symmetric, which lowers the sampled value rank.
                let v1 = yb_at(&w, n, 1, perm);
                let outer = [perm[1], perm[0], perm[2]];
                assert!((yb_at(&w, n, 1, outer) - v1).abs() < 1e-13 * (1.0 + v1.abs()));
                let v6 = yb_at(&w, n, 6, [0, 1, 2]);
                assert!((yb_at(&w, n, 6, perm) - v6).abs() < 1e-13 * (1.0 + v6.abs()));
            }
        }
    }

    #[test]
    fn on_family_values_solve_every_relation() {
        let index = YbIndex::new();
        for (alpha, beta, eta) in [(2.0, 2.2, 0.55), (1.8, 2.6, 0.3)] {
            let params = DiluteParams::new(eta).unwrap();
            let n = params.fugacity();
            let gamma = 2.0 * PI - alpha - beta;
            let w = [
                dilute_weights(alpha, &params),
                dilute_weights(beta, &params),
                dilute_weights(gamma, &params),
            ];
            let values = yb_values(&index, &w, n);
            let worst = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst < 1e-12, "yb values {worst:.3e} at eta={eta}");
            let system = appendix_system(alpha, beta, n, params.spin_phase());
            assert!(system.max_row_residual(&values) < 1e-12);
        }
    }

    #[test]
    fn generic_system_has_full_rank() {
        let system = appendix_system(2.0, 2.2, 1.3, SpinPhase::from_exponent(0.37));
        assert_eq!(system.rows().len(), 36);
        assert_eq!(system.rank(), UNKNOWN_COUNT);
        assert!(system.nullspace_ratio() > NULLSPACE_RATIO_CUTOFF);
        assert_eq!(system.row_label(0), (0, [0, 1, 2]));
        assert_eq!(system.row_label(35), (5, [2, 1, 0]));
    }

    #[test]
    fn chain_reproduces_every_closed_form_at_generic_parameters() {
        let report = elimination_chain(2.0, 2.2, 1.3, SpinPhase::from_exponent(0.37)).unwrap();
        for (name, deviation) in &report.steps {
            assert!(deviation < &1e-10, "step {name:?} deviates by {deviation:.3e}");
        }
        assert!(report.trivial_nullspace);
        assert_eq!(report.rank, UNKNOWN_COUNT);
        assert!(report.final_prefactor.norm() > DEGENERACY_CUTOFF);
        assert!(report.prefactor_ratio.norm() > 1e-8);
        assert!(report.displayed_prefactor.norm() > DEGENERACY_CUTOFF);
    }

    #[test]
    fn unit_fugacity_is_degenerate() {
        let err = elimination_chain(2.0, 2.2, 1.0, SpinPhase::from_exponent(0.37)).unwrap_err();
        match err {
            Error::DegenerateParameters { factor, .. } => assert!(factor.contains("n^2")),
            other => panic!("expected degenerate parameters, got {other:?}"),
        }
        // One sixth of pi is exactly the dilute parameter with n = 1.
        let params = DiluteParams::new(PI / 6.0).unwrap();
        let err =
            elimination_chain(2.0, 2.2, params.fugacity(), params.spin_phase()).unwrap_err();
        assert!(matches!(err, Error::DegenerateParameters { .. }));
    }

    #[test]
    fn seeded_draws_are_deterministic_and_mostly_trivial() {
        let stats = draw_statistics(100, 7).unwrap();
        assert_eq!(stats.draws, 100);
        assert!(
            stats.trivial_nullspace >= 99,
            "only {} trivial draws: {:?}",
            stats.trivial_nullspace,
            stats.degenerate
        );
        assert_eq!(stats.degenerate.len(), stats.draws - stats.trivial_nullspace);
        assert!(stats.max_row_residual < 1e-12);
        assert_eq!(stats, draw_statistics(100, 7).unwrap());
        assert!(matches!(draw_statistics(0, 7), Err(Error::Usage(_))));
    }

    #[test]
    fn differences_vanish_on_family() {
        for (alpha, beta, eta) in [
            (2.0, 2.2, 0.55),
            (2.0 * PI / 3.0, 2.0 * PI / 3.0, 0.55),
            (1.8, 2.6, 0.3),
        ] {
            let params = DiluteParams::new(eta).unwrap();
            let diffs = dilute_hexagon_differences(alpha, beta, &params).unwrap();
            assert_eq!(diffs.len(), 21);
            let worst = diffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "worst difference {worst:.3e} at eta={eta}");
        }
    }

    #[test]
    fn differences_detect_off_family_weights() {
        let params = DiluteParams::new(0.55).unwrap();
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let mut plaquettes = [
            dilute_weights(alpha, &params),
            dilute_weights(beta, &params),
            dilute_weights(gamma, &params),
        ];
        plaquettes[0].t *= 1.02;
        let diffs = dilute_hexagon_differences_with(
            &plaquettes,
            params.fugacity(),
            params.spin_phase(),
            EnumerationLimits::default(),
        )
        .unwrap();
        let worst = diffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst > 1e-5, "perturbation went unnoticed: {worst:.3e}");
    }

    #[test]
    fn fit_identifies_the_six_displayed_relations() {
        let alpha = 2.0;
        let report = fit_differences(
            alpha,
            2.2,
            1.3,
            SpinPhase::from_exponent(0.37),
            40,
            12345,
            EnumerationLimits::default(),
        )
        .unwrap();
        assert_eq!(report.design_rank, 19);
        assert_eq!(report.fit_residuals.len(), 21);
        assert!(report.fit_residuals.iter().all(|r| *r < FIT_RESIDUAL_TOL));
        // Pinned empirical pairing (relation -> external pattern) so a
        // change in enumeration order or row order cannot slip through.
        let mut pairs: Vec<(usize, usize)> = report
            .mapping
            .iter()
            .map(|m| (m.relation, m.diagram))
            .collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 13), (1, 2), (2, 0), (3, 4), (4, 3), (5, 11)]);
        assert!((report.kappa - hexagon_entry_phase(alpha)).norm() < 1e-6);
    }
}
