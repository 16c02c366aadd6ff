//! Command-line front end: parameter sweeps, verification suites, report
//! emission.
//!
//! Three subcommands cover the library surface: `verify` drives every
//! residual check of one model family over a parameter grid, `zinv`
//! compares partition data and the boundary observable across a
//! star-triangle recombination, and `appendix` runs the dilute linear
//! system's elimination chain.  Exit codes: 0 all checks pass, 1 a check
//! failed, 2 usage or input error.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::appendix::{
    dilute_hexagon_differences_with, draw_statistics, elimination_chain, yb_values, YbIndex,
};
use crate::enumeration::{
    dense_externals, dilute_externals, EnumerationLimits, ExternalDiagram, ModelWeights,
    PlaquetteWeightSet,
};
use crate::error::{Error, Result};
use crate::geometry::{
    domain_from_json, make_domain_four, make_domain_hexagon, make_domain_single,
    star_triangle_move, HexArrangement, RhombicDomain,
};
use crate::highprec::HighPrecision;
use crate::observable::{
    contour_sum, dense_star_triangle_differences, hexagon_yb_direct, two_rhombus_enumerated,
    two_rhombus_quadratic, two_rhombus_residual,
};
use crate::report::ResidualReport;
use crate::weights::{
    criticality_residual, dense_inversion_residual, dense_single_rhombus_residuals_with,
    dense_system_determinant, dense_weights, dense_yb_residual, dilute_single_rhombus_rank,
    dilute_single_rhombus_residuals_with, dilute_weights, spin_consistency, DenseParams,
    DenseWeights, DiluteParams, Model, ModelParams, SpinPhase,
};
use crate::zinvariance::{boundary_observable_residual, partition_comparison, partition_csv};

const GRID_HELP: &str = "Grids are start:stop:step (start included, stop excluded beyond a \
1e-9 tolerance) or a single value; lists are comma separated.";

/// Verification CLI for loop-model identities on rhombic tilings.
#[derive(Parser, Debug)]
#[command(name = "looplab", version, after_help = GRID_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the residual identities of one model over a parameter grid.
    Verify(VerifyArgs),
    /// Compare partition data and the boundary observable across a
    /// star-triangle move.
    Zinv(ZinvArgs),
    /// Run the dilute relation system's elimination chain.
    Appendix(AppendixArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelArg {
    Dense,
    Dilute,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecisionArg {
    /// Hardware floats everywhere.
    Double,
    /// 256-bit arithmetic for the closed-form single-rhombus rows.
    High,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Output format; default is a human-readable table.
    #[arg(long, value_enum)]
    pub out: Option<OutFormat>,
    /// Seed for the randomized spot checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Arithmetic for the closed-form single-rhombus rows.
    #[arg(long, value_enum, default_value_t = PrecisionArg::Double)]
    pub precision: PrecisionArg,
    /// Enumeration cap; overrides the LOOPLAB_MAX_CONFIGS environment
    /// variable.
    #[arg(long)]
    pub max_configs: Option<u64>,
}

impl CommonArgs {
    fn limits(&self) -> EnumerationLimits {
        match self.max_configs {
            Some(cap) => EnumerationLimits { max_configs: cap },
            None => EnumerationLimits::from_env(),
        }
    }

    fn precision_label(&self) -> &'static str {
        match self.precision {
            PrecisionArg::Double => "double",
            PrecisionArg::High => "high",
        }
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Model family to verify.
    #[arg(value_enum)]
    pub model: ModelArg,
    /// Dense coupling grid.
    #[arg(long, default_value = "0.9")]
    pub lambda: String,
    /// Dilute coupling grid.
    #[arg(long, default_value = "0.55")]
    pub eta: String,
    /// Dense solution labels, comma separated.
    #[arg(long, default_value = "0")]
    pub ell: String,
    /// Opening-angle grid.
    #[arg(long, default_value = "0.4:3.0:0.4")]
    pub alpha: String,
    /// Second-angle grid for pair and hexagon checks; defaults to the
    /// alpha grid.
    #[arg(long)]
    pub beta: Option<String>,
    /// Residual threshold applied to every check.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Scale one plaquette weight, as label:factor (repeatable).
    #[arg(long, value_name = "LABEL:FACTOR")]
    pub perturb: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ZinvArgs {
    /// Tiling as JSON; the builtin hexagon and four-rhombus cases run when
    /// absent.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Dense coupling for the comparisons.
    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,
    /// Dense solution label.
    #[arg(long, default_value_t = 0)]
    pub ell: i32,
    /// Dilute coupling; selects the dilute model for --domain runs.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Rhombus indices of the star to recombine in a --domain tiling.
    #[arg(long, default_value = "0,1,2", value_name = "I,J,K")]
    pub star: String,
    /// Residual threshold applied to every check.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct AppendixArgs {
    /// Number of random parameter draws.
    #[arg(long)]
    pub draws: u64,
    /// First hexagon angle; with --beta and --eta, runs one detailed
    /// chain at these parameters instead of the draw statistics.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Second hexagon angle.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Dilute coupling.
    #[arg(long)]
    pub eta: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Inclusive-start, exclusive-stop grid; a bare value yields itself.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    const GRID_EPS: f64 = 1e-9;
    let parts: Vec<&str> = spec.split(':').collect();
    let number = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Usage(format!("cannot parse {s:?} in grid {spec:?}")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![number(single)?]),
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if step.is_nan() || step <= 0.0 {
                return Err(Error::Usage(format!("step must be positive in {spec:?}")));
            }
            let mut values = Vec::new();
            for k in 0..100_000u32 {
                let x = start + f64::from(k) * step;
                if x >= stop - GRID_EPS {
                    break;
                }
                values.push(x);
            }
            if values.is_empty() {
                return Err(Error::Usage(format!("grid {spec:?} is empty")));
            }
            Ok(values)
        }
        _ => Err(Error::Usage(format!(
            "grid {spec:?} must be a value or start:stop:step"
        ))),
    }
}

fn parse_int_list(spec: &str) -> Result<Vec<i32>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<i32>()
                .map_err(|_| Error::Usage(format!("cannot parse {s:?} in list {spec:?}")))
        })
        .collect()
}

fn parse_perturbations(specs: &[String]) -> Result<Vec<(String, f64)>> {
    specs
        .iter()
        .map(|spec| {
            let (label, factor) = spec
                .split_once(':')
                .ok_or_else(|| Error::Usage(format!("--perturb {spec:?} is not label:factor")))?;
            let factor = factor
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad factor in --perturb {spec:?}")))?;
            Ok((label.to_string(), factor))
        })
        .collect()
}

fn fval(v: f64) -> String {
    format!("{v}")
}

fn worst_of(values: &[Complex64]) -> Complex64 {
    values
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_default()
}

fn worst_contour(
    domain: &RhombicDomain,
    weights: &ModelWeights,
    externals: &[ExternalDiagram],
    limits: EnumerationLimits,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for external in externals {
        worst = worst.max(contour_sum(domain, weights, external, limits)?.norm());
    }
    Ok(worst)
}

/// Runs every residual check of the chosen model family over the grids
/// and aggregates the worst case per key.
pub fn run_verify(args: &VerifyArgs) -> Result<ResidualReport> {
    let perturbations = parse_perturbations(&args.perturb)?;
    if args.common.precision == PrecisionArg::High && !perturbations.is_empty() {
        return Err(Error::Usage(
            "--perturb needs --precision double; the high-precision rows take no weights".into(),
        ));
    }
    let mut report = ResidualReport::new(args.common.precision_label(), args.common.seed);
    match args.model {
        ModelArg::Dense => verify_dense(args, &perturbations, &mut report)?,
        ModelArg::Dilute => verify_dilute(args, &perturbations, &mut report)?,
    }
    Ok(report)
}

fn verify_dense(
    args: &VerifyArgs,
    perturbations: &[(String, f64)],
    report: &mut ResidualReport,
) -> Result<()> {
    let limits = args.common.limits();
    let tol = args.tol;
    let alphas = parse_grid(&args.alpha)?;
    let betas = match &args.beta {
        Some(spec) => parse_grid(spec)?,
        None => alphas.clone(),
    };
    let lambdas = parse_grid(&args.lambda)?;
    let ells = parse_int_list(&args.ell)?;
    let mut high = match args.common.precision {
        PrecisionArg::High => Some(HighPrecision::new()),
        PrecisionArg::Double => None,
    };

    for &lambda in &lambdas {
        for &ell in &ells {
            let params = DenseParams::new(lambda, ell)?;
            let phase = params.spin_phase();
            let n = params.fugacity();
            let at = |alpha: f64| {
                vec![
                    ("lambda", fval(lambda)),
                    ("ell", ell.to_string()),
                    ("alpha", fval(alpha)),
                ]
            };
            report.record_real(
                "spin.identity.dense",
                &[("lambda", fval(lambda)), ("ell", ell.to_string())],
                spin_consistency(&ModelParams::Dense(params)),
                tol,
            );
            for &alpha in &alphas {
                let inputs = at(alpha);
                let mut w = dense_weights(alpha, &params);
                for (label, factor) in perturbations {
                    w.perturb(label, *factor)?;
                }
                let (r1, r2) = match high.as_mut() {
                    Some(hp) => hp.dense_single_residuals(alpha, lambda, ell),
                    None => dense_single_rhombus_residuals_with(&w, phase),
                };
                report.record("holo.single.dense", &inputs, worst_of(&[r1, r2]), tol);
                report.record(
                    "spin.determinant.dense",
                    &inputs,
                    dense_system_determinant(alpha, n, phase),
                    tol,
                );
                report.record_real(
                    "inversion.dense",
                    &inputs,
                    dense_inversion_residual(alpha, &params),
                    tol,
                );
                if alpha > 0.0 && alpha < PI {
                    report.record_real(
                        "criticality.dense",
                        &inputs,
                        criticality_residual(alpha, &params)?,
                        tol,
                    );
                    let domain = make_domain_single(alpha)?;
                    let weights = ModelWeights::from_parts(
                        vec![PlaquetteWeightSet::Dense(w)],
                        n,
                        phase,
                    )?;
                    let entry = domain
                        .boundary_index((0, 3))
                        .expect("rhombus sides are boundary");
                    let externals = dense_externals(domain.boundary_len(), entry)?;
                    report.record_real(
                        "holo.contour.dense",
                        &inputs,
                        worst_contour(&domain, &weights, &externals, limits)?,
                        tol,
                    );
                }
                for &beta in &betas {
                    let gamma = 2.0 * PI - alpha - beta;
                    let pair_inputs = {
                        let mut v = at(alpha);
                        v.push(("beta", fval(beta)));
                        v
                    };
                    report.record_real(
                        "yb.dense",
                        &pair_inputs,
                        dense_yb_residual(alpha, beta, gamma, &params)?,
                        tol,
                    );
                    report.record(
                        "holo.pair.quadratic",
                        &pair_inputs,
                        two_rhombus_residual(alpha, beta, &params)?,
                        tol,
                    );
                    let convex = |x: f64| x > 0.0 && x < PI;
                    if convex(alpha) && convex(beta) && convex(gamma) {
                        report.record(
                            "yb.hexagon.dense",
                            &pair_inputs,
                            hexagon_yb_direct(alpha, beta, &params)?,
                            tol,
                        );
                        let diffs = dense_star_triangle_differences(alpha, beta, &params)?;
                        report.record("holo.stardiff.dense", &pair_inputs, worst_of(&diffs), tol);
                    }
                }
            }
        }
    }

    // Seeded weight-identity spot checks: the two-rhombus contour equals
    // its quadratic closed form for arbitrary positive weights.
    let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed);
    for draw in 0..20 {
        let alpha = rng.gen_range(0.15..PI - 0.15);
        let beta = rng.gen_range(0.15..PI - 0.15);
        let fugacity = rng.gen_range(0.3..1.8);
        let mut weight = || rng.gen_range(0.2..1.5);
        let w_alpha = DenseWeights {
            alpha,
            a: weight(),
            b: weight(),
            n: fugacity,
        };
        let w_beta = DenseWeights {
            alpha: beta,
            a: weight(),
            b: weight(),
            n: fugacity,
        };
        let phase = SpinPhase::from_exponent(rng.gen_range(0.1..0.9));
        let closed = two_rhombus_quadratic(&w_alpha, &w_beta, fugacity, phase);
        let enumerated = two_rhombus_enumerated(&w_alpha, &w_beta, fugacity, phase, limits)?;
        report.record(
            "holo.pair.random",
            &[
                ("draw", draw.to_string()),
                ("alpha", fval(alpha)),
                ("beta", fval(beta)),
            ],
            enumerated - closed,
            tol,
        );
    }
    Ok(())
}

fn verify_dilute(
    args: &VerifyArgs,
    perturbations: &[(String, f64)],
    report: &mut ResidualReport,
) -> Result<()> {
    let limits = args.common.limits();
    let tol = args.tol;
    let alphas = parse_grid(&args.alpha)?;
    let betas = match &args.beta {
        Some(spec) => parse_grid(spec)?,
        None => alphas.clone(),
    };
    let etas = parse_grid(&args.eta)?;
    let index = YbIndex::new();
    let mut high = match args.common.precision {
        PrecisionArg::High => Some(HighPrecision::new()),
        PrecisionArg::Double => None,
    };

    for &eta in &etas {
        let params = DiluteParams::new(eta)?;
        let phase = params.spin_phase();
        let n = params.fugacity();
        let at = |alpha: f64| vec![("eta", fval(eta)), ("alpha", fval(alpha))];
        report.record_real(
            "spin.identity.dilute",
            &[("eta", fval(eta))],
            spin_consistency(&ModelParams::Dilute(params)),
            tol,
        );
        for &alpha in &alphas {
            let inputs = at(alpha);
            let mut w = dilute_weights(alpha, &params);
            for (label, factor) in perturbations {
                w.perturb(label, *factor)?;
            }
            let rows = match high.as_mut() {
                Some(hp) => hp.dilute_single_residuals(alpha, eta),
                None => dilute_single_rhombus_residuals_with(&w, phase),
            };
            report.record("holo.single.dilute", &inputs, worst_of(&rows), tol);
            let rank = dilute_single_rhombus_rank(alpha, &params);
            report.record_real("rank.single.dilute", &inputs, (rank as f64) - 5.0, 0.0);
            if alpha > 0.0 && alpha < PI {
                let domain = make_domain_single(alpha)?;
                let weights =
                    ModelWeights::from_parts(vec![PlaquetteWeightSet::Dilute(w)], n, phase)?;
                let entry = domain
                    .boundary_index((0, 3))
                    .expect("rhombus sides are boundary");
                let externals = dilute_externals(domain.boundary_len(), entry)?;
                report.record_real(
                    "holo.contour.dilute",
                    &inputs,
                    worst_contour(&domain, &weights, &externals, limits)?,
                    tol,
                );
            }
            for &beta in &betas {
                let gamma = 2.0 * PI - alpha - beta;
                let mut triple = [
                    dilute_weights(alpha, &params),
                    dilute_weights(beta, &params),
                    dilute_weights(gamma, &params),
                ];
                for w in &mut triple {
                    for (label, factor) in perturbations {
                        w.perturb(label, *factor)?;
                    }
                }
                let values = yb_values(&index, &triple, n);
                let worst = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut pair_inputs = at(alpha);
                pair_inputs.push(("beta", fval(beta)));
                report.record_real("yb.dilute", &pair_inputs, worst, tol);
            }
        }
        // Enumerated star-minus-triangle differences at one fixed convex
        // hexagon per coupling.
        let (alpha, beta) = (2.0, 2.2);
        let gamma = 2.0 * PI - alpha - beta;
        let mut triple = [
            dilute_weights(alpha, &params),
            dilute_weights(beta, &params),
            dilute_weights(gamma, &params),
        ];
        for w in &mut triple {
            for (label, factor) in perturbations {
                w.perturb(label, *factor)?;
            }
        }
        let diffs = dilute_hexagon_differences_with(&triple, n, phase, limits)?;
        report.record(
            "holo.stardiff.dilute",
            &[
                ("eta", fval(eta)),
                ("alpha", fval(alpha)),
                ("beta", fval(beta)),
            ],
            worst_of(&diffs),
            tol,
        );
    }
    Ok(())
}

/// One comparison row per boundary diagram: encoding with its case label,
/// both partition values, absolute difference.
type PartitionRows = Vec<(String, f64, f64, f64)>;

/// Accumulates the comparison results shared by every zinv case.
struct ZinvSink {
    report: ResidualReport,
    rows: PartitionRows,
    tol: f64,
    limits: EnumerationLimits,
}

impl ZinvSink {
    /// Records partition rows and worst-case keys for one comparison.
    fn compare(
        &mut self,
        label: &str,
        first: &RhombicDomain,
        second: &RhombicDomain,
        params: &ModelParams,
    ) -> Result<()> {
        let fw = ModelWeights::on_family(first, params);
        let sw = ModelWeights::on_family(second, params);
        let inputs = [("case", label.to_string())];
        for (encoding, p_first, p_second, diff) in
            partition_comparison(first, &fw, second, &sw, self.limits)?
        {
            self.report
                .record_real(&format!("zinv.partition.{label}"), &inputs, diff, self.tol);
            self.rows
                .push((format!("{label}:{encoding}"), p_first, p_second, diff));
        }
        let m = first.boundary_len();
        for entry in 0..m {
            let externals = match params.model() {
                Model::Dense => dense_externals(m, entry)?,
                Model::Dilute => dilute_externals(m, entry)?,
            };
            for external in externals {
                let diff =
                    boundary_observable_residual(first, &fw, second, &sw, &external, self.limits)?;
                self.report.record_real(
                    &format!("zinv.observable.{label}"),
                    &inputs,
                    diff,
                    self.tol,
                );
            }
        }
        Ok(())
    }
}

/// Star/triangle and four-rhombus comparisons; returns the report together
/// with the per-diagram partition rows for CSV output.
pub fn run_zinv(args: &ZinvArgs) -> Result<(ResidualReport, PartitionRows)> {
    let mut sink = ZinvSink {
        report: ResidualReport::new(args.common.precision_label(), args.common.seed),
        rows: Vec::new(),
        tol: args.tol,
        limits: args.common.limits(),
    };
    let dense = ModelParams::Dense(DenseParams::new(args.lambda, args.ell)?);

    match &args.domain {
        None => {
            let (alpha, beta) = (2.0, 2.2);
            let gamma = 2.0 * PI - alpha - beta;
            let star = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Star)?;
            let triangle = make_domain_hexagon(alpha, beta, gamma, HexArrangement::Triangle)?;
            sink.compare("dense-hexagon", &star, &triangle, &dense)?;
            let dilute = ModelParams::Dilute(DiluteParams::new(args.eta.unwrap_or(0.55))?);
            sink.compare("dilute-hexagon", &star, &triangle, &dilute)?;
            let four = make_domain_four(alpha, beta, 0.9, HexArrangement::Star)?;
            let moved = star_triangle_move(&four, &[0, 1, 2])?;
            sink.compare("dense-four", &four, &moved, &dense)?;
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Usage(format!("cannot read domain file {}: {e}", path.display()))
            })?;
            let domain = domain_from_json(&text)?;
            let star: Vec<usize> = parse_int_list(&args.star)?
                .into_iter()
                .map(|i| {
                    usize::try_from(i)
                        .map_err(|_| Error::Usage(format!("negative star index {i}")))
                })
                .collect::<Result<_>>()?;
            let star: [usize; 3] = star
                .try_into()
                .map_err(|_| Error::Usage("--star needs exactly three indices".into()))?;
            let moved = star_triangle_move(&domain, &star)?;
            let params = match args.eta {
                Some(eta) => ModelParams::Dilute(DiluteParams::new(eta)?),
                None => dense,
            };
            sink.compare("domain", &domain, &moved, &params)?;
        }
    }
    Ok((sink.report, sink.rows))
}

/// Elimination-chain statistics, or one detailed chain when all of
/// `--alpha`, `--beta`, `--eta` are present.
pub fn run_appendix(args: &AppendixArgs) -> Result<String> {
    if args.draws == 0 {
        return Err(Error::Usage("--draws must be at least 1".into()));
    }
    let detail = [
        args.alpha.is_some(),
        args.beta.is_some(),
        args.eta.is_some(),
    ];
    if detail.iter().any(|&p| p) && !detail.iter().all(|&p| p) {
        return Err(Error::Usage(
            "detail mode needs all of --alpha, --beta and --eta".into(),
        ));
    }
    if let (Some(alpha), Some(beta), Some(eta)) = (args.alpha, args.beta, args.eta) {
        let params = DiluteParams::new(eta)?;
        let chain = elimination_chain(alpha, beta, params.fugacity(), params.spin_phase())?;
        let steps: Vec<serde_json::Value> = chain
            .steps
            .iter()
            .map(|(name, deviation)| {
                serde_json::json!({ "name": name, "deviation": deviation })
            })
            .collect();
        let complex = |z: Complex64| serde_json::json!({ "re": z.re, "im": z.im });
        let doc = serde_json::json!({
            "draws": 1,
            "alpha": alpha,
            "beta": beta,
            "eta": eta,
            "n": chain.n,
            "steps": steps,
            "final_prefactor": complex(chain.final_prefactor),
            "displayed_prefactor": complex(chain.displayed_prefactor),
            "prefactor_ratio": complex(chain.prefactor_ratio),
            "nullspace_ratio": chain.nullspace_ratio,
            "rank": chain.rank,
            "trivial_nullspace": chain.trivial_nullspace,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    } else {
        let stats = draw_statistics(args.draws as usize, args.common.seed)?;
        Ok(serde_json::to_string_pretty(&stats)?)
    }
}

/// Executes one parsed command, writing its output; returns whether every
/// check passed.
pub fn execute<W: Write>(cli: &Cli, out: &mut W) -> Result<bool> {
    let started = Instant::now();
    match &cli.command {
        Command::Verify(args) => {
            let mut report = run_verify(args)?;
            report.set_wall_time(started.elapsed());
            let rendered = match args.common.out {
                Some(OutFormat::Json) => report.to_json()?,
                Some(OutFormat::Csv) => report.to_csv(),
                None => format!("{report}\n"),
            };
            out.write_all(rendered.as_bytes())
                .map_err(|e| Error::Usage(format!("cannot write output: {e}")))?;
            Ok(report.all_pass())
        }
        Command::Zinv(args) => {
            let (mut report, rows) = run_zinv(args)?;
            report.set_wall_time(started.elapsed());
            let rendered = match args.common.out {
                Some(OutFormat::Json) => report.to_json()?,
                Some(OutFormat::Csv) => partition_csv(&rows),
                None => format!("{report}\n"),
            };
            out.write_all(rendered.as_bytes())
                .map_err(|e| Error::Usage(format!("cannot write output: {e}")))?;
            Ok(report.all_pass())
        }
        Command::Appendix(args) => {
            if args.common.out == Some(OutFormat::Csv) {
                return Err(Error::Usage("the appendix subcommand emits JSON".into()));
            }
            let rendered = run_appendix(args)?;
            out.write_all(rendered.as_bytes())
                .and_then(|()| out.write_all(b"\n"))
                .map_err(|e| Error::Usage(format!("cannot write output: {e}")))?;
            Ok(true)
        }
    }
}

/// Parses the process arguments and runs them; returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { 2 };
        }
    };
    let mut stdout = std::io::stdout();
    match execute(&cli, &mut stdout) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::InvalidArgument(_) => 2,
                _ => 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).expect("arguments parse")
    }

    fn run_captured(args: &[&str]) -> (Result<bool>, String) {
        let cli = parse(args);
        let mut buffer = Vec::new();
        let outcome = execute(&cli, &mut buffer);
        (outcome, String::from_utf8(buffer).expect("utf8 output"))
    }

    #[test]
    fn grids_are_inclusive_start_exclusive_stop() {
        let grid = parse_grid("0.1:0.5:0.1").unwrap();
        assert_eq!(grid.len(), 4);
        assert!((grid[0] - 0.1).abs() < 1e-12);
        assert!((grid[3] - 0.4).abs() < 1e-12);
        assert_eq!(parse_grid("0.7").unwrap(), vec![0.7]);
        // A stop that lands on a grid point by rounding is still excluded.
        assert_eq!(parse_grid("0.0:1.0:0.25").unwrap().len(), 4);
        assert!(matches!(parse_grid("1:0.5:0.1"), Err(Error::Usage(_))));
        assert!(matches!(parse_grid("1:2:-1"), Err(Error::Usage(_))));
        assert!(matches!(parse_grid("a:b"), Err(Error::Usage(_))));
        assert!(matches!(parse_grid("0.9:0.9:0.1"), Err(Error::Usage(_))));
    }

    #[test]
    fn perturbations_parse_as_label_factor_pairs() {
        let parsed = parse_perturbations(&["a:1.01".into(), "u1:0.9".into()]).unwrap();
        assert_eq!(parsed[0], ("a".to_string(), 1.01));
        assert_eq!(parsed[1], ("u1".to_string(), 0.9));
        assert!(parse_perturbations(&["a=1.01".into()]).is_err());
        assert!(parse_perturbations(&["a:x".into()]).is_err());
    }

    #[test]
    fn verify_dense_small_grid_passes() {
        let (outcome, output) = run_captured(&[
            "looplab", "verify", "dense", "--lambda", "0.9", "--alpha", "0.6:3.0:0.6",
            "--tol", "1e-10",
        ]);
        assert!(outcome.unwrap(), "failures in:\n{output}");
        assert!(output.contains("yb.dense") && output.contains("all pass"));
    }

    #[test]
    fn verify_dense_perturbation_fails_checks() {
        let (outcome, output) = run_captured(&[
            "looplab", "verify", "dense", "--alpha", "0.8:3.0:0.8", "--perturb", "a:1.01",
        ]);
        assert!(!outcome.unwrap(), "perturbation unnoticed in:\n{output}");
        assert!(output.contains("FAIL"));
    }

    #[test]
    fn verify_dilute_small_grid_passes_and_serializes() {
        let (outcome, output) = run_captured(&[
            "looplab", "verify", "dilute", "--eta", "0.55", "--alpha", "0.9:3.0:0.9",
            "--out", "json",
        ]);
        assert!(outcome.unwrap(), "failures in:\n{output}");
        assert!(output.contains("holo.stardiff.dilute"));
        assert!(serde_json::from_str::<serde_json::Value>(&output).is_ok());
    }

    #[test]
    fn verify_high_precision_rejects_perturbations() {
        let cli = parse(&[
            "looplab", "verify", "dense", "--precision", "high", "--perturb", "a:1.01",
        ]);
        let mut sink = Vec::new();
        assert!(matches!(execute(&cli, &mut sink), Err(Error::Usage(_))));
    }

    #[test]
    fn appendix_draw_statistics_and_detail_modes() {
        let (outcome, output) = run_captured(&[
            "looplab", "appendix", "--draws", "5", "--seed", "7",
        ]);
        assert!(outcome.unwrap());
        let doc: serde_json::Value = serde_json::from_str(&output).unwrap();
        assert_eq!(doc["draws"], 5);
        assert!(doc["trivial_nullspace"].as_u64().unwrap() >= 4);

        let (outcome, output) = run_captured(&[
            "looplab", "appendix", "--draws", "1", "--alpha", "2.0", "--beta", "2.1",
            "--eta", "0.5",
        ]);
        assert!(outcome.unwrap());
        let doc: serde_json::Value = serde_json::from_str(&output).unwrap();
        assert_eq!(doc["rank"], 27);
        assert_eq!(doc["trivial_nullspace"], true);

        let cli = parse(&["looplab", "appendix", "--draws", "0"]);
        let mut sink = Vec::new();
        assert!(matches!(execute(&cli, &mut sink), Err(Error::Usage(_))));
        let cli = parse(&["looplab", "appendix", "--draws", "1", "--alpha", "2.0"]);
        assert!(matches!(execute(&cli, &mut sink), Err(Error::Usage(_))));
    }

    #[test]
    fn zinv_builtin_cases_pass_and_emit_diagram_csv() {
        let (outcome, output) = run_captured(&["looplab", "zinv", "--out", "csv"]);
        assert!(outcome.unwrap(), "zinv failed:\n{output}");
        assert!(output.starts_with("diagram,p_first,p_second,abs_diff"));
        assert!(output.contains("dense-hexagon:") && output.contains("dense-four:"));
    }

    #[test]
    fn zinv_accepts_a_domain_file() {
        let gamma = 2.0 * PI - 2.0 - 2.2;
        let star = make_domain_hexagon(2.0, 2.2, gamma, HexArrangement::Star).unwrap();
        let path = std::env::temp_dir().join("looplab-zinv-domain.json");
        std::fs::write(&path, crate::geometry::domain_to_json(&star).unwrap()).unwrap();
        let (outcome, output) = run_captured(&[
            "looplab", "zinv", "--domain", path.to_str().unwrap(), "--eta", "0.55",
        ]);
        std::fs::remove_file(&path).ok();
        assert!(outcome.unwrap(), "domain case failed:\n{output}");
        assert!(output.contains("zinv.partition.domain"));
    }
}
