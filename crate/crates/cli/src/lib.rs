//! Command-line driver for the local-field avoidance toolkit.
//!
//! Each subcommand maps onto one library entry point: `box-count` counts
//! digit boxes (a plain grid, or the zero boxes of a smooth function with
//! the covering-lemma bound), `poly-avoid` runs one polynomial-avoidance
//! stage, `smooth-avoid` a staged run against a smooth function,
//! `cantor` the full staged construction, `linear-simul` the binary
//! doubling tree for a linear form, `audit` the dimension bookkeeping of
//! a run, and `verify` rebuilds a construction and re-checks every
//! certificate against its final leaves.
//!
//! All report text is deterministic: two runs with identical inputs write
//! byte-identical artifacts. Reports go to stdout; `--out` duplicates
//! them to a file; progress notes go to stderr.
//!
//! Exit codes: 0 when all requested work (including verification)
//! succeeds, 1 when a verification sweep finds a violating tuple, 2 for
//! configuration or feasibility errors, 3 when the working precision is
//! exhausted before the requested depth.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use locfield::engine::{audit, serialize, CertKind, Engine, EngineConfig, FunctionEntry};
use locfield::field::spec_file;
use locfield::linear;
use locfield::poly::{parse_polynomial, IntPolynomial};
use locfield::smooth::{box_count_bound, count_zero_boxes, smooth_registry};
use locfield::{Ball, Error, Field};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;

#[derive(Parser)]
#[command(
    name = "locfield",
    version,
    about = "Exact avoidance constructions in rings of integers of local fields"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count digit boxes: a plain grid, or the zero boxes of a function
    BoxCount(BoxCountArgs),
    /// One polynomial-avoidance stage with its certificate tree
    PolyAvoid(PolyAvoidArgs),
    /// A staged run against a smooth function from the registry
    SmoothAvoid(SmoothAvoidArgs),
    /// The staged avoidance-set construction
    Cantor(CantorArgs),
    /// The binary doubling tree separating a linear form from its
    /// quadratic error
    LinearSimul(LinearArgs),
    /// Dimension audit of a run: box-count profile, coverings, dichotomy
    Audit(AuditArgs),
    /// Rebuild a construction and re-verify every certificate
    Verify(VerifyArgs),
}

#[derive(Args)]
struct BoxCountArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Zero-box mode: smooth-registry function (x-minus-y, xsq-minus-y,
    /// x-minus-2y-plus-z, ap3-quad, linear:c1,..,cv, linquad:c1,..,cv:d)
    #[arg(long = "fn")]
    func: Option<String>,
    /// Zero-box mode: radius exponent of the enclosing ball
    #[arg(long, default_value_t = 0)]
    mu: u32,
    /// Zero-box mode: radius exponent of the counted boxes
    #[arg(long)]
    lambda: Option<u32>,
    /// Grid mode: radius exponent of the counted boxes
    #[arg(long)]
    scale: Option<u32>,
    /// Grid mode: number of coordinates
    #[arg(long, default_value_t = 1)]
    dimension: u32,
    /// Duplicate the report into this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PolyAvoidArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Polynomial file to avoid
    #[arg(long)]
    poly: Option<PathBuf>,
    /// Registry polynomial to avoid (x-minus-y, xsq-minus-y,
    /// x-minus-2y-plus-z, linear:c1,..,cv)
    #[arg(long = "fn")]
    func: Option<String>,
    /// Initial scale exponent; defaults to the smallest feasible one
    #[arg(long)]
    lambda0: Option<u32>,
    /// Gap between a stage's mu and its selection scale nu
    #[arg(long = "nu-gap", default_value_t = 2)]
    nu_gap: u32,
    /// Duplicate the certificate tree into this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-verify the stage against the surviving leaves
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct SmoothAvoidArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Smooth-registry function to avoid
    #[arg(long = "fn")]
    func: String,
    /// Stages to process
    #[arg(long, default_value_t = 2)]
    depth: u32,
    /// Initial scale exponent; defaults to the smallest feasible one
    #[arg(long)]
    lambda0: Option<u32>,
    /// Gap between a stage's mu and its selection scale nu
    #[arg(long = "nu-gap", default_value_t = 2)]
    nu_gap: u32,
    /// Duplicate the certificate tree into this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-verify all stages against the surviving leaves
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct CantorArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Polynomial file to register (repeatable)
    #[arg(long)]
    poly: Vec<PathBuf>,
    /// Registry polynomial to register (repeatable); with no function
    /// flags at all, defaults to x-minus-2y-plus-z
    #[arg(long = "fn")]
    func: Vec<String>,
    /// Process this many queue items
    #[arg(long)]
    steps: Option<u32>,
    /// Process queue items until this many non-vacuous stages exist
    #[arg(long)]
    depth: Option<u32>,
    /// Initial scale exponent; defaults to the smallest feasible one
    #[arg(long)]
    lambda0: Option<u32>,
    /// Gap between a stage's mu and its selection scale nu
    #[arg(long = "nu-gap", default_value_t = 2)]
    nu_gap: u32,
    /// Duplicate the certificate tree into this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-verify all stages against the final leaves
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct LinearArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Form coefficients, e.g. 1,-2,1
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    alpha: Vec<i64>,
    /// Quadratic-error constant, an exact rational like 1 or 3/2
    #[arg(long = "C", default_value = "1")]
    c: String,
    /// Starting radius exponent; defaults to the smallest feasible one
    #[arg(long)]
    lambda0: Option<u32>,
    /// Doubling depth of the tree
    #[arg(long, required = true)]
    depth: u32,
    /// Duplicate the tree into this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Duplicate the separation report into this file
    #[arg(long)]
    report: Option<PathBuf>,
    /// Sweep all leaf tuples and certify the separation bound
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Polynomial file to register (repeatable)
    #[arg(long)]
    poly: Vec<PathBuf>,
    /// Registry polynomial to register (repeatable); defaults to
    /// x-minus-2y-plus-z
    #[arg(long = "fn")]
    func: Vec<String>,
    /// Queue items to process before auditing
    #[arg(long, default_value_t = 2)]
    steps: u32,
    /// Random coverings to draw and test
    #[arg(long, default_value_t = 20)]
    coverings: u32,
    /// Seed for the first covering; later ones increment it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial scale exponent; defaults to the smallest feasible one
    #[arg(long)]
    lambda0: Option<u32>,
    /// Gap between a stage's mu and its selection scale nu
    #[arg(long = "nu-gap", default_value_t = 2)]
    nu_gap: u32,
    /// Duplicate the audit report into this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Field description file
    #[arg(long)]
    field: PathBuf,
    /// Polynomial file to register (repeatable)
    #[arg(long)]
    poly: Vec<PathBuf>,
    /// Registry polynomial to register (repeatable); defaults to
    /// x-minus-2y-plus-z
    #[arg(long = "fn")]
    func: Vec<String>,
    /// Process this many queue items (default 3 if --depth absent too)
    #[arg(long)]
    steps: Option<u32>,
    /// Process queue items until this many non-vacuous stages exist
    #[arg(long)]
    depth: Option<u32>,
    /// Initial scale exponent; defaults to the smallest feasible one
    #[arg(long)]
    lambda0: Option<u32>,
    /// Gap between a stage's mu and its selection scale nu
    #[arg(long = "nu-gap", default_value_t = 2)]
    nu_gap: u32,
    /// Duplicate the verification report into this file
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv = std::iter::once("locfield".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are "errors" to the parser but clean
            // exits to the shell.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> locfield::Result<i32> {
    match cmd {
        Cmd::BoxCount(a) => box_count(a),
        Cmd::PolyAvoid(a) => poly_avoid(a),
        Cmd::SmoothAvoid(a) => smooth_avoid(a),
        Cmd::Cantor(a) => cantor(a),
        Cmd::LinearSimul(a) => linear_simul(a),
        Cmd::Audit(a) => audit_cmd(a),
        Cmd::Verify(a) => verify_cmd(a),
    }
}

fn load_field(path: &Path) -> locfield::Result<Field> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read field file {}: {e}", path.display())))?;
    Field::new(spec_file::parse_field_spec(&text)?)
}

/// Print a report to stdout and, when requested, into a file with the
/// exact same bytes.
fn emit(text: &str, out: Option<&Path>) -> locfield::Result<()> {
    print!("{text}");
    if let Some(path) = out {
        fs::write(path, text)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Integer polynomials by name, mirroring the smooth registry's linear
/// entries but producing exact polynomial objects with derivative chains.
fn poly_registry(field: &Field, name: &str) -> locfield::Result<IntPolynomial> {
    if let Some(rest) = name.strip_prefix("linear:") {
        let coeffs = parse_i64_list(rest)?;
        if coeffs.len() < 2 {
            return Err(Error::Infeasible(
                "a linear form needs at least two coefficients".into(),
            ));
        }
        let v = coeffs.len();
        let terms: Vec<(Vec<u32>, i64)> = coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let mut exps = vec![0u32; v];
                exps[j] = 1;
                (exps, c)
            })
            .collect();
        return IntPolynomial::from_int_coeffs(field, 1, v, &terms);
    }
    match name {
        "x-minus-y" => {
            IntPolynomial::from_int_coeffs(field, 1, 2, &[(vec![1, 0], 1), (vec![0, 1], -1)])
        }
        "xsq-minus-y" => {
            IntPolynomial::from_int_coeffs(field, 1, 2, &[(vec![2, 0], 1), (vec![0, 1], -1)])
        }
        "x-minus-2y-plus-z" => IntPolynomial::from_int_coeffs(
            field,
            1,
            3,
            &[(vec![1, 0, 0], 1), (vec![0, 1, 0], -2), (vec![0, 0, 1], 1)],
        ),
        _ => Err(Error::Parse(format!(
            "unknown polynomial {name:?} (try x-minus-y, xsq-minus-y, \
             x-minus-2y-plus-z, or linear:c1,..,cv)"
        ))),
    }
}

fn parse_i64_list(text: &str) -> locfield::Result<Vec<i64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<i64>()
                .map_err(|_| Error::Parse(format!("bad integer {:?}", part.trim())))
        })
        .collect()
}

/// Registered functions for the engine commands: polynomial files first,
/// then registry names, then the default form if nothing was given.
fn function_entries(
    field: &Field,
    polys: &[PathBuf],
    names: &[String],
    default_name: Option<&str>,
) -> locfield::Result<Vec<FunctionEntry>> {
    let mut entries = Vec::new();
    for path in polys {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Parse(format!("cannot read polynomial file {}: {e}", path.display()))
        })?;
        let f = parse_polynomial(field, &text)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("poly")
            .to_string();
        entries.push(FunctionEntry::polynomial(&name, f)?);
    }
    for name in names {
        entries.push(FunctionEntry::polynomial(name, poly_registry(field, name)?)?);
    }
    if entries.is_empty() {
        if let Some(name) = default_name {
            entries.push(FunctionEntry::polynomial(name, poly_registry(field, name)?)?);
        }
    }
    Ok(entries)
}

/// Smallest initial scale whose per-slot ball count q^(lambda0·n) exceeds
/// every function's slot count v, the engine's feasibility precondition
/// for the first selection.
fn default_lambda0(field: &Field, entries: &[FunctionEntry]) -> u32 {
    let n = entries.first().map_or(1, |f| f.n()) as u32;
    let need = BigUint::from(entries.iter().map(|f| f.v()).max().unwrap_or(1) as u64);
    let step = BigUint::from(field.q()).pow(n);
    let mut lambda0 = 1u32;
    let mut count = step.clone();
    while count <= need && lambda0 < field.precision() {
        lambda0 += 1;
        count *= &step;
    }
    lambda0
}

fn pick_lambda0(field: &Field, entries: &[FunctionEntry], requested: Option<u32>) -> u32 {
    match requested {
        Some(l) => l,
        None => {
            let l = default_lambda0(field, entries);
            eprintln!("using lambda0 = {l}");
            l
        }
    }
}

fn engine_config(lambda0: u32, nu_gap: u32) -> EngineConfig {
    EngineConfig { lambda0, nu_gap, ..EngineConfig::default() }
}

fn nonvacuous(eng: &Engine) -> usize {
    eng.stages()
        .iter()
        .filter(|s| !matches!(s.kind, CertKind::Vacuous))
        .count()
}

/// Drive the queue by item count or by non-vacuous-stage count. Failing
/// to reach the requested amount of work because digits ran out is a
/// precision-exhaustion error here: the caller asked for exactly that
/// much tree.
fn run_engine(eng: &mut Engine, steps: Option<u32>, depth: Option<u32>) -> locfield::Result<()> {
    match (steps, depth) {
        (Some(s), None) => {
            let done = eng.run(s as usize)?;
            if done < s as usize {
                return Err(Error::PrecisionExhausted(format!(
                    "only {done} of {s} queue items fit the working precision"
                )));
            }
            Ok(())
        }
        (None, Some(d)) => {
            let mut scanned = 0u32;
            while nonvacuous(eng) < d as usize {
                eng.process_next()?;
                scanned += 1;
                if scanned > 10_000 {
                    return Err(Error::TooLarge(format!(
                        "queue scan passed 10000 items before reaching depth {d}"
                    )));
                }
            }
            Ok(())
        }
        _ => Err(Error::Parse("pass exactly one of --steps or --depth".into())),
    }
}

/// Shared tail of the engine commands: render the tree, optionally
/// re-verify every stage, and map a violation to exit code 1.
fn finish_engine(
    eng: &Engine,
    out: Option<&Path>,
    verify: bool,
) -> locfield::Result<i32> {
    let tree = serialize::tree_string(eng);
    emit(&tree, out)?;
    if verify {
        if let Some((stage, tuple)) = eng.verify_all()? {
            let field = eng.field();
            eprintln!(
                "stage {stage} certificate violated by tuple {}",
                serialize::digits(field, &tuple, field.precision())
            );
            return Ok(1);
        }
        eprintln!("verified {} stages", eng.stages().len());
    }
    Ok(0)
}

fn box_count(a: BoxCountArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let mut text = String::from("box-count 1\n");
    text.push_str(&serialize::field_line(&field));
    text.push('\n');
    let mut code = 0;
    match (&a.func, a.scale) {
        (Some(name), None) => {
            let lambda = a
                .lambda
                .ok_or_else(|| Error::Parse("zero-box mode needs --lambda".into()))?;
            if lambda < a.mu {
                return Err(Error::Infeasible(format!(
                    "lambda = {lambda} must be at least mu = {}",
                    a.mu
                )));
            }
            let f = smooth_registry(&field, name)?;
            let t = Ball::of(&vec![field.zero(); f.nv()], a.mu);
            let count = count_zero_boxes(&f, &t, lambda)?;
            let bound = box_count_bound(&f, a.mu, lambda);
            // bound = 2^m · q^exp; print the closed form next to the value.
            let m = f.m() as i64;
            let exp = m * (f.c0() as i64 - m * f.c1() as i64)
                + f.nv() as i64
                + lambda as i64 * (f.nv() as i64 - m)
                - a.mu as i64;
            text.push_str(&format!("mode=zero-boxes fn={name} mu={} lambda={lambda}\n", a.mu));
            text.push_str(&format!("count={count}\n"));
            text.push_str(&format!("bound={bound}\nbound_form=2^{}*q^{exp}\n", f.m()));
            if BigRational::from_integer(BigInt::from(count)) > bound {
                text.push_str("violation count exceeds the box-count bound\n");
                code = 1;
            }
        }
        (None, Some(scale)) => {
            let count = BigUint::from(field.q()).pow(scale * a.dimension);
            text.push_str(&format!("mode=grid scale={scale} dimension={}\n", a.dimension));
            text.push_str(&format!("count={count}\n"));
        }
        _ => {
            return Err(Error::Parse(
                "pass either --fn NAME --lambda L (zero boxes) or --scale S \
                 [--dimension D] (grid)"
                    .into(),
            ))
        }
    }
    text.push_str("end\n");
    emit(&text, a.out.as_deref())?;
    Ok(code)
}

fn poly_avoid(a: PolyAvoidArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let entries = match (&a.poly, &a.func) {
        (Some(path), None) => function_entries(&field, std::slice::from_ref(path), &[], None)?,
        (None, Some(name)) => function_entries(&field, &[], std::slice::from_ref(name), None)?,
        _ => return Err(Error::Parse("pass exactly one of --poly or --fn".into())),
    };
    let lambda0 = pick_lambda0(&field, &entries, a.lambda0);
    let mut eng = Engine::new(&field, entries, engine_config(lambda0, a.nu_gap))?;
    run_engine(&mut eng, Some(1), None)?;
    finish_engine(&eng, a.out.as_deref(), a.verify)
}

fn smooth_avoid(a: SmoothAvoidArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let f = smooth_registry(&field, &a.func)?;
    let entries = vec![FunctionEntry::smooth(&a.func, f)];
    let lambda0 = pick_lambda0(&field, &entries, a.lambda0);
    let mut eng = Engine::new(&field, entries, engine_config(lambda0, a.nu_gap))?;
    run_engine(&mut eng, Some(a.depth), None)?;
    finish_engine(&eng, a.out.as_deref(), a.verify)
}

fn cantor(a: CantorArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let entries = function_entries(&field, &a.poly, &a.func, Some("x-minus-2y-plus-z"))?;
    let lambda0 = pick_lambda0(&field, &entries, a.lambda0);
    let mut eng = Engine::new(&field, entries, engine_config(lambda0, a.nu_gap))?;
    run_engine(&mut eng, a.steps, a.depth)?;
    finish_engine(&eng, a.out.as_deref(), a.verify)
}

fn linear_simul(a: LinearArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let c: BigRational = a
        .c
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational constant {:?}", a.c)))?;
    let alpha: Vec<_> = a.alpha.iter().map(|&k| field.from_i64(k)).collect();
    let lambda0 = match a.lambda0 {
        Some(l) => l,
        None => {
            let l = linear::minimal_feasible_lambda0(&field, &alpha, &c)?;
            eprintln!("using minimal feasible lambda0 = {l}");
            l
        }
    };
    let set = linear::build_simul_set(&field, &alpha, &c, lambda0, a.depth)?;
    eprintln!(
        "separation bound: |alpha.x| >= q^-(lambda0 + (j+1)*cstar) at split \
         depth j, with lambda0 = {} and cstar = {}",
        set.lambda0(),
        set.c_star()
    );
    let tree = set.tree_string();
    if let Some(path) = &a.out {
        fs::write(path, &tree)?;
        eprintln!("wrote {}", path.display());
    }
    if a.verify {
        let report = set.verify()?;
        emit(&report.render(), a.report.as_deref())?;
        if let Some(first) = report.violations.first() {
            eprintln!("verification failed: {first}");
            return Ok(1);
        }
    } else {
        print!("{tree}");
    }
    Ok(0)
}

fn audit_cmd(a: AuditArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let entries = function_entries(&field, &a.poly, &a.func, Some("x-minus-2y-plus-z"))?;
    let lambda0 = pick_lambda0(&field, &entries, a.lambda0);
    let mut eng = Engine::new(&field, entries, engine_config(lambda0, a.nu_gap))?;
    run_engine(&mut eng, Some(a.steps), None)?;

    let mut text = String::from("audit-report 1\n");
    text.push_str(&serialize::field_line(&field));
    text.push('\n');
    let chain: Vec<String> = audit::scale_chain(&eng).iter().map(u32::to_string).collect();
    text.push_str(&format!("scales {}\n", chain.join(",")));
    let target = audit::target_dimension(&eng);
    let s = target / 2;
    text.push_str(&format!("target-dimension {target}\ns {s}\n"));
    for (mu, count) in audit::minkowski_profile(&eng)? {
        text.push_str(&format!("profile mu={mu} count={count}\n"));
    }

    // Coverings are drawn over the first region the construction actually
    // certified, and the dichotomy is tested against that stage.
    let stage = eng
        .stages()
        .iter()
        .position(|r| !matches!(r.kind, CertKind::Vacuous));
    let mut first_violation = None;
    if let Some(i) = stage {
        let v = eng.stages()[i].regions[0].clone();
        for k in 0..a.coverings {
            let seed = a.seed + k as u64;
            let covering = audit::random_covering(&eng, &v, seed)?;
            audit::validate_covering(&eng, &covering)?;
            let report = audit::dichotomy(&eng, &covering, i, s)?;
            text.push_str(&format!(
                "covering seed={seed} balls={} large={} holds={}\n",
                covering.balls.len(),
                report.large_volume,
                report.holds
            ));
            if !report.holds && first_violation.is_none() {
                first_violation =
                    Some(format!("covering seed={seed} fails the dichotomy: {}", report.detail));
            }
        }
    }
    text.push_str("end\n");
    emit(&text, a.out.as_deref())?;
    if let Some(v) = first_violation {
        eprintln!("{v}");
        return Ok(1);
    }
    Ok(0)
}

fn verify_cmd(a: VerifyArgs) -> locfield::Result<i32> {
    let field = load_field(&a.field)?;
    let entries = function_entries(&field, &a.poly, &a.func, Some("x-minus-2y-plus-z"))?;
    let lambda0 = pick_lambda0(&field, &entries, a.lambda0);
    let mut eng = Engine::new(&field, entries, engine_config(lambda0, a.nu_gap))?;
    let (steps, depth) = match (a.steps, a.depth) {
        (None, None) => (Some(3), None),
        other => other,
    };
    run_engine(&mut eng, steps, depth)?;

    let mut text = String::from("verify-report 1\n");
    text.push_str(&serialize::field_line(&field));
    text.push('\n');
    let mut failure = None;
    for i in 0..eng.stages().len() {
        let record = &eng.stages()[i];
        let name = eng.functions()[record.item.ell - 1].name().to_string();
        match record.kind {
            CertKind::Vacuous => {
                text.push_str(&format!("stage {i} fn={name} vacuous\n"));
                continue;
            }
            CertKind::Polynomial { lower_bound_exp, .. } => {
                text.push_str(&format!("stage {i} fn={name} kind=polynomial bound_exp={lower_bound_exp}"));
            }
            CertKind::Smooth { ref certificate } => {
                text.push_str(&format!(
                    "stage {i} fn={name} kind=smooth bound_exp={}",
                    certificate.lower_bound_exp
                ));
            }
        }
        match eng.verify_stage(i)? {
            None => text.push_str(" ok\n"),
            Some(tuple) => {
                text.push_str(" VIOLATED\n");
                if failure.is_none() {
                    failure = Some((i, tuple));
                }
            }
        }
    }
    text.push_str(if failure.is_none() { "verified\n" } else { "failed\n" });
    text.push_str("end\n");
    emit(&text, a.out.as_deref())?;
    if let Some((stage, tuple)) = failure {
        eprintln!(
            "stage {stage} certificate violated by tuple {}",
            serialize::digits(&field, &tuple, field.precision())
        );
        return Ok(1);
    }
    eprintln!("verified {} stages", eng.stages().len());
    Ok(0)
}
