//! `harmonic` command-line front end.
//!
//! Exit codes: 0 success, 1 a check or certification failed, 2 bad usage or input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use harmonic::adversary::{
    adaptive_medium_stream, grid_min_max, min_max_over, pattern_stream, replay_ratio, simulation_params,
    static_lower_bound, CaseId, LowerBoundCase,
};
use harmonic::certify::{certify, format_knapsack, parse_certificate, verify_certificate, ClassModel, CertifyOptions, EntryValue};
use harmonic::generate::generate_sizes;
use harmonic::packer::Packer;
use harmonic::paramfile::{format_params, load_params, params_digest, parse_param_file};
use harmonic::params::checked;
use harmonic::postprocess::PostState;
use harmonic::stream::{format_stream, parse_stream, parse_trace, random_stream, Trace, TraceEvent};
use harmonic::{parse_rational, Error, Mode, Rational};

#[derive(Parser)]
#[command(name = "harmonic", version, about = "Harmonic-type online bin packing: packing, certification, lower bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a parameter file from a generator configuration.
    GenParams {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prove an upper bound on the competitive ratio and write a certificate.
    Certify {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_parser = rational)]
        ratio: Rational,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        jobs: Jobs,
        /// Binary-search steps per class.
        #[arg(long, default_value_t = 20)]
        max_iters: usize,
        /// Write one knapsack instance per class into this directory.
        #[arg(long)]
        emit_knapsacks: Option<PathBuf>,
    },
    /// Re-check a certificate against a parameter file.
    VerifyCert {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Pack an item stream, or a seeded random one.
    Pack {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, conflicts_with = "seed")]
        stream: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Items in a random stream.
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        /// Random sizes are multiples of 1/grid.
        #[arg(long, default_value_t = 1000)]
        grid: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the packed sizes as a stream file.
        #[arg(long)]
        emit_stream: Option<PathBuf>,
        /// Check the packing invariants after every item.
        #[arg(long)]
        check_invariants: bool,
    },
    /// Replay a trace, post-process the packing and check the outcome.
    Postprocess {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Evaluate the lower-bound inputs of a case.
    LowerBound {
        /// `redfit4=1`, `redfit4=2` or `redfit4=3`.
        #[arg(long, value_parser = case_id)]
        case: CaseId,
        /// Comma-separated red fractions; defaults to the case's reference values.
        #[arg(long, value_delimiter = ',', value_parser = rational)]
        alpha: Option<Vec<Rational>>,
        /// Also sweep a grid over all red fractions with this step.
        #[arg(long, value_parser = rational)]
        grid_step: Option<Rational>,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Run a lower-bound construction against the packer.
    Adversary {
        #[arg(long, value_parser = case_id)]
        case: CaseId,
        #[arg(long, value_parser = mode)]
        mode: Mode,
        /// Copies of the base pattern.
        #[arg(long, default_value_t = 2000)]
        copies: usize,
        /// Packer parameters; defaults to narrow types around the adversary sizes.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Static pattern such as `0,0,3,1` instead of the adaptive construction.
        #[arg(long, value_delimiter = ',')]
        pattern: Option<Vec<u32>>,
        /// Width of the medium window above 1/3.
        #[arg(long, value_parser = rational, default_value = "1/1000")]
        eps: Rational,
        /// Upper end of the sand type.
        #[arg(long, value_parser = rational, default_value = "1/200")]
        sand: Rational,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Jobs {
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn case_id(s: &str) -> Result<CaseId, String> {
    CaseId::parse(s).ok_or_else(|| format!("unknown case `{s}`, expected redfit4=1|2|3"))
}

fn mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}`, expected super|extreme"))
}

/// Either bad input (exit 2) or a failed check (exit 1).
enum Failure {
    Input(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<harmonic::ParseError> for Failure {
    fn from(e: harmonic::ParseError) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn show(x: &Rational) -> String {
    format!("{x} ({})", x.to_decimal(6))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenParams { config, out } => gen_params(&config, out.as_deref()),
        Command::Certify { params, ratio, out, jobs, max_iters, emit_knapsacks } => {
            run_certify(&params, &ratio, out.as_deref(), jobs.jobs, max_iters, emit_knapsacks.as_deref())
        }
        Command::VerifyCert { params, cert, jobs } => verify(&params, &cert, jobs.jobs),
        Command::Pack { params, stream, seed, count, grid, trace, emit_stream, check_invariants } => pack(
            &params,
            stream.as_deref(),
            seed,
            count,
            grid,
            trace.as_deref(),
            emit_stream.as_deref(),
            check_invariants,
        ),
        Command::Postprocess { params, trace } => postprocess(&params, &trace),
        Command::LowerBound { case, alpha, grid_step, jobs } => lower_bound(case, alpha, grid_step, jobs.jobs),
        Command::Adversary { case, mode, copies, params, pattern, eps, sand, transcript } => {
            adversary(case, mode, copies, params.as_deref(), pattern, &eps, &sand, transcript.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("harmonic: check-failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("harmonic: input-error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn gen_params(config: &Path, out: Option<&Path>) -> Outcome {
    let cfg = parse_param_file(&read(config)?)?.generator_config()?;
    let p = checked(generate_sizes(&cfg)?)?;
    let text = format_params(&p);
    match out {
        Some(path) => {
            write(path, &text)?;
            println!("types: {}", p.num_types());
            println!("params-sha256: {}", params_digest(&p));
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run_certify(
    params: &Path,
    ratio: &Rational,
    out: Option<&Path>,
    jobs: usize,
    max_iters: usize,
    emit: Option<&Path>,
) -> Outcome {
    let p = load_params(&read(params)?)?;
    let report = certify(&p, ratio, &CertifyOptions { jobs, max_iters })?;
    println!("ratio: {}", show(ratio));
    for c in &report.classes {
        let last = c.probes.last();
        match (&c.entry, last) {
            (Some(EntryValue::WOnly), Some(pr)) => println!("class {} wonly max {}", c.class, show(&pr.max)),
            (Some(EntryValue::Simple), Some(pr)) => println!("class {} simple max {}", c.class, show(&pr.max)),
            (Some(EntryValue::Mixed(y)), Some(pr)) => {
                println!("class {} y3 {y} max {} probes {}", c.class, show(&pr.max), c.probes.len())
            }
            (None, Some(pr)) => println!(
                "class {} FAILED after {} probes: max {} at y3 {} pattern {}",
                c.class,
                c.probes.len(),
                show(&pr.max),
                pr.y3,
                pr.pattern
            ),
            (_, None) => println!("class {} no probes", c.class),
        }
    }
    if let Some(dir) = emit {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
        let tables = p.tables();
        for c in &report.classes {
            let model = ClassModel::build(&p, &tables, c.class);
            let entry = match (&c.entry, c.probes.last()) {
                (Some(e), _) => e.clone(),
                (None, Some(pr)) => EntryValue::Mixed(pr.y3.clone()),
                (None, None) => continue,
            };
            write(&dir.join(format!("class-{}.knap", c.class)), &format_knapsack(&model, ratio, &entry))?;
        }
    }
    match report.certificate {
        Some(cert) => {
            if let Some(path) = out {
                write(path, &cert.format())?;
            } else {
                print!("{}", cert.format());
            }
            println!("certified: {}", show(ratio));
            Ok(())
        }
        None => {
            let f = report.first_failure().map(|c| c.class).unwrap_or_default();
            Err(Failure::Check(format!("class {f} is not dual feasible at {}", show(ratio))))
        }
    }
}

fn verify(params: &Path, cert: &Path, jobs: usize) -> Outcome {
    let p = load_params(&read(params)?)?;
    let c = parse_certificate(&read(cert)?)?;
    let v = verify_certificate(&p, &c, jobs)?;
    for chk in &v.checks {
        println!("class {} {} max {}", chk.class, if chk.ok { "ok" } else { "FAIL" }, show(&chk.max));
    }
    if v.accepted {
        println!("accepted: {}", show(&c.ratio));
        Ok(())
    } else {
        Err(Failure::Check(v.problems.join("; ")))
    }
}

#[allow(clippy::too_many_arguments)]
fn pack(
    params: &Path,
    stream: Option<&Path>,
    seed: Option<u64>,
    count: usize,
    grid: u64,
    trace_out: Option<&Path>,
    stream_out: Option<&Path>,
    check: bool,
) -> Outcome {
    let p = load_params(&read(params)?)?;
    let sizes = match (stream, seed) {
        (Some(path), _) => parse_stream(&read(path)?)?,
        (None, Some(seed)) => random_stream(seed, count, grid),
        (None, None) => return Err(Failure::Input("give --stream or --seed".into())),
    };
    let mut trace = Trace::new(params_digest(&p), p.mode);
    let mut packer = Packer::new(p);
    let mut violations = Vec::new();
    for (k, s) in sizes.iter().enumerate() {
        let out = packer.pack(s.clone())?;
        trace.record(&out);
        if check {
            for v in packer.check_invariants() {
                violations.push(format!("item {}: {v}", k + 1));
            }
        }
    }
    trace.bins = Some(packer.bins_used());
    println!("items: {}", sizes.len());
    println!("bins: {}", packer.bins_used());
    let volume = sizes.iter().fold(Rational::zero(), |a, s| a + s);
    println!("volume: {}", show(&volume));
    if let Some(path) = trace_out {
        write(path, &trace.format())?;
    }
    if let Some(path) = stream_out {
        write(path, &format_stream(&sizes))?;
    }
    if check {
        println!("invariant-violations: {}", violations.len());
        for v in violations.iter().take(20) {
            println!("  {v}");
        }
        if !violations.is_empty() {
            return Err(Failure::Check(format!("{} invariant violations", violations.len())));
        }
    }
    Ok(())
}

fn postprocess(params: &Path, trace_path: &Path) -> Outcome {
    let p = load_params(&read(params)?)?;
    let trace = parse_trace(&read(trace_path)?)?;
    if trace.digest != params_digest(&p) {
        return Err(Failure::Input("trace was recorded under different parameters".into()));
    }
    let mut replay = Trace::new(trace.digest.clone(), p.mode);
    let mut packer = Packer::new(p);
    for size in trace.sizes() {
        let out = packer.pack(size)?;
        replay.record(&out);
    }
    if let Some(k) = replay.events.iter().zip(&trace.events).position(|(a, b)| a != b) {
        let line = match &trace.events[k] {
            TraceEvent::Place(pl) => format!("item {}", pl.item + 1),
            TraceEvent::Update(_) => format!("event {}", k + 1),
        };
        return Err(Failure::Check(format!("replay diverges from the trace at {line}")));
    }
    if replay.events.len() != trace.events.len() {
        return Err(Failure::Check("replay and trace differ in length".into()));
    }
    if trace.bins.is_some_and(|b| b != packer.bins_used()) {
        return Err(Failure::Check("recorded bin count differs from the replay".into()));
    }
    let post = PostState::run(&packer);
    print!("{}", post.summary());
    let violations = post.verify();
    println!("post-conditions: {}", if violations.is_empty() { "ok" } else { "violated" });
    for v in &violations {
        println!("  {v}");
    }
    if !violations.is_empty() {
        return Err(Failure::Check(format!("{} post-condition violations", violations.len())));
    }
    if !post.weight_bound().holds() {
        return Err(Failure::Check("bins used exceed min(W, V) plus slack".into()));
    }
    Ok(())
}

fn lower_bound(id: CaseId, alpha: Option<Vec<Rational>>, step: Option<Rational>, jobs: usize) -> Outcome {
    let case = LowerBoundCase::get(id);
    let alpha = alpha.unwrap_or_else(|| case.table_alpha.clone());
    let best = static_lower_bound(&case, &alpha)?;
    println!("case {id}");
    println!("alpha: {}", alpha.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
    for (k, (input, w)) in case.inputs.iter().zip(case.input_weights(&alpha)).enumerate() {
        let pats: Vec<String> = input
            .parts
            .iter()
            .map(|p| {
                let pat = p.pattern.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
                format!("({pat}) weight {} chi {}", p.formula, p.chi.formula())
            })
            .collect();
        println!("input {}: {} -> {}", k + 1, pats.join(" | "), show(&w));
    }
    println!("lower-bound: {}", show(&best));
    println!("claimed: {}", show(&case.claimed));
    if let Some(step) = step {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build();
        let pool = pool.map_err(|e| Failure::Input(format!("thread pool: {e}")))?;
        let g = pool.install(|| grid_min_max(&case, &step))?;
        println!("grid-step: {step}");
        println!("grid-points: {}", g.points);
        println!("grid-min: {}", show(&g.grid_min));
        println!("grid-argmin: {}", g.argmin.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
        println!("lipschitz: {}", show(&g.lipschitz));
        println!("slack: {}", show(&g.slack));
        println!("certified: {}", show(&g.certified()));
    }
    // A singleton grid at the chosen point is the largest input weight there.
    let axes: Vec<Vec<Rational>> = alpha.iter().map(|a| vec![a.clone()]).collect();
    println!("max-input: {}", show(&min_max_over(&case, &axes).grid_min));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adversary(
    id: CaseId,
    mode: Mode,
    copies: usize,
    params: Option<&Path>,
    pattern: Option<Vec<u32>>,
    eps: &Rational,
    sand: &Rational,
    transcript: Option<&Path>,
) -> Outcome {
    let case = LowerBoundCase::get(id);
    let build = |m: Mode| simulation_params(&case, &case.table_alpha, &harmonic::rational::q(1, 100), sand, m);
    let p = match params {
        Some(path) => load_params(&read(path)?)?,
        None => build(mode)?,
    };
    if p.mode != mode {
        return Err(Failure::Input(format!("parameter file is {} mode, --mode is {mode}", p.mode)));
    }
    println!("case {id} mode {mode} copies {copies}");
    let items = if let Some(pat) = pattern {
        let offset = harmonic::adversary::max_offset(&case, &pat)?.min(Rational::new(1, 5000));
        let s = pattern_stream(&case, &pat, copies, &offset, sand)?;
        let bins = Packer::run(p, s.items.iter())?.bins_used();
        let ratio = Rational::new(bins as i64, s.opt as i64);
        println!("items: {}", s.items.len());
        println!("alg: {bins}");
        println!("opt: {}", s.opt);
        println!("ratio: {}", show(&ratio));
        if let Some(part) = case.inputs.iter().flat_map(|i| &i.parts).find(|part| part.pattern == pat) {
            println!("weight: {}", show(&part.weight.eval(&case.table_alpha)));
        }
        s.items
    } else {
        let run = adaptive_medium_stream(&case, p, copies, eps, sand)?;
        println!("items: {}", run.items.len());
        println!("mediums: {}", run.mediums);
        if let Some(x) = &run.last_new {
            println!("last-new-medium: {}", show(x));
        }
        println!("large-items: {}", run.large_items);
        println!("mixed-bins: {}", run.mixed_bins);
        println!("pair-bins: {}", run.pair_bins);
        println!("alg: {}", run.alg);
        println!("opt: {}", run.opt);
        println!("ratio: {}", show(&run.ratio()));
        if params.is_none() {
            let other = if mode == Mode::Super { Mode::Extreme } else { Mode::Super };
            let replay = replay_ratio(build(other)?, &run)?;
            println!("replay-{other}: {}", show(&replay));
        }
        run.items
    };
    if let Some(path) = transcript {
        write(path, &format_stream(&items))?;
    }
    Ok(())
}
