use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use socheck::certify::{verdict, Mode, OracleChoice, Overall, VerifyConfig};
use socheck::corpus::{corpus, default_config, run_entry};
use socheck::expr::FunctionDef;
use socheck::problem::ProblemFile;
use socheck::raycalc::{
    default_eps_sequence, descent_variation_probe, mean_value_check, tangent_variation_check, weak_dir2, wf_membership,
    DescentGrid,
};
use socheck::subdiff::{estimate_subdiff2, SamplerConfig};

#[derive(Parser)]
#[command(name = "socheck", version, about = "Check necessary optimality conditions of multiobjective programs with C^{1,1} data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the first- and second-order conditions at a point.
    Check(CheckArgs),
    /// Estimate the second-order subdifferential of one function.
    Subdiff(SubdiffArgs),
    /// Run a diagnostic probe.
    Probe(ProbeArgs),
    /// Run the built-in corpus gate.
    Corpus(CorpusArgs),
}

#[derive(Args, Clone)]
struct SamplerArgs {
    /// Samples per radius.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Ball radii, strictly decreasing.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    radii: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

impl SamplerArgs {
    fn config(&self) -> SamplerConfig {
        let mut cfg = SamplerConfig {
            samples: self.samples,
            seed: self.seed,
            ..SamplerConfig::default()
        };
        if let Some(r) = &self.radii {
            cfg.radii = r.clone();
        }
        cfg
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theorem,
    Corollary,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Auto,
    Separable,
    Sampling,
}

#[derive(Args)]
struct CheckArgs {
    /// Problem JSON file.
    file: PathBuf,
    /// Candidate point; defaults to the point stored in the file.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    point: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "theorem")]
    mode: ModeArg,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Fixed slack for the second-order rows.
    #[arg(long)]
    eta: Option<f64>,
    /// Enumerate extreme rays of the critical cone.
    #[arg(long)]
    rays: bool,
    /// Number of random unit directions to try.
    #[arg(long, default_value_t = 0)]
    random_dirs: usize,
    #[arg(long, value_enum, default_value = "auto")]
    oracle: OracleArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubdiffArgs {
    file: PathBuf,
    /// Function: an objective index or a name such as f0, h1, g0.
    #[arg(long = "fn", default_value = "0")]
    func: String,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    at: Vec<f64>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    dir: Vec<f64>,
    /// Probe vector for the support interval; defaults to the direction.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    h: Option<Vec<f64>>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeKind {
    Wdd2,
    Meanvalue,
    Descent,
    Tangent,
}

#[derive(Args)]
struct ProbeArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    what: ProbeKind,
    /// Function for the scalar probes (objective index or name).
    #[arg(long = "fn", default_value = "0")]
    func: String,
    /// Map for wdd2: f, h or g.
    #[arg(long, default_value = "h")]
    map: String,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    at: Vec<f64>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    dir: Option<Vec<f64>>,
    /// Second endpoint for the mean value check.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    to: Option<Vec<f64>>,
    /// Variation w̄ for the descent and tangent probes.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    w: Option<Vec<f64>>,
    #[arg(long, default_value_t = 64)]
    segment_samples: usize,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct CorpusArgs {
    /// Run every entry.
    #[arg(long)]
    all: bool,
    /// Run only the named entries.
    #[arg(long)]
    name: Vec<String>,
}

fn load(path: &PathBuf) -> Result<ProblemFile, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file = ProblemFile::from_json_str(&text).map_err(|e| e.to_string())?;
    file.problem.validate().map_err(|e| e.to_string())?;
    Ok(file)
}

fn pick_function<'a>(file: &'a ProblemFile, key: &str) -> Result<&'a FunctionDef, String> {
    let p = &file.problem;
    if let Ok(i) = key.parse::<usize>() {
        return p.objectives.get(i).ok_or_else(|| format!("no objective {i}"));
    }
    p.all_functions()
        .find(|f| f.name == key)
        .ok_or_else(|| format!("no function named {key}"))
}

fn pick_map<'a>(file: &'a ProblemFile, key: &str) -> Result<&'a [FunctionDef], String> {
    match key {
        "f" => Ok(&file.problem.objectives),
        "h" => Ok(&file.problem.equalities),
        "g" => Ok(&file.problem.qmap),
        other => Err(format!("unknown map {other}; use f, h or g")),
    }
}

fn need<'a>(v: &'a Option<Vec<f64>>, flag: &str) -> Result<&'a [f64], String> {
    v.as_deref().ok_or_else(|| format!("--{flag} is required"))
}

fn emit(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn run_check(args: &CheckArgs) -> Result<ExitCode, String> {
    let file = load(&args.file)?;
    let point = args
        .point
        .clone()
        .or_else(|| file.point.clone())
        .ok_or("no point given and none stored in the file")?;
    let mut cfg = VerifyConfig {
        mode: match args.mode {
            ModeArg::Theorem => Mode::Theorem,
            ModeArg::Corollary => Mode::Corollary,
        },
        oracle: match args.oracle {
            OracleArg::Auto => OracleChoice::Auto,
            OracleArg::Separable => OracleChoice::Separable,
            OracleArg::Sampling => OracleChoice::Sampling,
        },
        sampler: args.sampler.config(),
        eta: args.eta,
        ..VerifyConfig::default()
    };
    cfg.directions.rays = args.rays;
    cfg.directions.random = args.random_dirs;
    cfg.directions.seed = args.sampler.seed;
    cfg.directions.user = file.directions.clone();
    let report = verdict(&file.problem, &point, &cfg).map_err(|e| e.to_string())?;
    let text = report.to_json();
    match &args.out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(match report.overall {
        Overall::Rejected => ExitCode::from(2),
        Overall::Consistent | Overall::Degenerate => ExitCode::SUCCESS,
    })
}

fn run_subdiff(args: &SubdiffArgs) -> Result<ExitCode, String> {
    let file = load(&args.file)?;
    let f = pick_function(&file, &args.func)?;
    let est = estimate_subdiff2(f, &args.at, &args.dir, &args.sampler.config()).map_err(|e| e.to_string())?;
    let h = args.h.clone().unwrap_or_else(|| args.dir.clone());
    let s = est.support_interval(&h).map_err(|e| e.to_string())?;
    emit(&json!({
        "function": f.name,
        "base": est.base,
        "direction": est.direction,
        "points": est.points,
        "discarded": est.discarded,
        "lip_bound": est.lip_bound,
        "support": {"h": h, "lo": s.lo, "hi": s.hi},
    }));
    Ok(ExitCode::SUCCESS)
}

fn run_probe(args: &ProbeArgs) -> Result<ExitCode, String> {
    let file = load(&args.file)?;
    let at = &args.at;
    let cfg = args.sampler.config();
    let out = match args.what {
        ProbeKind::Wdd2 => {
            let comps = pick_map(&file, &args.map)?;
            let c = weak_dir2(comps, at, need(&args.dir, "dir")?, &default_eps_sequence()).map_err(|e| e.to_string())?;
            serde_json::to_value(&c).expect("json")
        }
        ProbeKind::Meanvalue => {
            let f = pick_function(&file, &args.func)?;
            let r = mean_value_check(f, at, need(&args.to, "to")?, args.segment_samples, &cfg).map_err(|e| e.to_string())?;
            serde_json::to_value(&r).expect("json")
        }
        ProbeKind::Descent => {
            let f = pick_function(&file, &args.func)?;
            let d = need(&args.dir, "dir")?;
            let w = need(&args.w, "w")?;
            let probe = descent_variation_probe(f, at, d, w, &DescentGrid::default()).map_err(|e| e.to_string())?;
            let (s, _) = socheck::certify::support_along(f, at, d, OracleChoice::Auto, &cfg).map_err(|e| e.to_string())?;
            let member = wf_membership(f, at, w, s.hi).map_err(|e| e.to_string())?;
            json!({"probe": probe, "s_hi": s.hi, "wf_member": member})
        }
        ProbeKind::Tangent => {
            let d = need(&args.dir, "dir")?;
            let w = need(&args.w, "w")?;
            let t = tangent_variation_check(&file.problem.equalities, at, d, w, &default_eps_sequence())
                .map_err(|e| e.to_string())?;
            serde_json::to_value(&t).expect("json")
        }
    };
    emit(&out);
    Ok(ExitCode::SUCCESS)
}

fn run_corpus(args: &CorpusArgs) -> Result<ExitCode, String> {
    if !args.all && args.name.is_empty() {
        return Err("pass --all or --name".into());
    }
    let mut failed = false;
    for e in corpus() {
        if !args.all && !args.name.iter().any(|n| n == e.name) {
            continue;
        }
        let r = run_entry(&e, &default_config(&e)).map_err(|err| format!("{}: {err}", e.name))?;
        let status = if r.pass() { "ok" } else { "MISMATCH" };
        println!(
            "{:<4} {:<10} overall={:?} expected={:?} truth={:?} {}",
            e.name,
            status,
            r.overall,
            r.expected_overall,
            r.oracle.truth,
            r.failures.join("; ")
        );
        failed |= !r.pass();
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => run_check(a),
        Command::Subdiff(a) => run_subdiff(a),
        Command::Probe(a) => run_probe(a),
        Command::Corpus(a) => run_corpus(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
