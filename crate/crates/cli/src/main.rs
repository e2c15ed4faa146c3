use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use regnull_core::asymptotics::{
    cf_scan, exact_class_term, gaussian_closure_directed, lclt_directed, operator_l_check, parse_grid_step,
    rate_directed_explicit, rate_directed_opt, rate_undirected_explicit,
};
use regnull_core::bruteoracle::{certify_identities, OracleBudget};
use regnull_core::confmodel::{sample, Graph, GraphParams, Mode};
use regnull_core::exactcount::{singularity_bound_from_master, ClassSignature, ExactCounter, ExactRational, SingularityBound};
use regnull_core::experiments::{mc_vs_exact, run_mc, scaling_probe, McConfig, McReport};
use regnull_core::gfcore::{kernel_count, rank_integer, rank_mod_p, FpMatrix, IntMatrix, PrimeModulus};
use regnull_core::walkdist::{build_support, walk_distribution, walk_distribution_log};
use regnull_core::Error;

#[derive(Parser)]
#[command(name = "regnull", version, about = "Null vectors of adjacency matrices of random regular multigraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone, Copy)]
struct Workers {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "REGNULL_WORKERS")]
    workers: Option<usize>,
}

impl Workers {
    fn get(self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample one graph from the configuration model.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value = "directed")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank of a graph or integer matrix, over F_p or the integers.
    Rank {
        /// JSON file holding a graph or an array of integer rows; `-` reads stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_prime)]
        p: Option<PrimeModulus>,
    },
    /// Number of graphs annihilating one vector of a class.
    ExactCount {
        #[arg(long)]
        d: u32,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        /// Symbol counts `n_0,…,n_{p−1}`.
        #[arg(long, value_delimiter = ',', required = true)]
        class: Vec<u32>,
        #[arg(long, default_value = "directed")]
        mode: Mode,
    },
    /// Expected number of nonzero null vectors, as an exact rational.
    MasterSum {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        d: u32,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        #[arg(long, default_value = "directed")]
        mode: Mode,
    },
    /// Compare exact counts with exhaustive enumeration.
    OracleCheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        #[arg(long, default_value = "directed")]
        mode: Mode,
        /// Raise the point budget for the enumeration.
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Large-deviation rate of a class.
    Rate {
        #[arg(long, default_value = "directed")]
        mode: Mode,
        #[arg(long)]
        d: u32,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        /// Directed: the frequency vector, comma separated.
        #[arg(long, value_delimiter = ',')]
        frak_n: Vec<f64>,
        /// Undirected: the pair-frequency matrix, rows separated by `;`.
        #[arg(long)]
        frak_m: Option<String>,
        /// Only evaluate the explicit bound.
        #[arg(long)]
        explicit: bool,
    },
    /// Scan |φ_{X−μ}| on a torus grid outside the domains around its lines of modulus one.
    CfScan {
        #[arg(long)]
        d: u32,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Grid step: `2pi/K` or a float dividing 2π.
        #[arg(long, default_value = "2pi/64")]
        step: String,
        #[command(flatten)]
        workers: Workers,
    },
    /// Gaussian approximation of a class term, or of the balanced total with `--closure`.
    Lclt {
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        d: u32,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        #[arg(long, value_delimiter = ',')]
        class: Vec<u32>,
        /// Also compute the exact value.
        #[arg(long)]
        exact: bool,
        /// Sum over the balanced region with this radius constant.
        #[arg(long)]
        closure: Option<f64>,
    },
    /// Monte Carlo singularity frequency; integer rank when `--p` is absent.
    Mc {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, value_parser = parse_prime)]
        p: Option<PrimeModulus>,
        #[arg(long, default_value = "directed")]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        workers: Workers,
        /// Include wall-clock time (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Integer singularity frequency across sizes with a log-log slope.
    Scaling {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        workers: Workers,
    },
    /// Monte Carlo mean of the null-vector count against the exact master sum.
    McVsExact {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        #[arg(long, default_value = "directed")]
        mode: Mode,
        #[arg(long, default_value_t = 10000)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        workers: Workers,
    },
    /// Endpoint counts of the n-step walk.
    Walk {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        d: u32,
        #[arg(long, value_parser = parse_prime)]
        p: PrimeModulus,
        /// Natural logarithms of the counts instead of exact integers.
        #[arg(long)]
        log: bool,
    },
    /// Eigen-families of the quadratic operator L on symmetric zero-sum matrices.
    OperatorCheck {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        d: f64,
    },
}

fn parse_prime(s: &str) -> Result<PrimeModulus, String> {
    let v: u64 = s.parse().map_err(|e| format!("{e}"))?;
    PrimeModulus::new(v).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Budget(String),
    Check(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Budget { .. } => Failure::Budget(e.to_string()),
            Error::Certification(_) => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Check(_) | Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Budget(m) | Failure::Check(m) | Failure::Io(m) => m,
        }
    }
}

type Out = Result<String, Failure>;

fn json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Io(e.to_string()))
}

/// Resolves a seed, printing a generated one so the run can be repeated.
fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        let s = regnull_core::confmodel::derive_seed(nanos, std::process::id() as u64);
        eprintln!("seed: {s}");
        s
    })
}

fn csv_only_for(format: Format, allowed: bool) -> Result<(), Failure> {
    if format == Format::Csv && !allowed {
        return Err(Failure::Usage("--format csv is only available for mc and scaling".into()));
    }
    Ok(())
}

fn read_input(path: &PathBuf) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| Failure::Io(e.to_string()))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Serialize)]
struct RankOut {
    rows: usize,
    cols: usize,
    p: Option<PrimeModulus>,
    rank: usize,
    singular: bool,
    /// `p^{corank} − 1` as a decimal string, square matrices over F_p only.
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_count: Option<String>,
}

#[derive(Serialize)]
struct CountOut {
    class: Vec<u32>,
    d: u32,
    p: PrimeModulus,
    mode: Mode,
    count: String,
    class_size: String,
    model_size: String,
}

#[derive(Serialize)]
struct MasterOut {
    #[serde(flatten)]
    value: ExactRational,
    n: u32,
    d: u32,
    p: PrimeModulus,
    mode: Mode,
    singularity_bound: SingularityBound,
}

#[derive(Serialize)]
struct UndirectedRateOut {
    d: u32,
    p: PrimeModulus,
    value: f64,
}

#[derive(Serialize)]
struct LcltOut {
    class: Vec<u32>,
    n: u32,
    d: u32,
    p: PrimeModulus,
    value: f64,
    applicable: bool,
    gcd_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
}

#[derive(Serialize)]
struct McOut<'a> {
    #[serde(flatten)]
    report: &'a McReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_seconds: Option<f64>,
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, Failure> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Failure::Usage(format!("bad entry {x:?}: {e}"))))
                .collect()
        })
        .collect()
}

fn run(cli: &Cli) -> Out {
    use Command::*;
    let csv = matches!(cli.command, Mc { .. } | Scaling { .. });
    csv_only_for(cli.format, csv)?;
    match &cli.command {
        Sample { n, d, mode, seed } => {
            let params = GraphParams::new(*n, *d, *mode)?;
            json(&sample(params, seed_or_fresh(*seed)))
        }
        Rank { input, p } => {
            let text = read_input(input)?;
            let m: IntMatrix = match serde_json::from_str::<Graph>(&text) {
                Ok(g) => g.to_int_matrix(),
                Err(_) => serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("input is neither a graph nor a matrix: {e}")))?,
            };
            let (rows, cols) = (m.rows(), m.cols());
            let (rank, kernel) = match p {
                Some(p) => {
                    let f = FpMatrix::reduce(&m, *p);
                    let k = (rows == cols).then(|| kernel_count(&f).map(|k| k.to_string())).transpose()?;
                    (rank_mod_p(&f), k)
                }
                None => (rank_integer(&m), None),
            };
            json(&RankOut {
                rows,
                cols,
                p: *p,
                rank,
                singular: rank < rows.min(cols) || rows != cols,
                kernel_count: kernel,
            })
        }
        ExactCount { d, p, class, mode } => {
            let sig = ClassSignature::new(class.clone(), *p)?;
            let counter = ExactCounter::new(sig.n(), *d, *p);
            let count = counter.count(&sig, *mode)?;
            json(&CountOut {
                class: class.clone(),
                d: *d,
                p: *p,
                mode: *mode,
                count: count.to_string(),
                class_size: sig.class_size().to_string(),
                model_size: counter.model_size(sig.n(), *mode).to_string(),
            })
        }
        MasterSum { n, d, p, mode } => {
            let counter = ExactCounter::new(*n, *d, *p);
            let value = counter.master_sum(*n, *mode)?;
            let singularity_bound = singularity_bound_from_master(&value, *p);
            json(&MasterOut {
                value,
                n: *n,
                d: *d,
                p: *p,
                mode: *mode,
                singularity_bound,
            })
        }
        OracleCheck { n, d, p, mode, max_points } => {
            let mut budget = OracleBudget::default();
            if let Some(m) = max_points {
                budget.max_points_directed = *m;
                budget.max_points_undirected = *m;
            }
            let report = certify_identities(*n, *d, *p, *mode, budget)?;
            let text = json(&report)?;
            if report.pass {
                Ok(text)
            } else {
                emit(cli, &text)?;
                Err(Failure::Check("exact counts disagree with enumeration".into()))
            }
        }
        Rate { mode, d, p, frak_n, frak_m, explicit } => match mode {
            Mode::Directed => {
                if frak_m.is_some() {
                    return Err(Failure::Usage("--frak-m applies to undirected mode".into()));
                }
                if *explicit {
                    let v = rate_directed_explicit(frak_n, *d, *p)?;
                    json(&UndirectedRateOut { d: *d, p: *p, value: v })
                } else {
                    json(&rate_directed_opt(frak_n, *d, *p)?)
                }
            }
            Mode::Undirected => {
                let m = frak_m
                    .as_deref()
                    .ok_or_else(|| Failure::Usage("undirected rate needs --frak-m".into()))?;
                let v = rate_undirected_explicit(&parse_matrix(m)?, *d, *p)?;
                json(&UndirectedRateOut { d: *d, p: *p, value: v })
            }
        },
        CfScan { d, p, delta, step, workers } => {
            let k = parse_grid_step(step)?;
            json(&cf_scan(*d, *p, *delta, k, workers.get())?)
        }
        Lclt { n, d, p, class, exact, closure } => {
            if let Some(b) = closure {
                let n = n.ok_or_else(|| Failure::Usage("--closure needs --n".into()))?;
                return json(&gaussian_closure_directed(n, *d, *p, *b, *exact)?);
            }
            if class.is_empty() {
                return Err(Failure::Usage("lclt needs --class or --closure".into()));
            }
            let sig = ClassSignature::new(class.clone(), *p)?;
            if let Some(n) = n {
                if *n != sig.n() {
                    return Err(Failure::Usage(format!("class sums to {}, not --n {n}", sig.n())));
                }
            }
            let r = lclt_directed(&sig, *d, *p);
            let exact = if *exact {
                Some(exact_class_term(&ExactCounter::new(sig.n(), *d, *p), &sig)?)
            } else {
                None
            };
            json(&LcltOut {
                class: class.clone(),
                n: sig.n(),
                d: *d,
                p: *p,
                value: r.value,
                applicable: r.applicable,
                gcd_ok: r.gcd_ok,
                exact,
            })
        }
        Mc { n, d, p, mode, trials, seed, workers, timing } => {
            let cfg = McConfig {
                params: GraphParams::new(*n, *d, *mode)?,
                p: *p,
                trials: *trials,
                seed: seed_or_fresh(*seed),
                workers: workers.get(),
            };
            let r = run_mc(&cfg)?;
            match cli.format {
                Format::Csv => Ok(format!("{}\n{}\n", McReport::CSV_HEADER, r.csv_row())),
                Format::Json => json(&McOut {
                    report: &r,
                    wall_seconds: timing.then(|| r.wall_seconds()),
                }),
            }
        }
        Scaling { d, n_list, trials, seed, workers } => {
            let r = scaling_probe(*d, n_list, *trials, seed_or_fresh(*seed), workers.get())?;
            match cli.format {
                Format::Csv => {
                    let mut s = String::from("n,trials,singular,estimate,ci_lo,ci_hi,dup_rate\n");
                    for row in &r.rows {
                        s += &format!(
                            "{},{},{},{},{},{},{}\n",
                            row.n, row.trials, row.singular, row.estimate, row.wilson_ci_95.0, row.wilson_ci_95.1, row.duplicate_row_rate
                        );
                    }
                    Ok(s)
                }
                Format::Json => json(&r),
            }
        }
        McVsExact { n, d, p, mode, trials, seed, workers } => {
            json(&mc_vs_exact(*n, *d, *p, *mode, *trials, seed_or_fresh(*seed), workers.get())?)
        }
        Walk { n, d, p, log } => {
            let s = build_support(*d, *p);
            if *log {
                json(&walk_distribution_log(&s, *n))
            } else {
                json(&walk_distribution(&s, *n))
            }
        }
        OperatorCheck { p, n, d } => json(&operator_l_check(*p, *n, *d)?),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|text| emit(&cli, &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
