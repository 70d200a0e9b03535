//! `aolb`: solve MPE instances, collect training samples, fit complexity
//! models and run parallelization frontiers.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! input error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use aolb_core::executor::{default_solver, execute, speedup_curve, write_report_csv, write_runtime_plot, write_speedup_plot};
use aolb_core::features::{read_samples, write_samples};
use aolb_core::frontier::{
    build_frontier, fixed_depth_frontier, label_samples, write_manifest, Estimator, Frontier, FrontierOptions,
    NodeCountOracle, UniformEstimator,
};
use aolb_core::generate::{imbalanced_model, random_model, ImbalancedSpec, RandomSpec};
use aolb_core::regression::cv::{alpha_grid, cost_of_omission, cross_validate, CvOptions, Grouping};
use aolb_core::regression::{fit, Dataset, Expansion, Method, RegressionModel};
use aolb_core::search::{solve, SearchConfig};
use aolb_core::{parse_uai, write_uai, FeatureVector, Problem, ProblemOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "aolb", version, about = "AND/OR branch and bound with learned load balancing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model in UAI format.
    model: PathBuf,
    /// Mini-bucket i-bound.
    #[arg(long, default_value_t = 4)]
    ibound: usize,
    /// Seed for ordering ties, probes and sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model sequentially.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_caching: bool,
        #[arg(long)]
        no_pruning: bool,
    },
    /// Label frontier subproblems with features and ln N.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// Condition every variable above this pseudo tree depth.
        #[arg(long, conflicts_with = "count", required_unless_present = "count")]
        depth: Option<usize>,
        /// Grow a breadth-first frontier to at least this many entries.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 500)]
        max_per_instance: usize,
        /// Instance name; defaults to the model file stem.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long, default_value = "")]
        class: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a complexity model with cross-validated regularization.
    Train {
        /// Sample CSV files.
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[arg(long, default_value = "lasso")]
        method: Method,
        /// Fold grouping: row, instance or class.
        #[arg(long, default_value = "row")]
        cv_level: Grouping,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value = "linear")]
        expansion: Expansion,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a frontier and solve it on a worker pool.
    Parallelize {
        #[command(flatten)]
        model: ModelArgs,
        /// Trained complexity model; selects the regression policy.
        #[arg(long, conflicts_with = "policy")]
        estimator: Option<PathBuf>,
        /// `fixed:D`, `uniform` or `oracle` when no estimator is given.
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// Frontier size for the growing policies.
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Machine counts for the simulated speedup curve.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
        cpus: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the terms of a trained model by cost of omission.
    Coo {
        /// Trained model JSON.
        estimator: PathBuf,
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a seeded random model.
    Generate {
        #[arg(long, value_enum, default_value_t = Kind::Imbalanced)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    Imbalanced,
}

/// Input problems exit with 2, everything else with 1.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

trait InputContext<T> {
    fn input(self, what: &dyn Fn() -> String) -> Result<T, Failure>;
    fn runtime(self, what: &str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self, what: &dyn Fn() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into().context(what())))
    }

    fn runtime(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into().context(what.to_string())))
    }
}

fn load_problem(args: &ModelArgs) -> Result<Problem, Failure> {
    let path = &args.model;
    let text = fs::read_to_string(path).input(&|| format!("reading {}", path.display()))?;
    let model = parse_uai(&text).input(&|| format!("parsing {}", path.display()))?;
    Problem::build(
        model,
        ProblemOptions {
            i_bound: args.ibound,
            seed: args.seed,
            ..Default::default()
        },
    )
    .input(&|| "compiling the heuristic".into())
}

fn load_samples(paths: &[PathBuf]) -> Result<Vec<FeatureVector>, Failure> {
    let mut all = Vec::new();
    for path in paths {
        let file = File::open(path).input(&|| format!("opening {}", path.display()))?;
        all.extend(read_samples(BufReader::new(file)).input(&|| format!("reading {}", path.display()))?);
    }
    Ok(all)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .runtime(&format!("creating {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve {
            model,
            no_caching,
            no_pruning,
        } => {
            let p = load_problem(&model)?;
            let cfg = SearchConfig {
                caching: !no_caching,
                pruning: !no_pruning,
                seed: model.seed,
                cap: None,
            };
            let r = solve(&p, &p.root_handle(), cfg);
            let bound = p.heuristic.global_bound();
            println!("optimum_log {}", r.optimum);
            println!("optimum {}", r.optimum.exp());
            println!("nodes {}", r.expansions);
            println!("bound_log {bound}");
            println!("gap_log {}", bound - r.optimum);
            println!("induced_width {}", p.tree.max_width());
            println!("seconds {:.6}", r.elapsed);
        }
        Command::Sample {
            model,
            depth,
            count,
            max_per_instance,
            instance,
            class,
            out,
        } => {
            let p = load_problem(&model)?;
            let opts = FrontierOptions {
                seed: model.seed,
                features: true,
                instance: instance.unwrap_or_else(|| stem(&model.model)),
                class,
            };
            let f = match (depth, count) {
                (Some(d), _) => fixed_depth_frontier(&p, d, &UniformEstimator, &opts),
                (None, Some(n)) => build_frontier(&p, &UniformEstimator, n, &opts),
                (None, None) => unreachable!("clap requires one of --depth and --count"),
            }
            .runtime("building the frontier")?;
            let samples = label_samples(&p, &f, max_per_instance, model.seed);
            write_samples(create(&out)?, &samples).runtime("writing samples")?;
            println!("frontier {} sampled {}", f.len(), samples.len());
        }
        Command::Train {
            samples,
            method,
            cv_level,
            k,
            expansion,
            seed,
            out,
        } => {
            let rows = load_samples(&samples)?;
            let data = Dataset::from_samples(&rows).input(&|| "assembling the dataset".into())?;
            let grid = alpha_grid(&data, expansion).input(&|| "building the alpha grid".into())?;
            let opts = CvOptions {
                k,
                grouping: cv_level,
                method,
                expansion,
                seed,
            };
            let cv = cross_validate(&data, &opts, &grid).input(&|| "cross-validation".into())?;
            println!("{:>4} {:>12} {:>12} {:>8}", "fold", "mse_test", "mse_train", "pcc");
            for (i, f) in cv.folds.iter().enumerate() {
                println!(
                    "{:>4} {:>12.6} {:>12.6} {:>8}",
                    i,
                    f.mse_test,
                    f.mse_train.unwrap_or(f64::NAN),
                    f.pcc.map_or("n/a".into(), |r| format!("{r:.4}"))
                );
            }
            println!("alpha {}", cv.alpha);
            println!("mean_mse_test {:.6}", cv.mean_mse_test());
            println!("mean_mse_train {:.6}", cv.mean_mse_train());
            match cv.pooled.pcc {
                Some(r) => println!("pcc {r:.4}"),
                None => println!("pcc n/a"),
            }
            let model = fit(&data, method, cv.alpha, expansion).runtime("fitting")?;
            model.save(&out).runtime("saving the model")?;
            println!("nonzero {}", model.nonzero().len());
        }
        Command::Parallelize {
            model,
            estimator,
            policy,
            count,
            workers,
            cpus,
            out,
        } => {
            if workers == 0 {
                return Err(Failure::Input(anyhow!("--workers must be at least 1")));
            }
            let p = load_problem(&model)?;
            let opts = FrontierOptions {
                seed: model.seed,
                features: false,
                instance: stem(&model.model),
                class: String::new(),
            };
            let (name, f) = match estimator {
                Some(path) => {
                    let m = RegressionModel::load(&path).input(&|| format!("loading {}", path.display()))?;
                    ("regression".to_string(), frontier_with(&p, &m, count, &opts)?)
                }
                None => {
                    let f = match policy.as_str() {
                        "uniform" => frontier_with(&p, &UniformEstimator, count, &opts)?,
                        "oracle" => frontier_with(&p, &NodeCountOracle::default(), count, &opts)?,
                        other => {
                            let d = other
                                .strip_prefix("fixed:")
                                .and_then(|d| d.parse().ok())
                                .ok_or_else(|| Failure::Input(anyhow!("unknown policy {other:?}")))?;
                            fixed_depth_frontier(&p, d, &UniformEstimator, &opts).runtime("building the frontier")?
                        }
                    };
                    (policy.clone(), f)
                }
            };
            let report = execute(&p, &f, workers, &name, &default_solver).runtime("executing")?;
            fs::create_dir_all(&out).runtime("creating the output directory")?;
            write_manifest(create(&out.join("manifest.csv"))?, &f).runtime("writing the manifest")?;
            write_report_csv(create(&out.join("report.csv"))?, &report).runtime("writing the report")?;
            write_runtime_plot(create(&out.join("runtimes.dat"))?, &report).runtime("writing runtimes")?;
            let curve = speedup_curve(&report, &cpus);
            write_speedup_plot(create(&out.join("speedup.dat"))?, &curve).runtime("writing speedups")?;
            println!("policy {name}");
            println!("entries {}", f.len());
            println!("total_nodes {}", report.total_nodes);
            println!("wall_clock {:.6}", report.wall_clock);
            if report.aborted {
                return Err(Failure::Runtime(anyhow!("entries {:?} failed twice", report.failed)));
            }
            println!("optimum_log {}", report.optimum.unwrap_or(f64::NAN));
        }
        Command::Coo { estimator, samples, seed } => {
            let model = RegressionModel::load(&estimator).input(&|| format!("loading {}", estimator.display()))?;
            let rows = load_samples(&samples)?;
            let data = Dataset::from_samples(&rows).input(&|| "assembling the dataset".into())?;
            let scores = cost_of_omission(&data, &model, seed).input(&|| "cost of omission".into())?;
            let mut stdout = std::io::stdout().lock();
            for (term, s) in scores {
                writeln!(stdout, "{term}\t{s:.3}").runtime("writing")?;
            }
        }
        Command::Generate { kind, seed, out } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = match kind {
                Kind::Random => random_model(&mut rng, &RandomSpec::default()),
                Kind::Imbalanced => imbalanced_model(&mut rng, &ImbalancedSpec::default()),
            };
            fs::write(&out, write_uai(&m)).runtime("writing the model")?;
        }
    }
    Ok(())
}

fn frontier_with(p: &Problem, est: &dyn Estimator, count: usize, opts: &FrontierOptions) -> Result<Frontier, Failure> {
    build_frontier(p, est, count, opts).runtime("building the frontier")
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn arguments_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn stem_of_path() {
        assert_eq!(stem(Path::new("/a/b/grid10.uai")), "grid10");
    }
}
