use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use det_lsh::bench::{run_benchmark, BenchConfig};
use det_lsh::ground_truth::brute_force_knn;
use det_lsh::persist::{load_index, save_index};
use det_lsh::synthetic::holdout;
use det_lsh::vecs::{read_dataset, write_ivecs};
use det_lsh_core::{derive_params, Dataset, DetIndex, LshParams, QueryOptions};

#[derive(Parser)]
#[command(name = "det-lsh", version, about = "Approximate nearest-neighbor search with LSH and dynamic encoding trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameters derived from K, c and L.
    Params {
        #[arg(long = "K", default_value_t = 16)]
        hashes: usize,
        #[arg(long, default_value_t = 1.5)]
        c: f64,
        #[arg(long = "L", default_value_t = 4)]
        trees: usize,
    },
    /// Build an index over a dataset and save it.
    Build(BuildArgs),
    /// Compute exact k-nearest neighbors and write them as ivecs.
    Gt {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer queries with a saved index; prints query_id,rank,position,distance.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        k: usize,
        /// Starting radius, replacing the one stored in the index.
        #[arg(long)]
        rmin: Option<f64>,
        /// Candidate fraction, replacing the one stored in the index.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run a benchmark described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Also write the CSV report here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Dataset (.fvecs or .bvecs).
    #[arg(long)]
    dataset: PathBuf,
    /// Query vectors; omit when using --holdout.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Remove this many random dataset points and use them as queries.
    #[arg(long, conflicts_with = "queries")]
    holdout: Option<usize>,
    /// Seed for --holdout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl InputArgs {
    fn load(&self) -> Result<(Dataset, Dataset)> {
        let data = read_dataset(&self.dataset)?;
        match (&self.queries, self.holdout) {
            (Some(q), None) => Ok((data, read_dataset(q)?)),
            (None, Some(count)) => Ok(holdout(&data, count, self.seed)?),
            _ => bail!("give either --queries or --holdout"),
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "K", default_value_t = 16)]
    hashes: usize,
    #[arg(long = "L", default_value_t = 4)]
    trees: usize,
    #[arg(long, default_value_t = 1.5)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 256)]
    regions: usize,
    #[arg(long, default_value_t = 128)]
    leaf: usize,
    #[arg(long, default_value_t = 0.1)]
    sample: f64,
    #[arg(long, default_value_t = 0x5EED)]
    seed: u64,
    /// Result count the starting radius is tuned for.
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Fixed starting radius instead of estimating one.
    #[arg(long)]
    rmin: Option<f64>,
    /// Index PAA summaries in a single tree instead of LSH projections.
    #[arg(long)]
    det_only: bool,
    /// Index the dataset minus this many held-out points (matching `query --holdout`).
    #[arg(long)]
    holdout: Option<usize>,
    #[arg(long, default_value_t = 0)]
    holdout_seed: u64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Params { hashes, c, trees } => {
            let p = derive_params(hashes, c, trees)?;
            println!("alpha1  = {:.10}", p.alpha1);
            println!("alpha2  = {:.10}", p.alpha2);
            println!("epsilon = {:.10}", p.epsilon);
            println!("beta    = {:.10}", p.beta);
        }
        Command::Build(args) => build(args)?,
        Command::Gt { input, k, out } => {
            let (data, queries) = input.load()?;
            let gt = brute_force_knn(&data, &queries, k)?;
            write_ivecs(&out, k, &gt.positions_as_i32())?;
            eprintln!("wrote {} rows of {k} neighbors to {}", queries.len(), out.display());
        }
        Command::Query { index, input, k, rmin, beta } => {
            let (data, queries) = input.load()?;
            let index = load_index(&index, data).with_context(|| format!("loading {}", index.display()))?;
            let options = QueryOptions { r_min: rmin, beta };
            let mut out = BufWriter::new(io::stdout().lock());
            writeln!(out, "query_id,rank,position,distance")?;
            for (qi, q) in queries.rows().enumerate() {
                let result = index.ck_ann_with(q, k, &options)?;
                for (rank, hit) in result.hits.iter().enumerate() {
                    writeln!(out, "{qi},{rank},{},{}", hit.position, hit.distance)?;
                }
            }
            out.flush()?;
        }
        Command::Bench { config, csv } => {
            let config = BenchConfig::from_file(&config)?;
            let report = run_benchmark(&config)?;
            print!("{}", report.to_table());
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
                if !report.sweep.is_empty() {
                    let sweep = path.with_extension("sweep.csv");
                    std::fs::write(&sweep, report.sweep_csv())
                        .with_context(|| format!("writing {}", sweep.display()))?;
                }
            }
        }
    }
    Ok(())
}

fn build(args: BuildArgs) -> Result<()> {
    let mut data = read_dataset(&args.dataset)?;
    if let Some(count) = args.holdout {
        data = holdout(&data, count, args.holdout_seed)?.0;
    }
    let mut params = LshParams::derived(args.hashes, args.trees, args.c)?;
    params.beta = args.beta;
    params.n_regions = args.regions;
    params.leaf_capacity = args.leaf;
    params.sample_fraction = args.sample;
    params.seed = args.seed;
    params.k = args.k.min(data.len());
    params.r_min = args.rmin;
    let start = Instant::now();
    let index = if args.det_only { DetIndex::build_det_only(data, &params)? } else { DetIndex::build(data, &params)? };
    let elapsed = start.elapsed().as_secs_f64();
    save_index(&index, &args.out)?;
    eprintln!(
        "indexed {} points (d = {}) in {elapsed:.3} s; r_min = {:.6}; wrote {}",
        index.len(),
        index.dim(),
        index.r_min(),
        args.out.display()
    );
    Ok(())
}
