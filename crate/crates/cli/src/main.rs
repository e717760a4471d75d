//! `proxytrace`: render, partition, experiment, compare and generate.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Log filter variable, e.g. `PROXYTRACE_LOG=info`.
const LOG_ENV: &str = "PROXYTRACE_LOG";

#[derive(Parser, Debug)]
#[command(name = "proxytrace", version, about = "Distributed path tracing with proxy-guided ray forwarding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a frame with N ranks and write the image and statistics.
    Render(RenderArgs),
    /// Partition a scene and dump the plan, proxies and proxy boxes.
    Partition(PartitionArgs),
    /// Tabulate forward counts or largest-part memory.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Compare two raw accumulation dumps.
    Compare(CompareArgs),
    /// Write a generated scene as JSON plus OBJ files.
    Generate(GenerateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SetupArgs {
    /// Scene JSON file.
    pub scene: std::path::PathBuf,
    #[arg(long, default_value_t = 1)]
    pub ranks: usize,
    #[arg(long, default_value = "best")]
    pub strategy: String,
    /// Largest fraction of items `best` may replicate.
    #[arg(long)]
    pub replication_cap: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Inproc,
    Socket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Culling {
    /// Off for replay, on otherwise.
    Auto,
    On,
    Off,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[arg(long, default_value_t = 1)]
    pub spp: u32,
    #[arg(long, default_value_t = 4)]
    pub bounces: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image size as WxH.
    #[arg(long, default_value = "128x128")]
    pub size: String,
    #[arg(long, value_enum, default_value_t = Backend::Inproc)]
    pub backend: Backend,
    #[arg(long, default_value = "bitmask64")]
    pub mask: String,
    #[arg(long, value_enum, default_value_t = Culling::Auto)]
    pub culling: Culling,
    /// Image path; `.png` or `.ppm`.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Per-frame statistics CSV.
    #[arg(long)]
    pub stats: Option<std::path::PathBuf>,
    /// Raw little-endian f32 accumulation dump.
    #[arg(long)]
    pub raw: Option<std::path::PathBuf>,
    /// Socket mode: this participant; equal to --ranks for the head.
    #[arg(long)]
    pub rank_id: Option<usize>,
    /// Socket mode: addresses of ranks 0..N-1 then the head, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub connect: Vec<std::net::SocketAddr>,
    /// Socket mode: local bind address, if not this participant's entry in --connect.
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
    /// Socket mode: seconds to wait for peers and messages.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Plan JSON path; stdout if omitted.
    #[arg(long)]
    pub plan: Option<std::path::PathBuf>,
    /// Proxy set JSON path.
    #[arg(long)]
    pub proxies: Option<std::path::PathBuf>,
    /// PLY of the proxy boxes colored by owner.
    #[arg(long)]
    pub ply: Option<std::path::PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Experiment {
    /// Largest part's memory for N = 1..=nmax.
    MaxPart {
        scene: std::path::PathBuf,
        /// Comma-separated strategy names or `all`.
        #[arg(long, default_value = "all")]
        strategies: String,
        #[arg(long, default_value_t = 32)]
        nmax: usize,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Rays forwarded per view and strategy at 1 spp.
    Forwards {
        scene: std::path::PathBuf,
        #[arg(long, default_value = "all")]
        strategies: String,
        #[arg(long, default_value_t = 4)]
        ranks: usize,
        #[arg(long, default_value = "128x128")]
        size: String,
        #[arg(long, default_value_t = 4)]
        bounces: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bitmask64")]
        mask: String,
        /// `scene` for the scene camera, `island` for the three island views.
        #[arg(long, default_value = "scene")]
        views: String,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub a: std::path::PathBuf,
    pub b: std::path::PathBuf,
    /// Largest allowed per-value relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Values below this magnitude in both dumps count as equal.
    #[arg(long, default_value_t = 1e-6)]
    pub floor: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    MiniIsland,
    Stress,
    Box,
    Shadow,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: SceneKind,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: std::path::PathBuf,
    /// Scene file name without extension; defaults to the kind.
    #[arg(long)]
    pub name: Option<String>,
    /// Island ground grid resolution.
    #[arg(long)]
    pub resolution: Option<u32>,
    /// Island tree counts per species as C,D.
    #[arg(long)]
    pub trees: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave out the island's sun.
    #[arg(long)]
    pub no_sun: bool,
    /// Shadow fixture without the hut roof.
    #[arg(long)]
    pub open: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Render(a) => commands::render(&a),
        Command::Partition(a) => commands::partition(&a),
        Command::Experiment(e) => commands::experiment(&e),
        Command::Compare(a) => commands::compare(&a),
        Command::Generate(a) => commands::generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_transport() { 2 } else { 1 })
        }
    }
}
