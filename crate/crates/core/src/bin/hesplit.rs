use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hesplit::backend::BackendKind;
use hesplit::ckks::CryptoParams;
use hesplit::config::{Config, Overrides};
use hesplit::data::Dataset;
use hesplit::estimator::{self, EstimateRequest};
use hesplit::nn::checkpoint;
use hesplit::protocol::monolith::train_monolith;
use hesplit::protocol::{self, Channel, ServerData, TcpTransport};
use hesplit::runlog::{default_run_path, RunDir};
use hesplit::{Error, Result};

#[derive(Parser)]
#[command(name = "hesplit", version, about = "Split learning with encrypted server layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the protocol, as one role or both (--local).
    Train(TrainArgs),
    /// Shorthand for `train --role server`.
    Server(TrainArgs),
    /// Shorthand for `train --role client`.
    Client(TrainArgs),
    /// Plaintext training of the whole network with the same seeds.
    Baseline(CommonArgs),
    /// Predict per-split cost and recommend a split point.
    Estimate(EstimateArgs),
    /// Microbenchmark the primitives and cache the profile.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Server,
    Client,
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; defaults to `runs/<role>-<unix time>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    role: Option<Role>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    connect: Option<String>,
    /// Run both roles in this process over an in-memory pipe.
    #[arg(long)]
    local: bool,
    /// Print the estimate for this configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Profile cache directory.
    #[arg(long, default_value = "profiles")]
    profiles: PathBuf,
    /// Use this many seconds for every operation instead of benchmarking.
    #[arg(long)]
    uniform_op_seconds: Option<f64>,
}

#[derive(Args, Clone)]
struct BenchArgs {
    /// Take the parameter set from this config; Set 2 otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "profiles")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Server(a) => train(TrainArgs { role: Some(Role::Server), ..a }),
        Command::Client(a) => train(TrainArgs { role: Some(Role::Client), ..a }),
        Command::Baseline(a) => baseline(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(a: &CommonArgs) -> Result<Config> {
    set_threads(a.threads)?;
    let mut cfg = Config::load(&a.config)?;
    Overrides { backend: a.backend, batch_size: a.batch_size, epochs: a.epochs, seed: a.seed }.apply(&mut cfg)?;
    Ok(cfg)
}

fn run_dir(a: &CommonArgs, cfg: &Config, role: &str) -> Result<RunDir> {
    let path = a.out_dir.clone().unwrap_or_else(|| default_run_path(Path::new("runs"), role));
    RunDir::create(&path, cfg, role)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    if a.dry_run {
        let data_len = cfg.estimator.samples.map_or_else(|| cfg.load_dataset().map(|d| d.len()), Ok)?;
        let params = cfg.crypto.params()?;
        let profile = estimator::load_or_bench(Path::new("profiles"), cfg.crypto.backend, &params, cfg.estimator.bench_reps)?;
        let report = estimator::estimate_epoch(&EstimateRequest::from_config(&cfg, data_len)?, &profile)?;
        print!("{}", report.to_table());
        return Ok(());
    }
    let data = cfg.load_dataset()?;
    let session = cfg.protocol.session_id;
    match (a.local, a.role) {
        (true, _) => {
            let mut dir = run_dir(&a.common, &cfg, "local")?;
            let r = protocol::run_local(&cfg, &data)?;
            for e in &r.server.epochs {
                dir.append(e)?;
                print_epoch(e.epoch, e.loss, e.accuracy, e.wall_seconds, e.rotations);
            }
            finish_client(&dir, &cfg, &r.client)?;
            dir.write_json("summary.json", &summary(&r.server.epochs, &r.client))?;
        }
        (false, Some(Role::Server)) => {
            let addr = a.listen.as_deref().unwrap_or("127.0.0.1:7878");
            let mut dir = run_dir(&a.common, &cfg, "server")?;
            let listener = TcpListener::bind(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            eprintln!("client connected from {peer}");
            let ch = Channel::new(Box::new(TcpTransport::new(stream)?), session);
            let server_data = ServerData {
                samples: data.len(),
                features: (!cfg.protocol.encrypt_data).then(|| data.features.clone()),
            };
            let report = protocol::run_server(&cfg, &server_data, ch)?;
            for e in &report.epochs {
                dir.append(e)?;
                print_epoch(e.epoch, e.loss, e.accuracy, e.wall_seconds, e.rotations);
            }
            dir.write_json("summary.json", &json!({ "epochs": report.epochs, "final_levels": report.final_levels }))?;
        }
        (false, Some(Role::Client)) => {
            let addr = a.connect.as_deref().unwrap_or("127.0.0.1:7878");
            let dir = run_dir(&a.common, &cfg, "client")?;
            let stream = connect_with_retry(addr)?;
            let ch = Channel::new(Box::new(TcpTransport::new(stream)?), session);
            let report = protocol::run_client(&cfg, &data, ch)?;
            let mut dir = dir;
            for e in &report.epochs {
                dir.append(e)?;
                print_epoch(e.epoch, e.loss, e.accuracy, 0.0, 0);
            }
            finish_client(&dir, &cfg, &report)?;
        }
        (false, None) => return Err(Error::Config("pass --role server|client or --local".into())),
    }
    Ok(())
}

fn connect_with_retry(addr: &str) -> Result<TcpStream> {
    let mut last = None;
    for _ in 0..50 {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                last = Some(e);
                thread::sleep(Duration::from_millis(200));
            }
        }
    }
    Err(last.expect("at least one attempt").into())
}

fn print_epoch(epoch: usize, loss: f64, accuracy: f64, seconds: f64, rotations: usize) {
    println!("epoch {epoch:>3}  loss {loss:.6}  accuracy {accuracy:.4}  time {seconds:.2}s  rotations {rotations}");
}

fn finish_client(dir: &RunDir, cfg: &Config, report: &protocol::ClientReport) -> Result<()> {
    checkpoint::save(&dir.path().join("model.ckpt"), &cfg.digest(), &report.layers)?;
    dir.write_json("client_summary.json", &json!({ "epochs": report.epochs, "traffic": {
        "bytes_sent": report.traffic.bytes_sent,
        "bytes_received": report.traffic.bytes_received,
        "frames_sent": report.traffic.frames_sent,
        "frames_received": report.traffic.frames_received,
    }, "refreshes": report.refreshes }))
}

fn summary(epochs: &[protocol::EpochMetrics], client: &protocol::ClientReport) -> serde_json::Value {
    let last = epochs.last();
    json!({
        "epochs": epochs.len(),
        "final_loss": last.map(|e| e.loss),
        "final_accuracy": last.map(|e| e.accuracy),
        "total_seconds": epochs.iter().map(|e| e.wall_seconds).sum::<f64>(),
        "total_rotations": epochs.iter().map(|e| e.rotations).sum::<usize>(),
        "client_bytes_sent": client.traffic.bytes_sent,
        "client_bytes_received": client.traffic.bytes_received,
    })
}

fn baseline(a: &CommonArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let data: Dataset = cfg.load_dataset()?;
    let mut dir = run_dir(a, &cfg, "baseline")?;
    let run = train_monolith(&cfg, &data)?;
    for e in &run.epochs {
        dir.append(e)?;
        print_epoch(e.epoch, e.loss, e.accuracy, 0.0, 0);
    }
    checkpoint::save(&dir.path().join("model.ckpt"), &cfg.digest(), &run.layers)?;
    dir.write_json("summary.json", &json!({ "epochs": run.epochs }))
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let samples = match cfg.estimator.samples {
        Some(s) => s,
        None => cfg.load_dataset()?.len(),
    };
    let params = cfg.crypto.params()?;
    let profile = match a.uniform_op_seconds {
        Some(t) => estimator::MicrobenchProfile::uniform(&params, cfg.crypto.backend, t),
        None => estimator::load_or_bench(&a.profiles, cfg.crypto.backend, &params, cfg.estimator.bench_reps)?,
    };
    let report = estimator::estimate_epoch(&EstimateRequest::from_config(&cfg, samples)?, &profile)?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &a.common.out_dir {
        let run = RunDir::create(dir, &cfg, "estimate")?;
        run.write_json("estimate.json", &report)?;
        run.write_text("estimate.txt", &table)?;
        run.write_json("profile.json", &profile)?;
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    set_threads(a.threads)?;
    let (params, kind, reps) = match &a.config {
        Some(path) => {
            let cfg = Config::load(path)?;
            (cfg.crypto.params()?, cfg.crypto.backend, cfg.estimator.bench_reps)
        }
        None => (CryptoParams::set2(), BackendKind::Ckks, 100),
    };
    let kind = a.backend.unwrap_or(kind);
    let reps = a.reps.unwrap_or(reps);
    let backend = estimator::bench_backend(kind, &params, 1)?;
    let profile = estimator::run_microbench(&backend, reps, &mut estimator::SystemClock::default())?;
    std::fs::create_dir_all(&a.out_dir)?;
    let path = estimator::profile_path(&a.out_dir, kind, &params);
    std::fs::write(&path, serde_json::to_string_pretty(&profile)?)?;
    for (name, t) in [
        ("rotate", profile.t_rot),
        ("encode", profile.t_encode),
        ("encrypt", profile.t_encrypt),
        ("mul_plain", profile.t_mulplain),
        ("mul_ct", profile.t_mulct),
        ("mul_scalar", profile.t_mulscalar),
        ("add", profile.t_add),
        ("decrypt", profile.t_decrypt),
        ("decode", profile.t_decode),
    ] {
        println!("{name:<11} {:>12.3} us  (mad {:.3} us)", t.median * 1e6, t.mad * 1e6);
    }
    println!("mul_ct / mul_scalar = {:.2}", profile.mulct_over_mulscalar());
    println!("profile written to {}", path.display());
    Ok(())
}
