use aetherflow::harness::config::{Config, Mode, PredictorKind};
use aetherflow::harness::sim::{compare_modes, run_experiment, write_comparison, write_run_outputs};
use aetherflow::harness::transport::TransportKind;
use aetherflow::wire;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "afx", about = "Wireless SDN handoff experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write intervals.csv and summary.json.
    Run {
        /// Forwarding mode: aetherflow or bridge.
        #[arg(long)]
        mode: Option<Mode>,
        /// Handoff predictor: fixed or trend.
        #[arg(long)]
        predictor: Option<PredictorKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Experiment duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Topology file; the built-in two-AP corridor when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Carry the control channel over TCP loopback instead of
        /// in-process queues.
        #[arg(long)]
        tcp: bool,
    },
    /// Run both modes over several seeds and write comparison.csv.
    Compare {
        #[arg(long, default_value_t = 5)]
        rounds: u32,
        #[arg(long, default_value_t = 1)]
        base_seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Pretty-print the protocol messages in a capture file (raw bytes, or
    /// hex if the file is text).
    Decode { file: PathBuf },
    /// Validate a topology file.
    TopoCheck { file: PathBuf },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, String> {
    match path {
        Some(p) => Config::from_path(p).map_err(|e| e.to_string()),
        None => Ok(Config::default_config()),
    }
}

fn run() -> Result<(), (u8, String)> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { mode, predictor, seed, duration, out, config, tcp } => {
            let mut cfg = load_config(&config).map_err(|e| (EXIT_CONFIG, e))?;
            if let Some(m) = mode {
                cfg.experiment.mode = m;
            }
            if let Some(p) = predictor {
                cfg.experiment.predictor = p;
            }
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(d) = duration {
                cfg.experiment.duration_s = d;
            }
            cfg.validate().map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let transport = if tcp { TransportKind::Tcp } else { TransportKind::Local };
            let res = run_experiment(&cfg, transport).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            write_run_outputs(&res, &out).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            println!(
                "mode={} seed={} handoff_duration_s={:.3} lost={}/{}",
                res.summary.mode,
                res.summary.seed,
                res.summary.handoff_duration_s,
                res.summary.lost_total,
                res.summary.sent_total
            );
            Ok(())
        }
        Command::Compare { rounds, base_seed, out, config } => {
            let cfg = load_config(&config).map_err(|e| (EXIT_CONFIG, e))?;
            if rounds == 0 {
                return Err((EXIT_CONFIG, "--rounds must be at least 1".into()));
            }
            let cmp = compare_modes(&cfg, rounds, base_seed, TransportKind::Local)
                .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            write_comparison(&cmp, &out).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            for (mode, mean) in &cmp.means {
                println!("{mode}: mean handoff duration {mean:.3} s");
            }
            for (mode, round) in &cmp.median_rounds {
                println!("{mode}: median round {round}");
            }
            Ok(())
        }
        Command::Decode { file } => {
            let raw = std::fs::read(&file).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            let bytes = parse_capture(&raw).map_err(|e| (EXIT_RUNTIME, e))?;
            let (frames, rest) =
                wire::frame_split(&bytes).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
            if !rest.is_empty() {
                return Err((EXIT_RUNTIME, format!("{} trailing bytes", rest.len())));
            }
            for f in frames {
                let msg = wire::decode(&f).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
                println!("{}", wire::dump(&msg));
            }
            Ok(())
        }
        Command::TopoCheck { file } => {
            let cfg = Config::from_path(&file).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            println!(
                "ok: {} APs, {} stations, mode {}",
                cfg.aps.len(),
                cfg.stations.len(),
                cfg.experiment.mode.as_str()
            );
            Ok(())
        }
    }
}

/// Accepts raw wire bytes, or whitespace-separated hex if the whole file is
/// printable text.
fn parse_capture(raw: &[u8]) -> Result<Vec<u8>, String> {
    if let Ok(text) = std::str::from_utf8(raw) {
        let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if !cleaned.is_empty() && cleaned.chars().all(|c| c.is_ascii_hexdigit()) {
            if !cleaned.len().is_multiple_of(2) {
                return Err("odd number of hex digits".to_string());
            }
            return (0..cleaned.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&cleaned[i..i + 2], 16).map_err(|e| e.to_string()))
                .collect();
        }
    }
    Ok(raw.to_vec())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("afx: {msg}");
            ExitCode::from(code)
        }
    }
}
