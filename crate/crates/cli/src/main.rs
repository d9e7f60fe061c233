//! `bench`: run ingestion and query tests against a time-series database
//! and write the results to a run directory.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tsbench::controller::TestResult;
use tsbench::monitor::{serve_stats, LocalProbe};
use tsbench::{Config, Error, Mode, ParseMode, RunRecord, Runner};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Ingest,
    Query,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Ingest => Mode::Ingest,
            ModeArg::Query => Mode::Query,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bench",
    version,
    about = "Time-series database benchmark harness"
)]
struct Args {
    /// Parameter file of KEY=VALUE lines
    #[arg(long, required_unless_present = "serve_stats")]
    config: Option<PathBuf>,

    /// Routine file of SET/RUN lines, applied on top of --config
    #[arg(long)]
    routine: Option<PathBuf>,

    /// Test to run when no routine is given
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,

    /// Directory receiving one sub-directory per run
    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Keep existing data instead of cleaning the database first
    #[arg(long)]
    no_cleanup: bool,

    /// Also write every generated record to workload.csv
    #[arg(long)]
    dump_workload: bool,

    /// Take monitor samples from a remote stats endpoint (see --serve-stats)
    #[arg(long, value_name = "URL")]
    monitor_url: Option<String>,

    /// Serve local system samples over HTTP on ADDR and run no tests
    #[arg(long, value_name = "ADDR")]
    serve_stats: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Adapter(_) => 2,
        _ => 1,
    }
}

fn read(path: &PathBuf) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

fn report(run: &RunRecord) {
    let dir = run
        .dir
        .as_ref()
        .map(|d| d.display().to_string())
        .unwrap_or_default();
    println!("run {} ({}) -> {dir}", run.run_id, run.mode);
    let line = |r: &TestResult| {
        let mut s = format!(
            "  {:<6} ops={} failures={} points={} wall={:.1}ms",
            r.kind.to_string(),
            r.operations.len(),
            r.failures,
            r.total_points,
            r.wall_ms
        );
        if let Some(t) = r.throughput {
            s += &format!(" throughput={t:.1}pts/s");
        }
        for (k, st) in &r.stats {
            s += &format!(
                " [{k} mean={:.3}ms p50={:.3}ms p99={:.3}ms]",
                st.mean, st.p50, st.p99
            );
        }
        s
    };
    for r in run.results() {
        println!("{}", line(r));
    }
}

fn run(args: &Args) -> Result<Vec<RunRecord>, Error> {
    let path = args.config.as_ref().expect("clap enforces --config");
    let cfg = Config::parse(&read(path)?, ParseMode::Strict)?;
    let runner = Runner {
        out_dir: Some(args.out.clone()),
        no_cleanup: args.no_cleanup,
        dump_workload: args.dump_workload,
        remote_monitor: args.monitor_url.clone(),
        ..Runner::default()
    };
    match &args.routine {
        Some(r) => runner.run_routine(&cfg, &read(r)?),
        None => Ok(vec![runner.run(&cfg, args.mode.into())?]),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    if let Some(addr) = &args.serve_stats {
        return match serve_stats(addr, Box::new(LocalProbe::new("/proc").with_pid(None))) {
            Ok(server) => {
                log::info!("serving samples on http://{}/", server.addr());
                loop {
                    std::thread::park();
                }
            }
            Err(e) => {
                log::error!("{e}");
                ExitCode::from(1)
            }
        };
    }

    match run(&args) {
        Ok(runs) => {
            runs.iter().for_each(report);
            let failures: u64 = runs.iter().map(RunRecord::failures).sum();
            if failures > 0 {
                log::error!("{failures} operations failed");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
