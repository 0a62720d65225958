use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spinframe::job::{self, JobSpec, ReportFormat, EXIT_EVALUATION};

#[derive(Parser)]
#[command(name = "spinframe", version, about = "Spin-field submanifold verification jobs")]
struct Cli {
    /// Worker threads for point sweeps (default: all cores).
    #[arg(long, global = true, env = "SPINFRAME_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a job file and write its report.
    Run {
        job: PathBuf,
        /// Report path; overrides the job's `output.path` (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format; overrides the job's `output.format`.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Print the JSON schema of job files.
    Schema,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    ExitCode::from(dispatch(cli) as u8)
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Cmd::Schema => {
            println!(
                "{}",
                serde_json::to_string_pretty(&job::schema()).expect("schema serializes")
            );
            0
        }
        Cmd::Run { job, out, format } => {
            let spec = match JobSpec::from_file(&job) {
                Ok(spec) => spec,
                Err(e) => {
                    eprintln!("spinframe: {e}");
                    return e.exit_code();
                }
            };
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = cli.threads {
                pool = pool.num_threads(n);
            }
            let pool = match pool.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("spinframe: cannot start worker threads: {e}");
                    return EXIT_EVALUATION;
                }
            };
            let report = match pool.install(|| job::run(&spec)) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("spinframe: {e}");
                    return e.exit_code();
                }
            };
            let format = format.map(Into::into).unwrap_or(spec.output.format);
            let text = report.render(format);
            match out.or(spec.output.path.clone()) {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("spinframe: cannot write {}: {e}", path.display());
                        return EXIT_EVALUATION;
                    }
                }
                None => print!("{text}"),
            }
            if !report.passed {
                eprintln!(
                    "spinframe: {} of {} points outside tolerance",
                    report.summary.counts.failed, report.summary.counts.points
                );
            }
            report.exit_code()
        }
    }
}
