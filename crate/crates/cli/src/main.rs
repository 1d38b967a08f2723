//! Command-line driver: construct unitals, verify external designs, run the
//! full classicality certification, and re-emit stored certificates.
//!
//! Exit codes: 0 all checks passed, 1 a verification stage failed, 2 bad
//! input or unsupported parameters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use unitals_core::certificate::{CertificateBundle, Status};
use unitals_core::pipeline::{self, Mode, PipelineConfig};
use unitals_core::unital::Unital;

#[derive(Parser)]
#[command(name = "unitals", version, about = "Unital constructions and classicality certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Sampled,
}

#[derive(Args)]
struct CommonOpts {
    /// Verification mode; exhaustive is the default for orders up to 4.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Seed for all sampled sub-checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for generated files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the classical unital of the given even order and write its
    /// JSON plus the ambient coordinate tables.
    Build {
        #[arg(long)]
        order: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run selected verification stages on a stored design.
    Verify {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated stage names; all stages when omitted.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the full pipeline and emit the classicality certificate.
    CertifyClassical {
        /// Order of the built-in classical unital to certify.
        #[arg(long, conflicts_with = "input")]
        order: Option<usize>,
        /// A stored design to certify instead.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Base line id, or "auto" for the least id.
        #[arg(long, default_value = "auto")]
        line: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Validate a stored certificate and re-emit it as text or JSON.
    ExportCertificate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_unital(path: &Path) -> Result<Unital, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Unital::from_json(&value).map_err(|e| e.to_string())
}

fn config_for(
    u_order: usize,
    line: Option<&str>,
    common: &CommonOpts,
) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::default_for_order(u_order);
    if let Some(mode) = common.mode {
        cfg.mode = match mode {
            ModeArg::Exhaustive => Mode::Exhaustive,
            ModeArg::Sampled => Mode::Sampled,
        };
    }
    cfg.seed = common.seed;
    if let Some(line) = line {
        if line != "auto" {
            let id: u32 = line.parse().map_err(|_| format!("bad line id {line}"))?;
            cfg.line = Some(id);
        }
    }
    Ok(cfg)
}

fn emit_bundle(bundle: &CertificateBundle, out: &Path, stem: &str) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let cert_path = out.join(format!("certificate-{stem}.json"));
    let report_path = out.join(format!("report-{stem}.txt"));
    std::fs::write(
        &cert_path,
        serde_json::to_string_pretty(bundle).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(&report_path, bundle.report_text()).map_err(|e| e.to_string())?;
    print!("{}", bundle.report_text());
    for s in &bundle.stages {
        eprintln!("  {:<24} {:>8} ms", s.statement, s.runtime_ms);
    }
    eprintln!("wrote {} and {}", cert_path.display(), report_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Build { order, out } => {
            let (unital_json, tables) =
                pipeline::build_artifacts(order).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let upath = out.join(format!("unital-{order}.json"));
            let tpath = out.join(format!("pg-tables-{order}.json"));
            std::fs::write(&upath, serde_json::to_string(&unital_json).unwrap())
                .map_err(|e| e.to_string())?;
            std::fs::write(&tpath, serde_json::to_string(&tables).unwrap())
                .map_err(|e| e.to_string())?;
            println!(
                "wrote {} ({} points, {} lines) and {}",
                upath.display(),
                unital_json["v"],
                unital_json["blocks"].as_array().unwrap().len(),
                tpath.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            input,
            checks,
            common,
        } => {
            for c in &checks {
                if !pipeline::VERIFY_STAGES.contains(&c.as_str()) {
                    return Err(format!(
                        "unknown check {c}; available: {}",
                        pipeline::VERIFY_STAGES.join(", ")
                    ));
                }
            }
            let u = load_unital(&input)?;
            let cfg = config_for(u.order, None, &common)?;
            let bundle = pipeline::run_verify(&u, &checks, &cfg);
            emit_bundle(&bundle, &common.out, &format!("verify-{}", u.order))?;
            Ok(if bundle.verdict == Status::Pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::CertifyClassical {
            order,
            input,
            line,
            common,
        } => {
            let u = match (order, input) {
                (Some(order), None) => {
                    let (unital_json, _) =
                        pipeline::build_artifacts(order).map_err(|e| e.to_string())?;
                    Unital::from_json(&unital_json).map_err(|e| e.to_string())?
                }
                (None, Some(path)) => load_unital(&path)?,
                _ => return Err("pass exactly one of --order or --input".into()),
            };
            let cfg = config_for(u.order, Some(&line), &common)?;
            let bundle = pipeline::certify_classical(&u, &cfg);
            emit_bundle(&bundle, &common.out, &u.order.to_string())?;
            Ok(if bundle.verdict == Status::Pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::ExportCertificate { input, format, out } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| format!("{}: {e}", input.display()))?;
            let bundle: CertificateBundle =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", input.display()))?;
            // recompute the digest to detect tampering
            let recomputed = CertificateBundle::new(
                bundle.order,
                &bundle.mode,
                bundle.seed,
                bundle.input_digest.clone(),
                bundle.stages.clone(),
            );
            if recomputed.digest != bundle.digest {
                eprintln!("digest mismatch: certificate was modified");
                return Ok(ExitCode::from(1));
            }
            let rendered = match format.as_str() {
                "text" => bundle.report_text(),
                "json" => serde_json::to_string_pretty(&bundle).unwrap(),
                other => return Err(format!("unknown format {other}")),
            };
            match out {
                Some(path) => std::fs::write(&path, rendered).map_err(|e| e.to_string())?,
                None => print!("{rendered}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
