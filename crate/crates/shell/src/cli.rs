//! The `duality` command line. Exit codes: 0 success, 1 a domain error or
//! failed verification, 2 a usage error.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use duality_core::verify::Identity;
use duality_core::wheel::{EvalPoint, NodeId, Value, WheelSession};
use duality_core::Error;
use serde::Serialize;

use crate::api::{self, CreateSession, PlanRequest, Problem, VerifyRequest};
use crate::{service, wire};

#[derive(Debug, Parser)]
#[command(name = "duality", version, about = "Consumer-theory duality engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Primal,
    Dual,
}

/// The utility a command works on.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Utility expression in q1..q4, e.g. "q1^0.5*q2^0.5"
    #[arg(long)]
    pub utility: Option<String>,
    /// Named family, e.g. cobb_douglas:a1=0.3, ces:a1=0.5,rho=-1, quasilinear
    #[arg(long)]
    pub family: Option<String>,
}

impl Source {
    fn session(&self) -> Result<WheelSession, Error> {
        CreateSession {
            utility: self.utility.clone(),
            family: self.family.clone(),
        }
        .build()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a utility expression and print its canonical form
    Parse {
        text: String,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Solve the primal (utility maximization) or dual (expenditure
    /// minimization) problem
    Solve {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "primal")]
        problem: ProblemArg,
        /// Comma-separated prices
        #[arg(long, value_delimiter = ',', required = true)]
        prices: Vec<f64>,
        #[arg(long, conflicts_with = "ulevel")]
        income: Option<f64>,
        /// Target utility level for the dual problem
        #[arg(long, allow_hyphen_values = true)]
        ulevel: Option<f64>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Plan and execute a derivation between two wheel nodes
    Derive {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Evaluation point, e.g. "P=1,1;M=2" or "q=1,2;u=1"
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Check identities over seeded sample points
    #[command(group = clap::ArgGroup::new("which").required(true).args(["identity", "all"]))]
    Verify {
        #[command(flatten)]
        source: Source,
        /// Identity to check; repeat for several
        #[arg(long)]
        identity: Vec<String>,
        /// Every identity, the duality gap and both loop closures
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 25)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Overrides every per-identity tolerance
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Demonstrations
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
    /// Run the JSON service
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// Information lost when a non-convex utility goes round DUF -> MDF -> DUF
    Nonconvex {
        /// Control utility for the same procedure
        #[arg(long, default_value = "q1^0.5 * q2^0.5")]
        control: String,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

enum Failure {
    Usage(String),
    Domain(Error),
    /// Output already written; the command ran but did not succeed.
    Unsuccessful,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Unsuccessful) => 1,
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "error[{}]: {e}", e.kind());
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            2
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, format: Format, value: &T, text: impl FnOnce() -> String) -> Result<(), Failure> {
    let s = match format {
        Format::Json => wire::to_string_pretty(value),
        Format::Text => text(),
    };
    writeln!(out, "{}", s.trim_end()).map_err(|e| Failure::Usage(e.to_string()))
}

fn show(v: &Value) -> String {
    match v {
        Value::Scalar(x) => wire::fmt_num(*x),
        Value::Vector(x) => wire::fmt_vec(x),
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Parse { text, format } => {
            let r = api::parse(&text)?;
            emit(out, format, &r, || format!("{}\n{} goods", r.utility, r.n_goods))
        }
        Command::Solve {
            source,
            problem,
            prices,
            income,
            ulevel,
            format,
        } => {
            let problem = match problem {
                ProblemArg::Primal => Problem::Primal,
                ProblemArg::Dual => Problem::Dual,
            };
            match (problem, income, ulevel) {
                (Problem::Primal, Some(_), None) | (Problem::Dual, None, Some(_)) => {}
                (Problem::Primal, ..) => return Err(Failure::Usage("--problem primal needs --income".into())),
                (Problem::Dual, ..) => return Err(Failure::Usage("--problem dual needs --ulevel".into())),
            }
            let session = source.session()?;
            let r = api::solve(&session, problem, &prices, income, ulevel)?;
            emit(out, format, &r, || {
                let what = match problem {
                    Problem::Primal => "utility",
                    Problem::Dual => "expenditure",
                };
                format!(
                    "bundle = {}\n{what} = {}\nconverged = {}",
                    wire::fmt_vec(&r.bundle),
                    wire::fmt_num(r.objective_value),
                    r.converged
                )
            })
        }
        Command::Derive {
            source,
            from,
            to,
            at,
            format,
        } => {
            let point = at.as_deref().map(EvalPoint::parse_compact).transpose().map_err(usage)?;
            from.parse::<NodeId>().map_err(usage)?;
            to.parse::<NodeId>().map_err(usage)?;
            let session = source.session()?;
            let r = api::plan(&session, &PlanRequest { from, to, point })?;
            emit(out, format, &r, || {
                let mut s = String::from(r.from.as_str());
                for e in &r.edges {
                    s.push_str(&format!(" -{}-> {}", e.id, e.to));
                }
                s.push('\n');
                for step in &r.trace {
                    let v = step.value.as_ref().map_or("-".into(), show);
                    s.push_str(&format!("  {:<22} {:<5} {v}\n", step.method.name(), step.node.as_str()));
                }
                if let Some(v) = &r.value {
                    s.push_str(&format!("value = {}\n", show(v)));
                }
                if let Some(e) = &r.error {
                    s.push_str(&format!("error[{}]: {}\n", e.kind, e.message));
                }
                s
            })?;
            if r.error.is_some() {
                return Err(Failure::Unsuccessful);
            }
            Ok(())
        }
        Command::Verify {
            source,
            identity,
            all,
            samples,
            seed,
            tolerance,
            format,
        } => {
            for name in &identity {
                name.parse::<Identity>().map_err(usage)?;
            }
            if samples == 0 || samples > api::MAX_SAMPLES {
                return Err(Failure::Usage(format!("--samples must be in 1..={}", api::MAX_SAMPLES)));
            }
            if tolerance.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
                return Err(Failure::Usage("--tolerance must be positive".into()));
            }
            let req = VerifyRequest {
                identities: if all { None } else { Some(identity) },
                samples,
                seed,
                tolerance,
            };
            let session = source.session()?;
            let report = api::verify(&session, &req)?;
            emit(out, format, &report, || report.to_table())?;
            if report.summary.failed > 0 {
                return Err(Failure::Unsuccessful);
            }
            Ok(())
        }
        Command::Demo {
            which: Demo::Nonconvex { control, format },
        } => {
            let control = WheelSession::from_text(&control)?;
            let r = api::demo_nonconvex(&control)?;
            emit(out, format, &r, || {
                let mut s = format!("utility {}\n", r.demo.utility);
                s.push_str(&format!("{:<12} {:>14} {:>14}\n", "bundle", "original", "recovered"));
                for (k, q) in r.demo.probes.iter().enumerate() {
                    s.push_str(&format!(
                        "{:<12} {:>14} {:>14}\n",
                        wire::fmt_vec(q),
                        wire::fmt_num(r.demo.original_u_values[k]),
                        wire::fmt_num(r.demo.recovered_u_values[k])
                    ));
                }
                let flips: Vec<String> = r
                    .demo
                    .ranking_flips
                    .iter()
                    .map(|(a, b)| format!("{} vs {}", wire::fmt_vec(&r.demo.probes[*a]), wire::fmt_vec(&r.demo.probes[*b])))
                    .collect();
                s.push_str(&format!("ranking flips: {}\n", if flips.is_empty() { "none".into() } else { flips.join("; ") }));
                s.push_str(&format!("convexified: {}\n", r.demo.convexified));
                match (&r.control, &r.control_error) {
                    (Some(c), _) => s.push_str(&format!("control {}: convexified: {}\n", c.utility, c.convexified)),
                    (None, Some(e)) => s.push_str(&format!("control failed: {}\n", e.message)),
                    _ => {}
                }
                s
            })
        }
        Command::Serve { port, host } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Usage(e.to_string()))?;
            rt.block_on(service::serve((host, port).into())).map_err(|e| {
                Failure::Domain(Error::Invalid(format!("cannot serve on {host}:{port}: {e}")))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (vec![], vec![]);
        let code = run(std::iter::once("duality").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn solve_prints_the_bundle() {
        let (code, out, _) = run_args(&["solve", "--utility", "q1*q2", "--prices", "1,1", "--income", "2"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("bundle = (1, 1)"), "{out}");
    }

    #[test]
    fn dual_solve_with_negative_level_parses() {
        let (code, _, err) = run_args(&["solve", "--utility", "q1+q2", "--problem", "dual", "--prices", "1,2", "--ulevel", "-1"]);
        assert_eq!(code, 0, "{err}");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_args(&["solve", "--prices", "1,1", "--income", "2"]).0, 2);
        assert_eq!(run_args(&["verify", "--utility", "q1*q2"]).0, 2);
        assert_eq!(run_args(&["verify", "--utility", "q1*q2", "--identity", "nope"]).0, 2);
        assert_eq!(run_args(&["solve", "--utility", "q1*q2", "--prices", "1,1"]).0, 2);
        assert_eq!(run_args(&["solve", "--utility", "q1*q2", "--problem", "dual", "--prices", "1,1", "--income", "1"]).0, 2);
        assert_eq!(run_args(&["derive", "--utility", "q1*q2", "--from", "XYZ", "--to", "HDF"]).0, 2);
        assert_eq!(run_args(&["frobnicate"]).0, 2);
    }

    #[test]
    fn domain_errors_exit_one() {
        let (code, _, err) = run_args(&["parse", "q1 +* q2"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[ParseError]"), "{err}");
        let (code, _, err) = run_args(&["solve", "--utility", "q1*q2", "--prices", "1,-1", "--income", "2"]);
        assert_eq!(code, 1, "{err}");
    }

    #[test]
    fn derive_prints_path_and_value() {
        let (code, out, err) = run_args(&["derive", "--utility", "q1*q2", "--from", "DUF", "--to", "HDF", "--at", "P=1,1;u=1"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("DUF -t_dual_solve-> HDF"), "{out}");
        assert!(out.contains("value = (1, 1)"), "{out}");
    }

    #[test]
    fn json_matches_service_serializer() {
        let (code, out, _) = run_args(&["parse", "q1*q2", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v, wire::to_value(&api::parse("q1*q2").unwrap()));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("verify"));
    }
}
