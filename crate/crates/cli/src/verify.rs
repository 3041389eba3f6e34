use clap::Args as ClapArgs;
use iconify::autodiff::OpKind;
use iconify::verify::{run_verify, VerifyOptions};

use crate::exit::{CmdResult, Failure};
use crate::Globals;

#[derive(ClapArgs)]
pub struct Args {
    /// Only the 32×32 composed-objective checks.
    #[arg(long)]
    fast: bool,
    /// Corrupts the backward pass of one op kind (exercises failure reporting).
    #[arg(long, hide = true, value_name = "OP")]
    inject_fault: Option<String>,
}

pub fn run(g: &Globals, args: Args) -> CmdResult {
    let fault = match &args.inject_fault {
        None => None,
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| {
            let known: Vec<_> = OpKind::ALL.iter().map(|k| k.name()).collect();
            Failure::usage(anyhow::anyhow!(
                "unknown op `{name}`; expected one of {}",
                known.join(", ")
            ))
        })?),
    };
    let report = run_verify(&VerifyOptions {
        fast: args.fast,
        fault,
        seed: g.seed.unwrap_or(0),
    })?;
    println!("{}", report.table());
    let failures = report.failures();
    if failures.is_empty() {
        return Ok(());
    }
    let names: Vec<_> = failures
        .iter()
        .map(|r| format!("{} ({:.3e} > {:.0e})", r.name, r.value, r.threshold))
        .collect();
    Err(Failure::failed(anyhow::anyhow!(
        "{} check(s) failed: {}",
        failures.len(),
        names.join("; ")
    )))
}
