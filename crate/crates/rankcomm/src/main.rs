use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use rankcomm::json::ToJson;

mod cli;

fn main() -> ExitCode {
    let parsed = match cli::Cli::try_parse() {
        Ok(p) => p,
        Err(e) => {
            // clap's own help/version output goes to stdout with success
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(3);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let budget = cli::resolve_budget(parsed.budget);
    let started = Instant::now();
    let (exit, config, payload) = match cli::run(&parsed.command, budget) {
        Ok(outcome) => (outcome.exit, outcome.config, outcome.payload),
        Err(e) => {
            let config = json!({"command": format!("{:?}", parsed.command), "budget": budget});
            (e.exit_code(), config, e.to_json())
        }
    };
    let report = json!({
        "version": cli::VERSION,
        "config": config,
        "payload": payload,
        "timing_ms": started.elapsed().as_millis() as u64,
    });
    let rendered = match parsed.format.as_str() {
        "json" => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        "text" => cli::render_text(&config, &payload, exit),
        other => {
            eprintln!("unknown format {other:?} (expected json or text)");
            return ExitCode::from(3);
        }
    };
    match parsed.out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, rendered) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{rendered}"),
    }
    ExitCode::from(exit as u8)
}
