//! Config-driven front end to the `ohmic` library.

pub mod commands;
pub mod config;
pub mod output;

use serde_json::json;

pub use commands::{run, CliError, Command};
pub use config::{parse_config, ConfigError, RunConfig};
pub use output::{Cell, Check, Report, Table};

/// The report in the configured output format.
pub fn render(command: Command, cfg: &RunConfig, report: &Report) -> String {
    match cfg.output.format {
        config::Format::Csv => report.table.to_csv(),
        config::Format::Json => {
            let doc = json!({
                "command": command.name(),
                "config": cfg,
                "passed": report.passed(),
                "checks": report.checks,
                "results": report.json,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable report");
            s.push('\n');
            s
        }
    }
}
