mod cli;

use std::process::ExitCode;

use clap::Parser;
use srlp::backtest::BacktestError;
use srlp::event_data::DataError;
use srlp::features::FeatureError;
use srlp::model::ModelError;
use srlp::train::TrainError;

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<DataError>() {
            return "data";
        }
        if cause.is::<FeatureError>() {
            return "feature";
        }
        if cause.is::<ModelError>() {
            return "model";
        }
        if cause.is::<TrainError>() {
            return "train";
        }
        if cause.is::<BacktestError>() {
            return "backtest";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRLP_LOG", "warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let parsed = match cli::Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli::run(parsed, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = serde_json::json!({
                "error": {
                    "kind": error_kind(&err),
                    "message": err.to_string(),
                    "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
                }
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
