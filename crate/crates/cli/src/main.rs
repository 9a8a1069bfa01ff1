use clap::Parser;
use prm_cli::commands::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
        let mut body = serde_json::json!({ "error": e.to_string(), "causes": causes });
        if let Some(prm_drift::Error::Scenario(fields)) = e.downcast_ref::<prm_drift::Error>() {
            body["errors"] = serde_json::json!(fields);
        }
        eprintln!("{body}");
        std::process::exit(1);
    }
}
