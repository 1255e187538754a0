use std::sync::Arc;

use anyhow::Context;
use clap::Parser;

use cimdse_cli::commands::{self, Cli, Command, ServeArgs};

async fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let orch = Arc::new(args.orchestrator()?);
    let listener = tokio::net::TcpListener::bind(&args.addr)
        .await
        .with_context(|| format!("binding {}", args.addr))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, cimdse_cli::server::router(orch)).await?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Run(a) => commands::run(a, &mut out),
        Command::Optimize(a) => commands::optimize(a, &mut out),
        Command::Enumerate(a) => commands::enumerate(a, &mut out),
        Command::Basegen(a) => commands::basegen(a, &mut out),
        Command::Experiment(a) => commands::experiment(a, &mut out),
        Command::Serve(a) => {
            drop(out);
            tokio::runtime::Runtime::new()?.block_on(serve(a))
        }
    }
}
