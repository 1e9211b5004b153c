use clap::Parser;
use vodsim::cli::{execute, Cli};

fn main() -> anyhow::Result<()> {
    let path = execute(Cli::parse())?;
    println!("wrote {}", path.display());
    Ok(())
}
