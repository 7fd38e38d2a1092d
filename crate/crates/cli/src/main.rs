use clap::Parser;

fn main() -> anyhow::Result<()> {
    mcv_cli::run(mcv_cli::Cli::parse())
}
