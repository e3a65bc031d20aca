use clap::Parser;

fn main() -> anyhow::Result<()> {
    trustcal::cli::run(trustcal::cli::Cli::parse())
}
