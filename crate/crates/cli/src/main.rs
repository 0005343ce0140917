use clap::Parser;

fn main() {
    if let Err(e) = kbench_cli::run(kbench_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
