use clap::Parser;

fn main() {
    let cli = mfwq_bench::cli::Cli::parse();
    if let Err(e) = mfwq_bench::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
