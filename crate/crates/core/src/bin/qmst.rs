use clap::Parser;

fn main() {
    let cli = qmst::cli::Cli::parse();
    if let Err(e) = qmst::cli::run(cli) {
        eprintln!("qmst: {e}");
        std::process::exit(e.exit_code());
    }
}
