use clap::Parser;

fn main() {
    let cli = cfsurv::cli::Cli::parse();
    if let Err(e) = cfsurv::cli::run(cli) {
        eprintln!("{}", cfsurv::cli::error_json(&e));
        std::process::exit(e.kind().exit_code());
    }
}
