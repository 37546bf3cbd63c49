use clap::Parser;

fn main() {
    // clap exits with 2 on usage errors, matching the config-error code
    let cli = auditreg_cli::Cli::parse();
    std::process::exit(auditreg_cli::execute(&cli));
}
