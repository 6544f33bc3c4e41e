fn main() {
    std::process::exit(aarm::cli::run_command(std::env::args_os()));
}
