fn main() {
    std::process::exit(age_metrics_cli::run(std::env::args_os()));
}
