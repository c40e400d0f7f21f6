fn main() {
    std::process::exit(pid_engine::cli::run(std::env::args_os()));
}
