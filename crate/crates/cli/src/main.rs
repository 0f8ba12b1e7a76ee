fn main() {
    std::process::exit(evocache_cli::run(std::env::args_os().collect()));
}
