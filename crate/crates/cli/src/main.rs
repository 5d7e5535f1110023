fn main() {
    std::process::exit(latbench_cli::dispatch(std::env::args_os()));
}
