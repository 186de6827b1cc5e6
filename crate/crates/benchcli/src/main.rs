fn main() {
    std::process::exit(oddgrid_benchcli::cli::run(std::env::args_os()));
}
