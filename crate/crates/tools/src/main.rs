fn main() {
    std::process::exit(sinkhorn_tools::cli_main(std::env::args_os()));
}
