fn main() {
    std::process::exit(specfuse::cli_main());
}
