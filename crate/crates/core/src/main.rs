fn main() {
    std::process::exit(conformal_screening::cli::main());
}
