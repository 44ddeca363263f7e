fn main() {
    std::process::exit(zib_core::cli::main());
}
