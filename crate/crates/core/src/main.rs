fn main() {
    std::process::exit(edos_core::cli::main());
}
