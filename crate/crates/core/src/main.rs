fn main() {
    std::process::exit(qdaa::cli::main());
}
