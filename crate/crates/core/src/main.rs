fn main() {
    std::process::exit(speckle_core::cli::main_entry());
}
