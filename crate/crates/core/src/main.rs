fn main() {
    std::process::exit(bnbopt::cli::main());
}
