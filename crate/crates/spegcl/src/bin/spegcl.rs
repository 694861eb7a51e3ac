fn main() {
    std::process::exit(spegcl::cli::run());
}
