fn main() {
    std::process::exit(nps::scenario::cli_main());
}
