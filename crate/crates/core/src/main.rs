fn main() {
    std::process::exit(lunar_mrta::cli::main_exit_code());
}
