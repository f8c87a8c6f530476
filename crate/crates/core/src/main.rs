fn main() {
    std::process::exit(topocnn::cli::main_exit_code());
}
