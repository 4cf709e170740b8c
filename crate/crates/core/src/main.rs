fn main() {
    std::process::exit(scr::cli::main_with_env());
}
