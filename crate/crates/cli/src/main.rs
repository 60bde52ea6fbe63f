fn main() {
    std::process::exit(stoch_ham_cli::main_with(std::env::args_os()));
}
