fn main() {
    std::process::exit(exo_rl::cli::main_entry());
}
