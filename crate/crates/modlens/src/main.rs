fn main() {
    let env = modlens::config::Layers::from_process_env().env;
    std::process::exit(modlens::cli::main_with(std::env::args_os(), env));
}
