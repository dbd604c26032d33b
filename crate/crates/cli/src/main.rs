fn main() {
    modelprobe_cli::init_logging();
    std::process::exit(modelprobe_cli::main_with_args(std::env::args_os()));
}
