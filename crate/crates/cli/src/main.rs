fn main() -> std::process::ExitCode {
    heatlab_cli::main_with_args(std::env::args())
}
