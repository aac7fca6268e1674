fn main() -> std::process::ExitCode {
    ensemble_importance::cli::main()
}
