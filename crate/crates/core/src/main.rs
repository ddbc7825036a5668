fn main() -> std::process::ExitCode {
    presim::cli::main()
}
