fn main() -> std::process::ExitCode {
    cellrate::cli::main()
}
