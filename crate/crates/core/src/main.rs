fn main() -> std::process::ExitCode {
    dash_dts::cli::main()
}
