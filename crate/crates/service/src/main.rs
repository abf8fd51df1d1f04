fn main() -> std::process::ExitCode {
    botdyn_service::cli::main()
}
