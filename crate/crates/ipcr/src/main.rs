fn main() -> std::process::ExitCode {
    ipcr::cli::main()
}
