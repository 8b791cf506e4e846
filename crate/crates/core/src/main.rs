fn main() -> std::process::ExitCode {
    fogrelay::cli::main()
}
