fn main() -> std::process::ExitCode {
    locl::cli::main()
}
