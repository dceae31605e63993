fn main() -> std::process::ExitCode {
    fedvote::cli::main()
}
