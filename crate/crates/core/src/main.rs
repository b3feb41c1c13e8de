fn main() { std::process::exit(hybrid_isaacs::cli::main()) }
