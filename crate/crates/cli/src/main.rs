//! Command-line entry point. Subcommands are wired to the library runner;
//! see `runner` in the core crate for the orchestration.

fn main() {
    eprintln!("not yet wired");
    std::process::exit(2);
}
