//! Binary entry point for `dd-signal`.

fn main() {
    std::process::exit(dd_signal::cli::main_entry());
}
