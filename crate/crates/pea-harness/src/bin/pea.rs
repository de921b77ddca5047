use std::process::exit;

fn main() {
    exit(pea_harness::cli::run(std::env::args_os()));
}
