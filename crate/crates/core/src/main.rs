use clap::Parser;

use nonconvex_clt::cli::{main_with, Args};

fn main() {
    std::process::exit(main_with(Args::parse()));
}
