fn main() {
    std::process::exit(gapnav_core::harness::cli_main());
}
