fn main() {
    std::process::exit(sideband_friction::cli::run());
}
