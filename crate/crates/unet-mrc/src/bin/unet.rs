fn main() {
    std::process::exit(unet_mrc::cli::run());
}
