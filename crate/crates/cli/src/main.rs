fn main() {
    std::process::exit(pcmri_cli::cli_main(std::env::args_os()));
}
