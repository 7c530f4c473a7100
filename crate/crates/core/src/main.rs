fn main() {
    std::process::exit(hicrl::cli::dispatch(std::env::args_os()));
}
