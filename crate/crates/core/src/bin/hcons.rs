fn main() {
    let code = hilbert_consensus::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
