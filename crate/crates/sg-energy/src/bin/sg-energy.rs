fn main() {
    let code = sg_energy::cli::run(std::env::args());
    std::process::exit(code);
}
