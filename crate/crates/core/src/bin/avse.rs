fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(avse::cli::run(&argv));
}
