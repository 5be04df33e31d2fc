fn main() {
    sonoloc::cli::run();
}
