fn main() {
    snspd_core::cli::main();
}
