fn main() {
    let code = mrccc_pipeline::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
