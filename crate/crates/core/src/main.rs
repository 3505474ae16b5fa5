use std::process::ExitCode;

fn main() -> ExitCode {
    if let Some(n) = std::env::var("KOOPMAN_SPARSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let code = koopman_sparse::cli::run_from(std::env::args_os());
    ExitCode::from(code as u8)
}
