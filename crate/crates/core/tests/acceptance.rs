//! One line per acceptance criterion. Documented failures print FAIL but do
//! not fail the target; any other failing check does.

use randfront::acceptance::{Suite, CRITERIA};
use randfront::experiments::RunContext;

const BASE_SEED: u64 = 20240601;

fn main() {
    let only: Vec<u8> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_else(|| CRITERIA.to_vec());
    let mut suite = Suite::new(BASE_SEED, RunContext::default());
    let mut bad = Vec::new();
    for id in only {
        match suite.run(id) {
            Ok(o) => {
                println!("{}", o.line());
                if !o.acceptable() {
                    bad.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2} [FAIL] error: {e}");
                bad.push(id);
            }
        }
    }
    if !bad.is_empty() {
        eprintln!("failing criteria: {bad:?}");
        std::process::exit(1);
    }
}
