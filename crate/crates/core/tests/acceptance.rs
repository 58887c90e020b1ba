use mrteleport_core::verify::{run_check, CHECKS};

fn main() {
    let mut failed = Vec::new();
    for info in &CHECKS {
        let r = run_check(info);
        println!("{}", r.line());
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", CHECKS.len(), CHECKS.len());
    } else {
        eprintln!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
