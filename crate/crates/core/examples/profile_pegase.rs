//! Rough timing probe for the large-case hot path. Not a benchmark —
//! just prints wall times for the expensive building blocks so profile
//! regressions are easy to spot.
//!
//!     cargo run -p txflow --example profile_pegase [case-file]

use std::time::Instant;
use txflow::{
    assemble_system, build_index, load_case, min_degree_order, solve_tx_stepping, trivial_start,
    factorize_csc, HomotopyConfig, HomotopySchedule, NrConfig,
};

struct StderrLog;

impl log::Log for StderrLog {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, r: &log::Record) {
        eprintln!("[{}] {}", r.level(), r.args());
    }
    fn flush(&self) {}
}

static LOGGER: StderrLog = StderrLog;

fn main() {
    let level = match std::env::var("PROFILE_LOG").as_deref() {
        Ok("trace") => log::LevelFilter::Trace,
        Ok("off") => log::LevelFilter::Off,
        _ => log::LevelFilter::Debug,
    };
    let _ = log::set_logger(&LOGGER).map(|()| log::set_max_level(level));

    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "cases/case13659pegase.m".into());

    let t = Instant::now();
    let lc = load_case(path.as_ref()).expect("case loads");
    println!("load_case            {:8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    let net = lc.network;
    let idx = build_index(&net);
    println!(
        "n = {} ({} buses, {} branches)",
        idx.n,
        net.buses.len(),
        net.branches.len()
    );

    let h = HomotopyConfig::default();
    let x = trivial_start(&net, &idx);

    let t = Instant::now();
    let sys = assemble_system(&net, &idx, &x, &h, 1.0);
    println!("assemble_system      {:8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let a = sys.to_csc();
    println!("to_csc               {:8.1} ms  (nnz {})", t.elapsed().as_secs_f64() * 1e3, a.nnz());

    let t = Instant::now();
    let order = min_degree_order(&a);
    println!("min_degree_order     {:8.1} ms", t.elapsed().as_secs_f64() * 1e3);

    for trial in 0..3 {
        let t = Instant::now();
        let f = factorize_csc(a.clone(), Some(&order)).expect("factorizes");
        let (lnz, unz) = f.nnz_lu();
        println!(
            "factorize_csc #{trial}     {:8.1} ms  (growth {:.1e}, L+U nnz {}, fill {:.1}x)",
            t.elapsed().as_secs_f64() * 1e3,
            f.pivot_growth(),
            lnz + unz,
            (lnz + unz) as f64 / a.nnz() as f64
        );
    }

    let mut nr = NrConfig::default();
    if let Ok(v) = std::env::var("PROFILE_ZETA_MIN") {
        nr.zeta_min = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PROFILE_DV_MAX") {
        nr.dv_max = v.parse().unwrap();
    }
    let t = Instant::now();
    let report = solve_tx_stepping(&net, &idx, None, &HomotopySchedule::default(), &nr);
    println!(
        "solve_tx_stepping    {:8.1} ms  ({:?}, {} stages + {} rejected, {} iterations)",
        t.elapsed().as_secs_f64() * 1e3,
        report.status,
        report.stages.len(),
        report.rejected_stages.len(),
        report.total_iterations
    );
}
