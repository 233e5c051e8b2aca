//! The two broadcast implementations side by side: the trusted oracle and
//! the echo-quorum protocol. Same scenario, same seed: identical per-source
//! delivery sequences and identical validated records everywhere; only the
//! wire bill differs.
//!
//! ```sh
//! cargo run --example quorum_vs_idealized
//! ```

use atsim::metrics;
use atsim::runner;
use atsim::sim::engine::run;
use atsim::sim::BroadcastMode;

fn main() {
    let ideal = runner::load_scenario("fig4_fairN4").unwrap();
    let mut quorum = ideal.clone();
    quorum.broadcast = BroadcastMode::Quorum { f: 1 };

    for (label, scenario) in [("idealized", &ideal), ("quorum f=1", &quorum)] {
        let system = runner::build_system(scenario).unwrap();
        let trace = run(
            system,
            &scenario.policy,
            5,
            &scenario.faults,
            scenario.options.step_bound,
            &scenario.name,
        )
        .unwrap();
        let m = metrics::from_trace(&trace);
        println!("{label}:");
        println!(
            "  {} broadcasts, {} transfers applied, {} wire messages",
            m.broadcasts, m.transfers_applied, m.total_messages
        );
        for (kind, count) in &m.messages_by_kind {
            println!("    {kind}: {count}");
        }
    }
    let n = u64::from(ideal.n);
    println!(
        "\nanalytic quorum bill per broadcast at n={n}: {} (send {n} + ack {n} + cert {n} + ready {})",
        runner::quorum_messages_per_broadcast(n),
        n * n
    );
}
