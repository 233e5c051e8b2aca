//! Message bills: the broadcast protocol versus a total-order sequencer
//! running over the same quorum broadcast. The protocol pays exactly one
//! broadcast per transfer; the baseline pays the same broadcast plus the
//! submission hop, and its sequencer is a single point of failure: crash
//! it and every client stalls, while the broadcast protocol shrugs off
//! the same crash.
//!
//! ```sh
//! cargo run --example sequencer_baseline
//! ```

use atsim::ledger::Pid;
use atsim::metrics;
use atsim::runner;
use atsim::sim::engine::run;
use atsim::sim::Algorithm;

fn main() {
    let report = runner::cmd_baseline("baseline_compare", 7).unwrap();
    println!(
        "{}: {} transfers through both protocols",
        report.scenario, report.transfers
    );
    println!(
        "  broadcast protocol: {:>6} messages  ({:.1} per transfer)",
        report.broadcast_messages, report.broadcast_per_transfer
    );
    println!(
        "  sequencer baseline: {:>6} messages  ({:.1} per transfer)",
        report.baseline_messages, report.baseline_per_transfer
    );
    println!("  baseline / broadcast ratio: {:.2}", report.ratio);

    // Crash the sequencer early in both worlds.
    let mut scenario = runner::load_scenario("baseline_compare").unwrap();
    scenario.faults.crashes.insert(Pid(1), 5);
    let broadcast_trace = {
        let system = runner::build_system(&scenario).unwrap();
        run(
            system,
            &scenario.policy,
            7,
            &scenario.faults,
            scenario.options.step_bound,
            &scenario.name,
        )
        .unwrap()
    };
    let mut baseline = scenario.clone();
    baseline.algorithm = Algorithm::SequencerBaseline;
    let baseline_trace = {
        let system = runner::build_system(&baseline).unwrap();
        run(
            system,
            &baseline.policy,
            7,
            &baseline.faults,
            baseline.options.step_bound,
            &baseline.name,
        )
        .unwrap()
    };
    let bm = metrics::from_trace(&broadcast_trace);
    let sm = metrics::from_trace(&baseline_trace);
    println!("\nwith node 1 crashed at step 5:");
    println!(
        "  broadcast protocol: {} ops completed, {} stalled",
        bm.ops_completed, bm.ops_stalled
    );
    println!(
        "  sequencer baseline: {} ops completed, {} stalled (clients wait forever)",
        sm.ops_completed, sm.ops_stalled
    );
}
