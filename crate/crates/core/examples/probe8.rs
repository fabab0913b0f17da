// scratch probe: locate scenario-A solve failures
use mpfckit::runtime::{run_closed_loop, ScenarioConfig};
use mpfckit::transcription::Controller;
use mpfckit::{Integrator, SolveStatus};

fn main() {
    let scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
    let log = run_closed_loop(&scenario).unwrap();
    for (k, s) in log.steps.iter().enumerate() {
        if s.status != SolveStatus::Optimal {
            println!(
                "k={k} t={:.2} status={:?} iters={} s={:.4} sd={:.4} v={:+.3}",
                s.time, s.status, s.iterations, s.timing.parameter, s.timing.rate, s.timing_input
            );
        }
    }
}
