// scratch probe: per-step closed-loop diagnosis for scenario A
use mpfckit::runtime::{controller_step, simulate_plant, ScenarioConfig};
use mpfckit::transcription::Controller;
use mpfckit::dynamics::{ExtendedState, PathTimingState};
use mpfckit::Integrator;

fn main() {
    let scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
    let mut plant = ExtendedState::new(scenario.initial_joint, PathTimingState::at_origin());
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..20 {
        let t = k as f64 * scenario.delta_t;
        let sv = plant.to_vec().to_vec();
        match controller_step(&sv, t, &scenario, warm.as_deref()) {
            Ok(step) => {
                println!(
                    "k={k} status={:?} iters={} u=[{:+.3}, {:+.3}] v={:+.3} x=[{:+.5}, {:+.5}] s={:.4} sd={:.4}",
                    step.status, step.iterations, step.applied[0], step.applied[1], step.applied[2],
                    sv[2], sv[3], sv[4], sv[5]
                );
                warm = Some(step.solution.clone());
                let w = [step.applied[0], step.applied[1], step.applied[2]];
                plant = simulate_plant(&plant, &w, scenario.delta_t, &scenario.model, &scenario.task);
            }
            Err(e) => {
                println!("k={k} TRANSCRIBE ERROR: {e} | state = {:?}", sv);
                break;
            }
        }
    }
}
