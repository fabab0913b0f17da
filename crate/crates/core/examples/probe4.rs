// scratch probe: dissect the first warm-started solve
use mpfckit::runtime::{controller_step, simulate_plant, ScenarioConfig};
use mpfckit::transcription::{transcribe, extract_trajectory, Controller};
use mpfckit::dynamics::{ExtendedState, PathTimingState};
use mpfckit::Integrator;

fn main() {
    env_logger::init();
    let mut scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
    scenario.ipm.record_trace = true;
    let mut plant = ExtendedState::new(scenario.initial_joint, PathTimingState::at_origin());
    let sv = plant.to_vec().to_vec();
    let step0 = controller_step(&sv, 0.0, &scenario, None).unwrap();
    let w = [step0.applied[0], step0.applied[1], step0.applied[2]];
    plant = simulate_plant(&plant, &w, scenario.delta_t, &scenario.model, &scenario.task);

    // now solve step 1 warm, with trace
    let sv = plant.to_vec().to_vec();
    println!("plant state at k=1: {:?}", sv);
    // reproduce internals of controller_step to get the trace
    let config = scenario.transcription();
    let (problem, layout) = transcribe(Controller::Mpfc, &config, &scenario.model, &scenario.task, &sv, 0.01).unwrap();
    // shifted guess
    let old = extract_trajectory(&step0.solution, &layout);
    let mut states: Vec<Vec<f64>> = (1..=layout.steps).map(|k| old.states[k].clone()).collect();
    states.push(old.states[layout.steps].clone());
    let mut inputs: Vec<Vec<f64>> = (1..layout.steps).map(|k| old.inputs[k].clone()).collect();
    inputs.push(old.inputs[layout.steps - 1].clone());
    let guess = mpfckit::transcription::pack_trajectory(&states, &inputs, &layout);

    let mut opts = scenario.ipm;
    opts.warm_start = true;
    opts.record_trace = true;
    let result = mpfckit::ipm::solve(&problem, &guess, &opts);
    println!("warm solve: status={:?} iters={} kkt={:.2e}", result.status, result.stats.iterations, result.kkt_error);
    for (k, r) in result.stats.trace.iter().enumerate() {
        if k % 10 == 0 || k > result.stats.trace.len().saturating_sub(6) {
            println!("  it {k}: mu={:.1e} stat={:.2e} feas={:.2e} compl={:.2e} alpha={:.2e} minslack={:.1e} reg={:.1e}",
                r.mu, r.stationarity, r.feasibility, r.complementarity, r.step_length, r.min_slack, r.regularization);
        }
    }
}
