// scratch probe: find and dissect the first failing warm solve in scenario B
use mpfckit::runtime::{controller_step, simulate_plant, ScenarioConfig};
use mpfckit::transcription::Controller;
use mpfckit::dynamics::{ExtendedState, PathTimingState};
use mpfckit::{Integrator, SolveStatus};

fn main() {
    env_logger::init();
    let scenario = ScenarioConfig::obstacles(Controller::Mpfc, Integrator::Rk4);
    let mut plant = ExtendedState::new(scenario.initial_joint, PathTimingState::at_origin());
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..400 {
        let t = k as f64 * scenario.delta_t;
        let sv = plant.to_vec().to_vec();
        let step = controller_step(&sv, t, &scenario, warm.as_deref()).unwrap();
        if step.status != SolveStatus::Optimal || k % 25 == 0 {
            println!(
                "k={k} t={t:.2} status={:?} iters={} s={:.4} sd={:.4} u=[{:+.2},{:+.2}] v={:+.2}",
                step.status, step.iterations, sv[4], sv[5], step.applied[0], step.applied[1], step.applied[2]
            );
        }
        if step.status != SolveStatus::Optimal {
            // rerun this solve with trace
            let mut sc = scenario.clone();
            sc.ipm.record_trace = true;
            let config = sc.transcription();
            let (problem, layout) = mpfckit::transcription::transcribe(
                Controller::Mpfc, &config, &sc.model, &sc.task, &sv, t).unwrap();
            let guess = warm.as_ref().map(|w| {
                let old = mpfckit::transcription::extract_trajectory(w, &layout);
                let mut states: Vec<Vec<f64>> = (1..=layout.steps).map(|k| old.states[k].clone()).collect();
                states.push(old.states[layout.steps].clone());
                let mut inputs: Vec<Vec<f64>> = (1..layout.steps).map(|k| old.inputs[k].clone()).collect();
                inputs.push(old.inputs[layout.steps - 1].clone());
                mpfckit::transcription::pack_trajectory(&states, &inputs, &layout)
            }).unwrap();
            let mut opts = sc.ipm;
            opts.warm_start = true;
            opts.record_trace = true;
            let result = mpfckit::ipm::solve(&problem, &guess, &opts);
            println!("  rerun: status={:?} kkt={:.2e}", result.status, result.kkt_error);
            let tr = &result.stats.trace;
            for (i, r) in tr.iter().enumerate() {
                if i % 20 == 0 || i + 4 >= tr.len() {
                    println!("    it {i}: mu={:.1e} stat={:.2e} feas={:.2e} compl={:.2e} alpha={:.2e} minslack={:.1e} reg={:.1e}",
                        r.mu, r.stationarity, r.feasibility, r.complementarity, r.step_length, r.min_slack, r.regularization);
                }
            }
            break;
        }
        warm = Some(step.solution.clone());
        let w = [step.applied[0], step.applied[1], step.applied[2]];
        plant = simulate_plant(&plant, &w, scenario.delta_t, &scenario.model, &scenario.task);
    }
}
