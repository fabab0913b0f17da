// scratch probe: trace the scenario-A cold start
use mpfckit::runtime::ScenarioConfig;
use mpfckit::transcription::{transcribe, pack_trajectory, Controller};
use mpfckit::dynamics::gravity;
use mpfckit::Integrator;
use nalgebra::Vector2;

fn main() {
    env_logger::init();
    let scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
    let x0 = [std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0, 0.0];
    let config = scenario.transcription();
    let (problem, layout) = transcribe(Controller::Mpfc, &config, &scenario.model, &scenario.task, &x0, 0.0).unwrap();
    let g = gravity(&Vector2::new(x0[0], x0[1]), &scenario.model);
    let states = vec![x0.to_vec(); config.steps + 1];
    let inputs = vec![vec![g[0], g[1], 0.0]; config.steps];
    let guess = pack_trajectory(&states, &inputs, &layout);
    let mut opts = scenario.ipm;
    opts.record_trace = true;
    opts.max_iterations = 400;
    let result = mpfckit::ipm::solve(&problem, &guess, &opts);
    println!("cold: status={:?} iters={} kkt={:.2e}", result.status, result.stats.iterations, result.kkt_error);
    let tr = &result.stats.trace;
    for (i, r) in tr.iter().enumerate() {
        if i % 15 == 0 || i + 4 >= tr.len() {
            println!("  it {i}: mu={:.1e} stat={:.2e} feas={:.2e} compl={:.2e} alpha={:.2e} minslack={:.1e} reg={:.1e}",
                r.mu, r.stationarity, r.feasibility, r.complementarity, r.step_length, r.min_slack, r.regularization);
        }
    }
}
