// scratch probe: cold MPFC solve behavior (not part of the deliverable tests)
use mpfckit::dynamics::ManipulatorModel;
use mpfckit::path::TaskDefinition;
use mpfckit::runtime::{controller_step, ScenarioConfig};
use mpfckit::transcription::{transcribe, Controller, TranscriptionConfig};
use mpfckit::{Integrator, IpmOptions};
use nalgebra::Vector2;

fn main() {
    env_logger::init();

    let model = ManipulatorModel::benchmark();
    let mut task = TaskDefinition::benchmark();
    task.joint_speed_limit = Some(0.5 * std::f64::consts::PI);

    // Scenario A start: end effector at (0.5, 0.5)
    let x0 = [std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0, 0.0];
    for (name, config) in [
        ("mpfc rk4 N=20", TranscriptionConfig::rk4(0.01, 20)),
        ("mpfc col N=20 d=3", TranscriptionConfig::collocation(0.01, 20, 3)),
    ] {
        let t0 = std::time::Instant::now();
        let (problem, layout) = transcribe(Controller::Mpfc, &config, &model, &task, &x0, 0.0).unwrap();
        let setup = t0.elapsed();
        // cold start guess
        let g = mpfckit::dynamics::gravity(&Vector2::new(x0[0], x0[1]), &model);
        let states = vec![x0.to_vec(); config.steps + 1];
        let inputs = vec![vec![g[0], g[1], 0.0]; config.steps];
        let guess = mpfckit::transcription::pack_trajectory(&states, &inputs, &layout);
        let mut opts = IpmOptions::default();
        opts.record_trace = true;
        let t0 = std::time::Instant::now();
        let result = mpfckit::ipm::solve(&problem, &guess, &opts);
        println!(
            "{name}: n={} m_eq={} status={:?} iters={} kkt={:.2e} obj={:.4} setup={:?} solve={:?}",
            problem.n, problem.m_eq, result.status, result.stats.iterations, result.kkt_error,
            result.objective, setup, t0.elapsed()
        );
        if result.status != mpfckit::SolveStatus::Optimal {
            for (k, r) in result.stats.trace.iter().enumerate() {
                if k % 5 == 0 || k + 5 >= result.stats.trace.len() {
                    println!("  it {k}: mu={:.1e} stat={:.2e} feas={:.2e} compl={:.2e} alpha={:.2e} reg={:.1e}",
                        r.mu, r.stationarity, r.feasibility, r.complementarity, r.step_length, r.regularization);
                }
            }
        }
    }

    // one full controller step from the scenario preset
    let scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
    let t0 = std::time::Instant::now();
    let step = controller_step(&x0, 0.0, &scenario, None).unwrap();
    println!(
        "controller_step: status={:?} iters={} applied={:?} in {:?}",
        step.status, step.iterations, step.applied, t0.elapsed()
    );
}
