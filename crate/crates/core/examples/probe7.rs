// scratch probe: sweep path-timing bounds in scenario B
use mpfckit::runtime::{run_closed_loop, ScenarioConfig};
use mpfckit::transcription::Controller;
use mpfckit::Integrator;
use std::f64::consts::PI;

fn main() {
    for (sdm, vm) in [(1.5, 2.0), (1.5, 3.0), (1.8, 3.0), (1.8, 4.0), (2.0, 3.0), (2.0, 4.0), (2.0, 5.0), (2.5, 5.0), (1.2, 2.0), (1.6, 2.5)] {
        let mut scenario = ScenarioConfig::obstacles(Controller::Mpfc, Integrator::Rk4);
        scenario.task.s_dot_max = sdm;
        scenario.task.v_max = vm;
        let log = run_closed_loop(&scenario).unwrap();
        let n = log.steps.len();
        let last = log.steps.last().unwrap();
        let fails = log.steps.iter().filter(|s| s.status != mpfckit::SolveStatus::Optimal).count();
        let tail = (0.5 / scenario.delta_t) as usize;
        let tail_max_rate = log.steps[n - tail..].iter().map(|s| s.timing.rate).fold(0.0, f64::max);
        let worst: Vec<f64> = scenario.task.obstacles.iter().map(|o|
            log.steps.iter().map(|s| mpfckit::path::obstacle_violation(&s.end_effector, o)).fold(f64::NEG_INFINITY, f64::max)).collect();
        println!(
            "sdm={sdm} vm={vm}: s_final={:.4} (pi/2={:.3}, 5pi/4={:.3}) tail_rate={:.4} fails={fails} viol={:?}",
            last.timing.parameter, PI / 2.0, 5.0 * PI / 4.0, tail_max_rate,
            worst.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>()
        );
    }
}
