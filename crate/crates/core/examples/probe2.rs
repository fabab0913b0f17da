// scratch probe: closed-loop scenario behavior
use mpfckit::runtime::{run_closed_loop, ScenarioConfig};
use mpfckit::transcription::Controller;
use mpfckit::Integrator;
use std::f64::consts::PI;

fn summarize(name: &str, log: &mpfckit::ClosedLoopLog) {
    let n = log.steps.len();
    let last = log.steps.last().unwrap();
    let max_torque = log.steps.iter().map(|s| s.torque.amax()).fold(0.0, f64::max);
    let max_iters = log.steps.iter().map(|s| s.iterations).max().unwrap();
    let mut iters: Vec<usize> = log.steps.iter().map(|s| s.iterations).collect();
    iters.sort();
    let med_iters = iters[n / 2];
    let failures = log.steps.iter().filter(|s| s.status != mpfckit::SolveStatus::Optimal).count();
    let s_vals: Vec<f64> = log.steps.iter().map(|s| s.timing.parameter).collect();
    let nondec = s_vals.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let total_ms: f64 = log.steps.iter().map(|s| s.solve_time.as_secs_f64()*1e3).sum();
    // final 0.5 s max rate
    let tail = (0.5 / log.scenario.delta_t) as usize;
    let tail_max_rate = log.steps[n.saturating_sub(tail)..].iter().map(|s| s.timing.rate).fold(0.0, f64::max);
    println!("{name}: steps={n} e_final={:.5} s_final={:.4} (pi/2={:.4} 5pi/4={:.4}) tail_rate={:.4} nondec={nondec} max|u|={:.3} iters(max/med)={max_iters}/{med_iters} fails={failures} solve_total={:.1}ms",
        last.error_norm, last.timing.parameter, PI/2.0, 5.0*PI/4.0, tail_max_rate, max_torque, total_ms);
    // obstacle clearance
    for (i, o) in log.scenario.task.obstacles.iter().enumerate() {
        let worst = log.steps.iter().map(|s| mpfckit::path::obstacle_violation(&s.end_effector, o)).fold(f64::NEG_INFINITY, f64::max);
        println!("   obstacle {i}: worst violation {worst:.2e}");
    }
}

fn main() {
    let t0 = std::time::Instant::now();
    let a_mpfc = run_closed_loop(&ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4)).unwrap();
    summarize("A mpfc rk4", &a_mpfc);
    println!("   wall: {:?}", t0.elapsed());

    let t0 = std::time::Instant::now();
    let a_tt = run_closed_loop(&ScenarioConfig::approach(Controller::Ttmpc, Integrator::Rk4)).unwrap();
    summarize("A tt rk4", &a_tt);
    println!("   wall: {:?}", t0.elapsed());

    let t0 = std::time::Instant::now();
    let b_mpfc = run_closed_loop(&ScenarioConfig::obstacles(Controller::Mpfc, Integrator::Rk4)).unwrap();
    summarize("B mpfc rk4", &b_mpfc);
    println!("   wall: {:?}", t0.elapsed());

    let t0 = std::time::Instant::now();
    let b_tt = run_closed_loop(&ScenarioConfig::obstacles(Controller::Ttmpc, Integrator::Rk4)).unwrap();
    summarize("B tt rk4", &b_tt);
    println!("   wall: {:?}", t0.elapsed());
}
