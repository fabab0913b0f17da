// scratch probe: stall basin vs passing basin at obstacle 1
use mpfckit::runtime::{controller_step, simulate_plant, ScenarioConfig};
use mpfckit::transcription::{transcribe, pack_trajectory, Controller};
use mpfckit::dynamics::{inverse_kinematics, gravity, ElbowBranch, ExtendedState, PathTimingState};
use mpfckit::path::path_point;
use mpfckit::Integrator;
use nalgebra::Vector2;

fn main() {
    let scenario = ScenarioConfig::obstacles(Controller::Mpfc, Integrator::Rk4);
    let mut plant = ExtendedState::new(scenario.initial_joint, PathTimingState::at_origin());
    let mut warm: Option<Vec<f64>> = None;
    let mut stall_state = None;
    for k in 0..200 {
        let t = k as f64 * scenario.delta_t;
        let sv = plant.to_vec().to_vec();
        let step = controller_step(&sv, t, &scenario, warm.as_deref()).unwrap();
        if k == 65 {
            stall_state = Some((sv.clone(), t, step.solution.clone()));
            break;
        }
        warm = Some(step.solution.clone());
        let w = [step.applied[0], step.applied[1], step.applied[2]];
        plant = simulate_plant(&plant, &w, scenario.delta_t, &scenario.model, &scenario.task);
    }
    let (sv, t, warm_q) = stall_state.unwrap();
    println!("state at stall: s={:.4} sd={:.4}", sv[4], sv[5]);
    let config = scenario.transcription();
    let (problem, layout) = transcribe(Controller::Mpfc, &config, &scenario.model, &scenario.task, &sv, t).unwrap();

    // (a) solve from the warm stall guess
    let mut opts = scenario.ipm; opts.warm_start = true;
    let res_stall = mpfckit::ipm::solve(&problem, &warm_q, &opts);
    let traj = mpfckit::transcription::extract_trajectory(&res_stall.solution, &layout);
    println!("stall basin: status={:?} obj={:.6} s_end={:.4}", res_stall.status, res_stall.objective, traj.states[20][4]);

    // (b) passing guess: s-nodes sweep forward at full rate; EE nodes ride a
    // radially inflated circle (radius +0.025) around the obstacle
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    for k in 0..=layout.steps {
        let s_k = (sv[4] + sv[5] * config.delta_t * k as f64).min(scenario.task.path.s_end);
        let bulge = 0.03 * (-((s_k - std::f64::consts::FRAC_PI_2) / 0.1).powi(2)).exp();
        let dir = (path_point(s_k, &scenario.task.path) - scenario.task.path.center).normalize();
        let p = scenario.task.path.center + dir * (scenario.task.path.radius + bulge);
        let y = inverse_kinematics(&p, &scenario.model, ElbowBranch::Up).unwrap();
        states.push(vec![y[0], y[1], 0.0, 0.0, s_k, sv[5]]);
        if k < layout.steps {
            let g = gravity(&y, &scenario.model);
            inputs.push(vec![g[0], g[1], 0.0]);
        }
    }
    // velocities by finite differences of angles
    for k in 0..layout.steps {
        let dy0 = (states[k + 1][0] - states[k][0]) / config.delta_t;
        let dy1 = (states[k + 1][1] - states[k][1]) / config.delta_t;
        states[k][2] = dy0; states[k][3] = dy1;
    }
    let guess = pack_trajectory(&states, &inputs, &layout);
    let mut opts2 = scenario.ipm; opts2.warm_start = true;
    let res_pass = mpfckit::ipm::solve(&problem, &guess, &opts2);
    let traj = mpfckit::transcription::extract_trajectory(&res_pass.solution, &layout);
    println!("pass basin:  status={:?} obj={:.6} s_end={:.4}", res_pass.status, res_pass.objective, traj.states[20][4]);
    println!("(pi/2 = {:.4})", std::f64::consts::FRAC_PI_2);

    // force passage: terminal s bounded below past the obstacle window
    let (mut problem2, layout2) = transcribe(Controller::Mpfc, &config, &scenario.model, &scenario.task, &sv, t).unwrap();
    let term_s = layout2.state(layout2.steps).start + 4;
    problem2.lower[term_s] = 1.75;
    let mut opts2 = opts2; opts2.max_iterations = 3000;
    let res_forced = mpfckit::ipm::solve(&problem2, &guess, &opts2);
    let traj = mpfckit::transcription::extract_trajectory(&res_forced.solution, &layout2);
    println!("forced pass: status={:?} obj={:.6} s_end={:.4} iters={}", res_forced.status, res_forced.objective, traj.states[20][4], res_forced.stats.iterations);
}
