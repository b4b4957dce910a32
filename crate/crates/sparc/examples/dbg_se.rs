use sparc::analysis::*;
use sparc::code::CodeParams;
use sparc::powalloc::PowerAllocation;

fn main() {
    let p = 15.0;
    let rate = 1.4;
    let params = CodeParams::from_nominal_rate(256, 16, rate, p, 1.0).unwrap();
    let pa = PowerAllocation::iterative(256, 256, 1.0, p, rate).unwrap();
    let tol = 1e-6 * (1.0 + p);
    let traj = se_trajectory(&pa, &params, SeMode::Asymptotic, tol, 1024);
    println!("steps={} converged={} final_tau2={}", traj.iterations(), traj.converged, traj.final_tau2());
    for (t, (tau2, x)) in traj.tau2.iter().zip(&traj.x).enumerate().take(8) {
        println!("t={t} tau2={tau2:.9} x={x:.9}");
    }
    let tail = traj.tau2.len().saturating_sub(5);
    for (t, (tau2, x)) in traj.tau2.iter().zip(&traj.x).enumerate().skip(tail) {
        println!("t={t} tau2={tau2:.9} x={x:.9}");
    }
    // quadrature convergence scan
    let pa2 = PowerAllocation::iterative(64, 16, 1.0, 15.0, 1.5).unwrap();
    let mut prev: Option<Vec<f64>> = None;
    for q in [61usize, 122, 150, 200, 244, 300, 400] {
        let pred = predict_esec_closed(&pa2, 1.0, 256, 512, q).unwrap();
        if let Some(p0) = &prev {
            let maxd = p0.iter().zip(&pred.per_section).map(|(a,b)| (a-b).abs()).fold(0.0, f64::max);
            println!("q {q}: esec={:.12e} max delta from prev = {maxd:.3e}", pred.esec);
        } else {
            println!("q {q}: esec={:.12e}", pred.esec);
        }
        prev = Some(pred.per_section.clone());
    }
}
