use nlwass::space::*;
use nlwass::kernels::*;
use nlwass::interpolation::Interpolation;
use nlwass::solver::*;
use std::time::Instant;

fn main() {
    let kernel = RadialKernel::indicator(1, 0.1);
    let space = DiscreteSpace::grid(1, 1.0, 256, &kernel).unwrap();
    let mu0 = gaussian_bump(&space, &[0.375], 0.06).unwrap();
    let mu1 = gaussian_bump(&space, &[0.625], 0.08).unwrap();
    let theta = Interpolation::arithmetic();
    for tf in [0.02, 0.05] {
        let config = SolveConfig { tau_factor: tf, ..Default::default() };
        let t0 = Instant::now();
        let rep = solve(&space, &theta, &mu0, &mu1, &config).unwrap();
        println!("solve tf={tf}: {:?} ({:?}, {} iters, dist {:.6})", t0.elapsed(), rep.status, rep.iterations, rep.distance);
    }
    let lap = SmoothingKernel::laplace(1, 0.1f64.sqrt()).discretize(&space).unwrap();
    let config = SolveConfig { tau_factor: 0.02, ..Default::default() };
    let t0 = Instant::now();
    let reps = solve_smoothed(&space, &theta, &mu0, &mu1, &lap, &config).unwrap();
    println!("solve_smoothed: {:?} ({:?}, {} iters, dist {:.6})", t0.elapsed(), reps.status, reps.iterations, reps.distance);
}
