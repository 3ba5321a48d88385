//! Physically constrained transport: a linear potential bends the optimal
//! paths into parabolas. The simulated trajectory mean at t = 1/2 should sag
//! to (m0+m1)/2 − a/8 below the straight line.
//!
//!   cargo run --release --example potential_parabola

use wlf::dataio::{synth, SynthKind};
use wlf::field::FieldSpec;
use wlf::hamiltonians::{PotentialSpec, ProblemSpec};
use wlf::pathmodel::PathSpec;
use wlf::trainer::{train, TrainConfig};
use wlf::transport_eval::{simulate, SimMode};

fn main() -> wlf::Result<()> {
    let accel = vec![0.0, 4.0];
    let dataset = synth(
        &SynthKind::ParabolaPotential {
            m0: vec![0.0, 0.0],
            m1: vec![2.0, 0.0],
            accel: accel.clone(),
            std: 0.1,
        },
        3,
        512,
    )?;
    let problem = ProblemSpec::w2().with_potential(
        PotentialSpec::LinearPerInterval {
            times: vec![0.0, 1.0],
            accels: vec![accel],
        },
        1.0,
    );
    let cfg = TrainConfig {
        iterations: 2000,
        batch_size: 128,
        refine_steps: 1,
        eval_every: 400,
        ..Default::default()
    };
    println!("training with the linear potential...");
    let run = train(
        &problem,
        &dataset,
        &FieldSpec::new(2, vec![32, 32]),
        &PathSpec::new(2, vec![24]),
        &cfg,
    )?;

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let x0 = dataset.draw(0, 256, &mut rng);
    let bundle = simulate(&problem, &run.field, &x0, 100, SimMode::Ode, 0)?;
    for step in [0, 25, 50, 75, 100] {
        let s = &bundle.states[step];
        let mean: Vec<f64> = (0..2).map(|j| s.column(j).sum() / s.nrows() as f64).collect();
        println!("t = {:.2}: mean ({:+.3}, {:+.3})", step as f64 / 100.0, mean[0], mean[1]);
    }
    println!("closed form at t = 1/2: (1.000, -0.500)");
    Ok(())
}
