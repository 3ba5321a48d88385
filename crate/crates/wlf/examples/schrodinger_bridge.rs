//! Schrödinger bridge between two 1-D Gaussians: train the drift potential,
//! sample the SDE, and compare the midpoint marginal with the grid oracle.
//!
//!   cargo run --release --example schrodinger_bridge

use wlf::dataio::{synth, SynthKind};
use wlf::field::FieldSpec;
use wlf::hamiltonians::ProblemSpec;
use wlf::pathmodel::PathSpec;
use wlf::trainer::{train, TrainConfig};
use wlf::transport_eval::{sb_grid_oracle, simulate, SimMode};

fn main() -> wlf::Result<()> {
    let sigma = 1.0;
    let dataset = synth(
        &SynthKind::GaussianShift {
            a: vec![4.0],
            std: 1.0,
        },
        9,
        1024,
    )?;
    let problem = ProblemSpec::schrodinger_bridge(sigma);
    let cfg = TrainConfig {
        iterations: 1500,
        batch_size: 128,
        refine_steps: 1,
        eval_every: 300,
        ..Default::default()
    };
    println!("training the bridge drift...");
    let run = train(
        &problem,
        &dataset,
        &FieldSpec::new(1, vec![32, 32]),
        &PathSpec::new(1, vec![24]),
        &cfg,
    )?;

    // forward SDE from the left marginal
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
    let x0 = dataset.draw(0, 512, &mut rng);
    let bundle = simulate(&problem, &run.field, &x0, 100, SimMode::Sde, 3)?;
    let mid = &bundle.states[50];
    let mean = mid.column(0).sum() / mid.nrows() as f64;
    let var = mid
        .column(0)
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / mid.nrows() as f64;
    println!("SDE midpoint: mean {mean:.3}, var {var:.3}");

    // oracle marginal from the static problem on a grid
    let grid: Vec<f64> = (0..321).map(|i| -6.0 + 16.0 * i as f64 / 320.0).collect();
    let gauss = |c: f64| -> Vec<f64> {
        grid.iter().map(|&x| (-(x - c) * (x - c) / 2.0).exp()).collect()
    };
    let oracle = sb_grid_oracle(&grid, &gauss(0.0), &gauss(4.0), sigma, 0.5)?;
    let dx = grid[1] - grid[0];
    let omean: f64 = grid.iter().zip(&oracle.density).map(|(x, p)| x * p * dx).sum();
    let ovar: f64 = grid
        .iter()
        .zip(&oracle.density)
        .map(|(x, p)| (x - omean) * (x - omean) * p * dx)
        .sum();
    println!("oracle midpoint: mean {omean:.3}, var {ovar:.3}");
    Ok(())
}
