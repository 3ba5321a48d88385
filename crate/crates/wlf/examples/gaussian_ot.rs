//! Learn the optimal transport between two Gaussians and compare the trained
//! dual value with the closed-form Bures oracle.
//!
//!   cargo run --release --example gaussian_ot

use ndarray::Array2;
use wlf::dataio::{synth, SynthKind};
use wlf::field::FieldSpec;
use wlf::pathmodel::PathSpec;
use wlf::trainer::{estimate_dual, train, TrainConfig};
use wlf::transport_eval::{gaussian_w2, simulate, straightness, SimMode};

fn main() -> wlf::Result<()> {
    let shift = vec![3.0, 0.0];
    let dataset = synth(
        &SynthKind::GaussianShift {
            a: shift.clone(),
            std: 1.0,
        },
        7,
        2048,
    )?;

    let problem = wlf::hamiltonians::ProblemSpec::w2();
    let cfg = TrainConfig {
        iterations: 5000,
        batch_size: 256,
        refine_steps: 8,
        eval_every: 500,
        lr_theta: 4e-3,
        lr_eta: 6e-3,
        theta_steps_per_eta: 3,
        lr_final_factor: 0.01,
        average_last: 1200,
        ..Default::default()
    };
    println!("training {} iterations...", cfg.iterations);
    let mut field_spec = FieldSpec::new(2, vec![32, 32]);
    field_spec.time_embedding = wlf::field::TimeEmbedding::Sinusoidal { frequencies: 3 };
    let result = train(&problem, &dataset, &field_spec, &PathSpec::new(2, vec![32, 32]), &cfg)?;

    let mut dual = 0.0;
    for seed in 0..4 {
        dual += estimate_dual(&problem, &result.field, &result.path, &dataset, 2048, seed)?
            .dual_estimate;
    }
    dual /= 4.0;
    let eye = Array2::from_diag_elem(2, 1.0);
    let oracle = gaussian_w2(&[0.0, 0.0], &eye, &shift, &eye)?;
    println!("trained dual:     {dual:.4}");
    println!("oracle (half W2^2): {:.4}", oracle / 2.0);

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let x0 = dataset.draw(0, 128, &mut rng);
    let bundle = simulate(&problem, &result.field, &x0, 100, SimMode::Ode, 0)?;
    println!("trajectory straightness: {:.5}", straightness(&bundle)?);
    Ok(())
}
