//! Action of a fixed path: freeze the path model and keep only the sup over
//! the dual field, recovering the action of the given density curve. The
//! optimal (straight) displacement of a point mass by `a` costs ½‖a‖², so a
//! frozen random interpolant should come out somewhat above that bound.
//!
//!   cargo run --release --example action_matching

use wlf::dataio::{synth, SynthKind};
use wlf::field::FieldSpec;
use wlf::hamiltonians::ProblemSpec;
use wlf::pathmodel::{init_path_params, PathSpec};
use wlf::trainer::{action_of_path, TrainConfig};

fn main() -> wlf::Result<()> {
    let a = vec![2.0, -1.0];
    let dataset = synth(
        &SynthKind::GaussianShift {
            a: a.clone(),
            std: 0.05,
        },
        13,
        512,
    )?;
    let path = init_path_params(&PathSpec::new(2, vec![16]), 0)?;
    let cfg = TrainConfig {
        iterations: 1500,
        batch_size: 128,
        eval_every: 300,
        ..Default::default()
    };
    println!("estimating the action of the frozen interpolant path...");
    let (action, _) = action_of_path(
        &ProblemSpec::w2(),
        &dataset,
        &path,
        &FieldSpec::new(2, vec![24, 24]),
        &cfg,
    )?;
    let expect = 0.5 * a.iter().map(|v| v * v).sum::<f64>();
    println!("estimated action of the frozen path: {action:.4}");
    println!("lower bound (optimal straight path): {expect:.4}");
    Ok(())
}
