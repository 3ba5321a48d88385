//! Unbalanced transport: the mass of two components changes between the
//! endpoint marginals, which plain transport must pay for in movement while
//! the Wasserstein-Fisher-Rao metric can create and destroy mass instead.
//! Growth gets cheaper as lambda grows, so the trained actions decrease with
//! lambda, with the plain transport action as the expensive reference point.
//!
//!   cargo run --release --example unbalanced_ot

use wlf::dataio::{synth, SynthKind};
use wlf::field::FieldSpec;
use wlf::hamiltonians::ProblemSpec;
use wlf::pathmodel::PathSpec;
use wlf::trainer::{estimate_dual, train, TrainConfig};

fn main() -> wlf::Result<()> {
    let dataset = synth(
        &SynthKind::MassChange {
            separation: 4.0,
            dim: 1,
            w0: 0.75,
            w1: 0.25,
            std: 0.25,
        },
        5,
        512,
    )?;

    let field_spec = FieldSpec::new(1, vec![24, 24]);
    let path_spec = PathSpec::new(1, vec![16]);
    let cfg = TrainConfig {
        iterations: 1200,
        batch_size: 128,
        refine_steps: 1,
        eval_every: 300,
        ..Default::default()
    };

    for lambda in [0.25, 1.0, 4.0] {
        let problem = ProblemSpec::wfr(lambda);
        let run = train(&problem, &dataset, &field_spec, &path_spec, &cfg)?;
        let dual = estimate_dual(&problem, &run.field, &run.path, &dataset, 1024, 0)?;
        println!("WFR(lambda = {lambda:>4}): action {:.4}", dual.dual_estimate);
    }

    let w2 = ProblemSpec::w2();
    let run = train(&w2, &dataset, &field_spec, &path_spec, &cfg)?;
    let dual = estimate_dual(&w2, &run.field, &run.path, &dataset, 1024, 0)?;
    println!("W2 (no growth):   action {:.4}", dual.dual_estimate);
    Ok(())
}
