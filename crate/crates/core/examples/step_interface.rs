//! Tunes a two-parameter toy objective through the step interface.
//!
//! `cargo run --release --example step_interface`

use etso::grid::GridSpec;
use etso::optimizer::{BetaSchedule, EtsoConfig, Event, Optimizer};
use etso::{Candidates, Execution, KernelParams, PolicyKind, TriggerConfig};

fn cost(theta: &[f64], shifted: bool) -> f64 {
    let centre = if shifted { [0.3, 0.7] } else { [0.6, 0.5] };
    let d2 = (theta[0] - centre[0]).powi(2) + (theta[1] - centre[1]).powi(2);
    -1.8 + 1.2 * (-d2 / 0.05).exp()
}

fn main() -> etso::Result<()> {
    let config = EtsoConfig {
        backup: vec![0.5, 0.5],
        learn_rounds: 15,
        beta: BetaSchedule::default(),
        epsilon: 0.2,
        trigger: TriggerConfig::default(),
        kernel: KernelParams::new(vec![0.2, 0.2], 1.0 / 3.0, 0.016, -1.0)?,
        grid: GridSpec {
            bounds: vec![(0.0, 1.0); 2],
            counts: vec![31, 31],
        },
        recompute_safe_set_in_exploit: false,
        expander_candidates: Candidates::Boundary,
        crash_cost: Some(-3.0),
        execution: Execution::Parallel,
    };
    let backup = config.backup.clone();
    let mut opt = Optimizer::initialize(config, PolicyKind::Etso, cost(&backup, false))?;
    for round in 1..=40 {
        let shifted = round > 25;
        let q = opt.next_query()?;
        let j = cost(&q.theta, shifted);
        let events = opt.observe(j)?;
        println!(
            "round {round:2}: {:?} theta [{:.2}, {:.2}] cost {j:.3} safe points {}",
            q.phase, q.theta[0], q.theta[1], q.safe_size
        );
        if events
            .iter()
            .any(|e| matches!(e, Event::ResetRequested { .. }))
        {
            println!("round {round:2}: trigger fired, back to the backup");
            opt.reset_commit(cost(opt.backup_theta(), shifted))?;
        }
    }
    Ok(())
}
