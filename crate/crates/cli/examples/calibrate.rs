// Calibration probe for the acceptance-scale configs (temporary).
use std::time::Instant;
use warynav_core::ensemble::EnsembleConfig;
use warynav_core::env::{ObstaclePolicyKind, ScenarioConfig, SpawnLayout};
use warynav_core::eval::{compare_models, format_report_table, EvalConfig};
use warynav_core::policy::CostWeights;
use warynav_core::trainer::{train_loop, LambdaMode, TrainConfig};

fn fixture_train_config(seed: u64, lambda_mode: LambdaMode) -> TrainConfig {
    TrainConfig {
        sessions: 6,
        episodes_per_session: 20,
        epochs_per_session: 6,
        batch_size: 32,
        learning_rate: 1e-3,
        schedule_steps: None,
        lambda_mode,
        seed,
        ensemble: EnsembleConfig::default(),
        weights: CostWeights::default(),
        scenario: ScenarioConfig {
            timeout_steps: 150,
            ..ScenarioConfig::default()
        },
    }
}

fn fig7_config(seed: u64, lambda_mode: LambdaMode, obstacle_distance: f64) -> TrainConfig {
    TrainConfig {
        sessions: 8,
        episodes_per_session: 10,
        epochs_per_session: 6,
        batch_size: 32,
        learning_rate: 1e-3,
        schedule_steps: None,
        lambda_mode,
        seed,
        ensemble: EnsembleConfig::default(),
        weights: CostWeights::default(),
        scenario: ScenarioConfig {
            timeout_steps: if obstacle_distance > 3.0 { 90 } else { 100 },
            layout: SpawnLayout::BlockedGoal { obstacle_distance },
            obstacle_policy: ObstaclePolicyKind::Static,
            ..ScenarioConfig::default()
        },
    }
}

fn main() {
    let stage = std::env::args().nth(1).unwrap_or_else(|| "compare".into());
    match stage.as_str() {
        "compare" => {
            let t0 = Instant::now();
            let aware = train_loop(&fixture_train_config(1001, LambdaMode::Scheduled)).unwrap();
            println!("aware trained in {:.1}s", t0.elapsed().as_secs_f64());
            for m in &aware.metrics {
                println!(
                    "  aware session {}: coll {:.2} goal {:.2} unc {:.3} lambda {:.0} loss {:.3}",
                    m.session, m.collision_rate, m.goal_rate, m.mean_step_uncertainty,
                    m.lambda_v_end, m.mean_loss
                );
            }
            let t1 = Instant::now();
            let unaware = train_loop(&fixture_train_config(
                1001,
                LambdaMode::Constant { value: 0.0 },
            ))
            .unwrap();
            println!("unaware trained in {:.1}s", t1.elapsed().as_secs_f64());
            for m in &unaware.metrics {
                println!(
                    "  unaware session {}: coll {:.2} goal {:.2} unc {:.3} loss {:.3}",
                    m.session, m.collision_rate, m.goal_rate, m.mean_step_uncertainty, m.mean_loss
                );
            }
            let t2 = Instant::now();
            let eval_cfg = EvalConfig::default();
            let base = ScenarioConfig {
                timeout_steps: 150,
                ..ScenarioConfig::default()
            };
            let reports =
                compare_models(&aware.ensemble, &unaware.ensemble, &base, &eval_cfg, 77).unwrap();
            println!("eval in {:.1}s", t2.elapsed().as_secs_f64());
            print!("{}", format_report_table(&reports));
        }
        "fig7" => {
            for seed in [11u64, 12, 13] {
                for (name, distance) in [("near", 1.2), ("far", 5.0)] {
                    let t0 = Instant::now();
                    let inc =
                        train_loop(&fig7_config(seed, LambdaMode::Scheduled, distance)).unwrap();
                    let con = train_loop(&fig7_config(
                        seed,
                        LambdaMode::Constant { value: 200.0 },
                        distance,
                    ))
                    .unwrap();
                    let inc_final = inc.metrics.last().unwrap().collision_rate;
                    let con_final = con.metrics.last().unwrap().collision_rate;
                    println!(
                        "seed {seed} {name}: increasing {:.2} constant {:.2} ({:.1}s)",
                        inc_final,
                        con_final,
                        t0.elapsed().as_secs_f64()
                    );
                    let inc_rates: Vec<f64> =
                        inc.metrics.iter().map(|m| m.collision_rate).collect();
                    let con_rates: Vec<f64> =
                        con.metrics.iter().map(|m| m.collision_rate).collect();
                    println!("    inc sessions: {inc_rates:?}");
                    println!("    con sessions: {con_rates:?}");
                }
            }
        }
        other => eprintln!("unknown stage {other}"),
    }
}
