use super::*;
use crate::blockworld::{
    collect_trajectory, sample_scene, PolicyKind, PushDest, SceneParams, ScriptedPolicy,
    Trajectory,
};
use crate::rng::rng_from_seed;
use crate::saqa::{generate, GenerateConfig, NamedTraj};
use rand::Rng;

fn small_bundle(n_trajs: usize, seed0: u64) -> DataBundle {
    let params = SceneParams::default();
    let mut named = Vec::new();
    let mut map = std::collections::BTreeMap::new();
    for k in 0..n_trajs as u64 {
        let seed = seed0 + k;
        let scene = sample_scene(&params, seed);
        let kind = match k % 3 {
            0 => PolicyKind::Random,
            1 => PolicyKind::Reach { target: (k as usize) % 3 },
            _ => PolicyKind::PushTo { block: (k as usize) % 3, dest: PushDest::Block(((k as usize) + 1) % 3) },
        };
        let mut p = ScriptedPolicy::new(kind, &scene.initial_state(), seed).unwrap();
        let traj: Trajectory = collect_trajectory(&scene, seed, &mut p, 25);
        let id = format!("t{seed:04}");
        map.insert(id.clone(), traj.clone());
        named.push(NamedTraj { id, traj });
    }
    let recs = generate(&named, &GenerateConfig::default()).unwrap();
    DataBundle::build(recs, &map, &Vocabulary::build()).unwrap()
}

#[test]
fn ci_formula_matches_closed_form() {
    // 50/50 successes -> 100% +- 0; 25/50 -> 50% +- 13.9 points.
    assert_eq!(normal_ci95(1.0, 50), 0.0);
    let ci = normal_ci95(0.5, 50) * 100.0;
    assert!((ci - 13.859).abs() < 0.01, "{ci}");
}

#[test]
fn seed_range_overlap_detected() {
    assert!(check_seed_ranges(&[("train", 0..300), ("eval", 6000..6050)]).is_ok());
    assert!(check_seed_ranges(&[("train", 0..300), ("eval", 200..400)]).is_err());
    assert!(check_seed_ranges(&[("a", 0..10), ("b", 10..20), ("c", 5..8)]).is_err());
}

#[test]
fn oracle_stub_scores_perfectly() {
    let data = small_bundle(3, 900);
    let indices = eval_subset(data.len(), 500, 1);
    let predicted: Vec<bool> = indices.iter().map(|&i| data.records[i].answer).collect();
    let report = score_predictions(&data, &indices, &predicted).unwrap();
    assert_eq!(report.overall, 1.0);
    for (_, acc) in &report.per_type {
        assert_eq!(*acc, 1.0);
    }
}

#[test]
fn uniform_stub_is_at_chance_on_balanced_subset() {
    let data = small_bundle(6, 950);
    let indices = balanced_indices(&data, 400, 3);
    assert!(indices.len() > 2000, "{}", indices.len());
    let mut rng = rng_from_seed(7);
    let predicted: Vec<bool> = indices.iter().map(|_| rng.gen_bool(0.5)).collect();
    let report = score_predictions(&data, &indices, &predicted).unwrap();
    assert!((report.overall - 0.5).abs() < 0.02, "chance-level accuracy {}", report.overall);
}

#[test]
fn per_horizon_buckets_cover_range() {
    let data = small_bundle(4, 980);
    let indices: Vec<usize> = (0..data.len()).collect();
    let predicted: Vec<bool> = indices.iter().map(|&i| data.records[i].answer).collect();
    let report = score_predictions(&data, &indices, &predicted).unwrap();
    assert!(report.per_horizon.contains_key("0"));
    assert!(report.per_horizon.len() >= 3);
}

#[test]
fn planning_eval_aggregates_and_ci() {
    let seeds: Vec<u64> = (0..50).collect();
    let eval = eval_planning("toy", &seeds, |seed| {
        Ok(EpisodeSummary {
            seed,
            success: seed % 2 == 0,
            steps: 10,
            rounds: 2,
            forward_passes: 4,
            backward_passes: 0,
        })
    })
    .unwrap();
    assert_eq!(eval.successes, 25);
    assert!((eval.rate - 0.5).abs() < 1e-9);
    assert!((eval.ci95 * 100.0 - 13.859).abs() < 0.01);
    assert_eq!(eval.episodes.len(), 50);
}

#[test]
fn bench_report_orders_passes() {
    let r = bench_report(&[0.4, 0.5, 0.6], (256, 0), &[0.1, 0.2, 0.15], (20, 10));
    assert!(r.grad_fewer_passes);
    assert!(r.grad_faster_wall);
    assert_eq!(r.mppi.median_secs_per_chunk, 0.5);
}

#[test]
fn eval_is_deterministic() {
    let data = small_bundle(3, 990);
    let cfg = ModelConfig {
        d_tok: 32,
        d_img: 16,
        n_layers: 1,
        n_heads: 2,
        d_mlp: 64,
        max_question_len: 14,
        ..ModelConfig::default()
    };
    let model = Model::init(cfg, Vocabulary::build(), 4).unwrap();
    let a = eval_future_qa(&model, &data, 300, 9).unwrap();
    let b = eval_future_qa(&model, &data, 300, 9).unwrap();
    assert_eq!(a.overall, b.overall);
    assert_eq!(a.per_type, b.per_type);
}
