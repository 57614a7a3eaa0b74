use super::*;
use crate::blockworld::{render, sample_scene, SceneParams};
use crate::model::{ModelConfig, Vocabulary};
use crate::rng::rng_from_seed;
use rand::Rng;

fn tiny_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        d_tok: 32,
        d_img: 16,
        n_layers: 2,
        n_heads: 2,
        d_mlp: 64,
        max_question_len: 14,
        ..ModelConfig::default()
    };
    Model::init(cfg, Vocabulary::build(), seed).unwrap()
}

fn demo_image(seed: u64) -> Image {
    render(&sample_scene(&SceneParams::default(), seed).initial_state())
}

fn rand_actions(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Action> {
    (0..n).map(|_| Action::clamped(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03))).collect()
}

fn reach_task() -> TaskSpec {
    TaskSpec {
        name: "reach".into(),
        items: vec![
            QaItem {
                question: "is the robotic peg touching the red cube?".into(),
                answer: "yes".into(),
                weight: 0.8,
            },
            QaItem {
                question: "is the robotic peg closer to the red cube?".into(),
                answer: "yes".into(),
                weight: 0.2,
            },
        ],
        subgoals: vec![],
    }
}

#[test]
fn single_item_identity_weight_passes_through() {
    let m = tiny_model(1);
    let img = demo_image(2);
    let mut rng = rng_from_seed(3);
    let acts = rand_actions(4, &mut rng);
    let task = TaskSpec {
        name: "t".into(),
        items: vec![QaItem {
            question: "did the red cube move?".into(),
            answer: "yes".into(),
            weight: 1.0,
        }],
        subgoals: vec![],
    };
    let v = value(&m, &img, &acts, &task).unwrap();
    let p = crate::model::answer_likelihood(&m, &img, &acts, "did the red cube move?", "yes")
        .unwrap();
    assert_eq!(v, p);
}

#[test]
fn reach_weights_combine_linearly() {
    // Weights (0.8, 0.2) with likelihoods (p1, p2) give 0.8 p1 + 0.2 p2.
    let m = tiny_model(4);
    let img = demo_image(5);
    let mut rng = rng_from_seed(6);
    let acts = rand_actions(6, &mut rng);
    let task = reach_task();
    let p1 = crate::model::answer_likelihood(&m, &img, &acts, &task.items[0].question, "yes").unwrap();
    let p2 = crate::model::answer_likelihood(&m, &img, &acts, &task.items[1].question, "yes").unwrap();
    let v = value(&m, &img, &acts, &task).unwrap();
    assert!((v - (0.8 * p1 + 0.2 * p2)).abs() < 1e-6);
}

#[test]
fn all_zero_weights_give_zero() {
    let m = tiny_model(7);
    let img = demo_image(8);
    let mut task = reach_task();
    for item in task.items.iter_mut() {
        item.weight = 0.0;
    }
    let v = value(&m, &img, &[], &task).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn chunked_with_c_equal_n_reduces_to_vanilla_bit_exactly() {
    let m = tiny_model(9);
    let task = reach_task();
    let mut rng = rng_from_seed(10);
    for trial in 0..10 {
        let img = demo_image(100 + trial);
        let n = rng.gen_range(1..=12);
        let acts = rand_actions(n, &mut rng);
        let a = chunked_value(&m, &img, &acts, &task, n).unwrap();
        let b = value(&m, &img, &acts, &task).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "trial {trial}");
    }
}

#[test]
fn chunk_prefix_layout() {
    assert_eq!(chunk_prefixes(16, 8).unwrap(), vec![8, 16]);
    assert_eq!(chunk_prefixes(4, 1).unwrap(), vec![1, 2, 3, 4]);
    assert_eq!(chunk_prefixes(10, 4).unwrap(), vec![4, 8, 10]); // partial tail
    assert_eq!(chunk_prefixes(0, 8).unwrap(), vec![0]); // zero-horizon
    assert!(chunk_prefixes(16, 0).is_err());
}

#[test]
fn chunked_value_sums_prefix_scores() {
    let m = tiny_model(11);
    let img = demo_image(12);
    let mut rng = rng_from_seed(13);
    let acts = rand_actions(16, &mut rng);
    let task = TaskSpec {
        name: "t".into(),
        items: vec![QaItem {
            question: "is the red cube in the center of the board?".into(),
            answer: "yes".into(),
            weight: 1.0,
        }],
        subgoals: vec![],
    };
    let v = chunked_value(&m, &img, &acts, &task, 8).unwrap();
    let p8 = crate::model::answer_likelihood(&m, &img, &acts[..8], &task.items[0].question, "yes").unwrap();
    let p16 = crate::model::answer_likelihood(&m, &img, &acts, &task.items[0].question, "yes").unwrap();
    assert!((v - (p8 + p16)).abs() < 1e-5);
}

#[test]
fn batched_matches_scalar_bit_exactly() {
    let m = tiny_model(14);
    let img = demo_image(15);
    let task = reach_task();
    let mut rng = rng_from_seed(16);
    let candidates: Vec<Vec<Action>> = (0..16).map(|_| rand_actions(8, &mut rng)).collect();
    let batch = batched_values(&m, &img, &candidates, &task, 4).unwrap();
    for (k, cand) in candidates.iter().enumerate() {
        let s = chunked_value(&m, &img, cand, &task, 4).unwrap();
        assert_eq!(batch[k].to_bits(), s.to_bits(), "candidate {k}");
    }
    assert!(batched_values(&m, &img, &[], &task, 4).unwrap().is_empty());
    let mixed = vec![rand_actions(4, &mut rng), rand_actions(5, &mut rng)];
    assert!(batched_values(&m, &img, &mixed, &task, 4).is_err());
}

#[test]
fn weight_scaling_is_linear_and_argmax_invariant() {
    let m = tiny_model(17);
    let img = demo_image(18);
    let task = reach_task();
    let mut scaled = task.clone();
    for item in scaled.items.iter_mut() {
        item.weight *= 3.5;
    }
    let mut rng = rng_from_seed(19);
    let candidates: Vec<Vec<Action>> = (0..8).map(|_| rand_actions(8, &mut rng)).collect();
    let base = batched_values(&m, &img, &candidates, &task, 8).unwrap();
    let big = batched_values(&m, &img, &candidates, &scaled, 8).unwrap();
    for (a, b) in base.iter().zip(&big) {
        assert!((b - 3.5 * a).abs() < 1e-5);
    }
    let argmax = |vs: &[f32]| {
        vs.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
    };
    assert_eq!(argmax(&base), argmax(&big));
}

#[test]
fn value_bounds_hold() {
    let m = tiny_model(20);
    let img = demo_image(21);
    let task = reach_task();
    let wsum = task.total_weight();
    let mut rng = rng_from_seed(22);
    for _ in 0..5 {
        let acts = rand_actions(16, &mut rng);
        let v = value(&m, &img, &acts, &task).unwrap();
        assert!(v >= 0.0 && v <= wsum + 1e-6);
        let cv = chunked_value(&m, &img, &acts, &task, 8).unwrap();
        assert!(cv >= 0.0 && cv <= 2.0 * wsum + 1e-6); // n/c = 2 prefixes
    }
}

#[test]
fn scorer_counts_passes_exactly() {
    let m = tiny_model(23);
    let img = demo_image(24);
    let task = reach_task(); // k = 2 items
    let scorer = TaskScorer::new(&m, img, task, 8).unwrap();
    let mut rng = rng_from_seed(25);
    let acts = rand_actions(16, &mut rng);
    scorer.score(&acts).unwrap(); // prefixes {8,16} x 2 items = 4 forwards
    assert_eq!(scorer.forward_passes(), 4);
    assert_eq!(scorer.backward_passes(), 0);
    scorer.score_with_grad(&acts).unwrap();
    assert_eq!(scorer.forward_passes(), 8);
    assert_eq!(scorer.backward_passes(), 1);
}

#[test]
fn task_spec_validation_and_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let task = reach_task();
    let path = dir.path().join("reach.json");
    task.save(&path).unwrap();
    let back = TaskSpec::load(&path).unwrap();
    assert_eq!(back, task);

    let bad = TaskSpec {
        name: "bad".into(),
        items: vec![QaItem { question: "q?".into(), answer: "maybe".into(), weight: 1.0 }],
        subgoals: vec![],
    };
    assert!(bad.validate().is_err());
    let empty = TaskSpec { name: "e".into(), items: vec![], subgoals: vec![] };
    assert!(empty.validate().is_err());
}
