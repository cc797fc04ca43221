use autolabel_core::classify::{
    extract_patch, loss_and_gradient, select_high_quality, Candidate, Classifier, Label, LinearModel, FEATURE_DIM,
};
use autolabel_core::hbb::{iou, Hbb};
use autolabel_core::pipeline::{generate_synthetic, reference_samples, train_classifier, ClassifyConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn selected_set_is_purer_than_rejected_set() {
    let scene = generate_synthetic(5, 20, 0, (768, 768)).unwrap();
    let gts = scene.gts.boxes(&scene.image_id);
    let mut candidates = Vec::new();
    let mut truth = Vec::new();
    for g in gts {
        candidates.push(Candidate {
            id: format!("v{}", candidates.len()),
            hbb: g.clone(),
            patch: extract_patch(&scene.vis, g, "scene").unwrap(),
        });
        truth.push(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    while truth.len() < 40 {
        let b = Hbb::new(rng.gen_range(40.0..728.0), rng.gen_range(40.0..728.0), 50.0, 20.0);
        if gts.iter().all(|g| iou(g, &b) == 0.0) {
            candidates.push(Candidate {
                id: format!("g{}", candidates.len()),
                hbb: b.clone(),
                patch: extract_patch(&scene.vis, &b, "scene").unwrap(),
            });
            truth.push(false);
        }
    }

    // the reference scene is generated from a different seed
    let cfg = ClassifyConfig::default();
    let model = train_classifier(&reference_samples(cfg.seed).unwrap(), &cfg, cfg.seed)
        .unwrap()
        .model;
    let result = select_high_quality(&candidates, &model as &dyn Classifier, 0.9).unwrap();
    let purity = |items: &[autolabel_core::classify::ScoredCandidate]| {
        let hits = items.iter().filter(|s| s.candidate.id.starts_with('v')).count();
        if items.is_empty() {
            0.0
        } else {
            hits as f64 / items.len() as f64
        }
    };
    assert!(!result.selected.is_empty());
    assert!(
        purity(&result.selected) >= purity(&result.rejected),
        "selected {} vs rejected {}",
        purity(&result.selected),
        purity(&result.rejected)
    );
}

proptest! {
    // Saturated predictions lose precision in `1 - p`, which swamps the finite
    // differences, so weights stay moderate.
    #[test]
    fn gradient_matches_finite_differences(
        seed in any::<u64>(),
        n in 1usize..12,
        scale in 0.1f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..FEATURE_DIM).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let y: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.5) { Label::Vehicle } else { Label::NonVehicle }).collect();
        let model = LinearModel {
            weights: (0..FEATURE_DIM).map(|_| rng.gen_range(-scale..scale)).collect(),
            bias: rng.gen_range(-scale..scale),
        };
        let (_, grad) = loss_and_gradient(&model, &x, &y).unwrap();
        let h = 1e-5;
        for i in 0..=FEATURE_DIM {
            let (mut up, mut down) = (model.clone(), model.clone());
            if i < FEATURE_DIM {
                up.weights[i] += h;
                down.weights[i] -= h;
            } else {
                up.bias += h;
                down.bias -= h;
            }
            let numeric = (loss_and_gradient(&up, &x, &y).unwrap().0 - loss_and_gradient(&down, &x, &y).unwrap().0) / (2.0 * h);
            prop_assert!((numeric - grad[i]).abs() <= 1e-6 + 1e-4 * grad[i].abs(), "coordinate {i}: {numeric} vs {}", grad[i]);
        }
    }
}
