mod support;

use dsk_core::features::FeatureVector;
use dsk_core::joint::JointEmbeddingModel;
use dsk_core::numerics::{Rng, Vector};
use dsk_core::retrieval::{build_index, search, IndexInput, IndexMode};
use proptest::prelude::*;

/// Small integer coordinates so that exact distance ties are common.
fn int_vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.below(5) as f64 - 2.0).collect()
}

fn random_inputs(rng: &mut Rng, n: usize, d: usize, captions: usize) -> Vec<IndexInput> {
    (0..n)
        .map(|i| IndexInput {
            // Ids deliberately not in insertion order.
            image_id: format!("img{:04}", (i * 7919) % 10007),
            image_feature: Some(int_vector(rng, d).into()),
            captions: (0..captions)
                .map(|c| (format!("caption {c} of {i}"), FeatureVector::from(int_vector(rng, d))))
                .collect(),
            uri: None,
        })
        .collect()
}

fn oracle_items(inputs: &[IndexInput], mode: IndexMode) -> Vec<(String, Vec<Vec<f64>>)> {
    inputs
        .iter()
        .map(|inp| {
            let vectors = match mode {
                IndexMode::EmbeddingSpace => vec![inp.image_feature.as_ref().unwrap().as_slice().to_vec()],
                IndexMode::CaptionBased => inp.captions.iter().map(|(_, u)| u.as_slice().to_vec()).collect(),
            };
            (inp.image_id.clone(), vectors)
        })
        .collect()
}

fn assert_matches_oracle(inputs: &[IndexInput], mode: IndexMode, d: usize, rng: &mut Rng, k: usize) {
    let model = JointEmbeddingModel::identity(d);
    let index = build_index(mode, &model, inputs).unwrap();
    let items = oracle_items(inputs, mode);
    let q = int_vector(rng, d);
    let got = search(&index, &Vector::from(q.clone()), k).unwrap();
    let want = support::brute_force_topk(&q, &items, k);
    assert_eq!(got.ranked.len(), want.len());
    for (hit, (id, dist, caption)) in got.ranked.iter().zip(&want) {
        assert_eq!(&hit.image_id, id);
        assert_eq!(hit.distance, *dist);
        if mode == IndexMode::CaptionBased {
            let input = inputs.iter().find(|i| &i.image_id == id).unwrap();
            assert_eq!(hit.best_caption.as_deref(), Some(input.captions[*caption].0.as_str()));
        }
    }
}

#[test]
fn n200_d8_matches_brute_force() {
    let mut rng = Rng::new(2024);
    let inputs = random_inputs(&mut rng, 200, 8, 0);
    for k in [1, 5, 17, 200, 500] {
        assert_matches_oracle(&inputs, IndexMode::EmbeddingSpace, 8, &mut rng, k);
    }
}

#[test]
fn caption_mode_matches_per_caption_scan() {
    let mut rng = Rng::new(7);
    let inputs = random_inputs(&mut rng, 60, 4, 5);
    for k in [1, 5, 60] {
        assert_matches_oracle(&inputs, IndexMode::CaptionBased, 4, &mut rng, k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exactness_on_random_instances(seed in any::<u64>(), n in 0usize..500, d in 1usize..32, k in 1usize..600, caption_mode in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let mode = if caption_mode { IndexMode::CaptionBased } else { IndexMode::EmbeddingSpace };
        let captions = if caption_mode { 1 + rng.below(4) as usize } else { 0 };
        let inputs = random_inputs(&mut rng, n, d, captions);
        assert_matches_oracle(&inputs, mode, d, &mut rng, k);
    }

    #[test]
    fn result_shape_and_metric(seed in any::<u64>(), n in 1usize..100, d in 1usize..16, k in 1usize..120) {
        let mut rng = Rng::new(seed);
        let model = dsk_core::joint::init_model(d, d, d, seed).unwrap();
        let inputs: Vec<IndexInput> = (0..n)
            .map(|i| IndexInput {
                image_id: format!("{i}"),
                image_feature: Some((0..d).map(|_| rng.normal()).collect::<Vec<_>>().into()),
                captions: vec![],
                uri: None,
            })
            .collect();
        let index = build_index(IndexMode::EmbeddingSpace, &model, &inputs).unwrap();
        let q: Vector = (0..d).map(|_| rng.normal()).collect::<Vec<_>>().into();
        let r = search(&index, &q, k).unwrap();
        prop_assert_eq!(r.ranked.len(), k.min(n));
        let mut seen = std::collections::BTreeSet::new();
        for w in r.ranked.windows(2) {
            prop_assert!(w[0].distance <= w[1].distance);
        }
        for hit in &r.ranked {
            prop_assert!(seen.insert(hit.image_id.clone()));
            let e = &index.get(&hit.image_id).unwrap().embedding;
            let direct: f64 = q.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!((hit.distance - direct).abs() <= 1e-9);
        }
    }
}
