//! Library results against the straight-line references in `common`, on
//! randomly generated fixtures.

mod common;

use coft::labels::{select_top_k, zero_shot_probs, Generator, LabelStatus, PseudoLabel, PseudoLabelSet};
use coft::math::Vector;
use coft::rng::SeededRng;
use coft::train::{
    clean_probability, collaborative_filter, contrastive_loss_fixed, fft_loss, loss_negative_with, loss_positive,
    ContrastiveViews, KeyQueue, ModelId,
};

const FIXTURES: usize = 100;
const TOL: f64 = 1e-12;

fn fixture_rng(name: &str) -> SeededRng {
    SeededRng::new(2024).split(name)
}

#[test]
fn zero_shot_probabilities() {
    let mut rng = fixture_rng("zero-shot");
    for _ in 0..FIXTURES {
        let classes = 2 + rng.below(6);
        let dim = 2 + rng.below(15);
        let provider = common::random_provider(&mut rng, 4, classes, dim, dim);
        let text: Vec<Vector<f64>> = (0..classes)
            .map(|_| Vector::new(common::random_unit(&mut rng, dim)).unwrap())
            .collect();
        let tau = 0.05 + rng.uniform::<f64>();
        for id in 0..4 {
            let got = zero_shot_probs(&provider, id, tau, &text).unwrap();
            let want = common::zero_shot_probs(provider.embedding(id).unwrap(), &text, tau);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= TOL, "{g} vs {w}");
            }
        }
    }
}

#[test]
fn clean_probability_matches_two_way_softmax() {
    let mut rng = fixture_rng("clean-probability");
    for _ in 0..FIXTURES {
        let classes = 2 + rng.below(4);
        let dim = 2 + rng.below(15);
        let ctx = 1 + rng.below(dim);
        let provider = common::random_provider(&mut rng, 3, classes, dim, ctx);
        let tau = 0.07 + rng.uniform::<f64>();
        let model = common::random_model(ModelId::Model1, &mut rng, dim, ctx, tau);
        for id in 0..3 {
            let label = rng.below(classes);
            let got = clean_probability(&model, &provider, id, label).unwrap();
            let want = common::clean_probability(&model, &provider, id, label);
            assert!((got - want).abs() <= TOL, "{got} vs {want}");
        }
    }
}

#[test]
fn positive_loss() {
    let mut rng = fixture_rng("l1");
    for _ in 0..FIXTURES {
        let classes = 2 + rng.below(4);
        let dim = 2 + rng.below(15);
        let ctx = 1 + rng.below(dim);
        let n = 1 + rng.below(8);
        let provider = common::random_provider(&mut rng, n, classes, dim, ctx);
        let tau = 0.07 + rng.uniform::<f64>();
        let mut model = common::random_model(ModelId::Model1, &mut rng, dim, ctx, tau);
        let batch = common::random_labels(&mut rng, n, classes, LabelStatus::Candidate);
        let want = common::l1(&model, &provider, &batch);
        let got = loss_positive(&mut model, &provider, &batch).unwrap();
        assert!(common::close(got, want, TOL), "{got} vs {want}");
    }
}

#[test]
fn negative_loss() {
    let mut rng = fixture_rng("l2");
    for _ in 0..FIXTURES {
        let classes = 2 + rng.below(4);
        let dim = 2 + rng.below(15);
        let ctx = 1 + rng.below(dim);
        let n = 1 + rng.below(8);
        let provider = common::random_provider(&mut rng, n, classes, dim, ctx);
        let tau = 0.07 + rng.uniform::<f64>();
        let mut model = common::random_model(ModelId::Model2, &mut rng, dim, ctx, tau);
        let batch = common::random_labels(&mut rng, n, classes, LabelStatus::Candidate);
        let comp = common::complements(&mut rng, &batch, classes);
        let want = common::l2(&model, &provider, &batch, &comp);
        let got = loss_negative_with(&mut model, &provider, &batch, &comp).unwrap();
        assert!(common::close(got, want, TOL), "{got} vs {want}");
    }
}

#[test]
fn supervised_fine_tuning_loss() {
    let mut rng = fixture_rng("fft");
    for _ in 0..FIXTURES {
        let classes = 2 + rng.below(4);
        let dim = 2 + rng.below(15);
        let n = 1 + rng.below(8);
        let provider = common::random_provider(&mut rng, n, classes, dim, dim);
        let hidden = 1 + rng.below(2 * dim);
        let mut student = common::random_student(&mut rng, dim, hidden, classes);
        let batch = common::random_labels(&mut rng, n, classes, LabelStatus::Clean);
        let want = common::fft_loss(&student, &provider, &batch);
        let got = fft_loss(&mut student, &provider, &batch).unwrap();
        assert!(common::close(got, want, TOL), "{got} vs {want}");
    }
}

#[test]
fn contrastive_loss_with_queue_of_eight() {
    let mut rng = fixture_rng("contrastive");
    for _ in 0..FIXTURES {
        let dim = 2 + rng.below(15);
        let n = 1 + rng.below(8);
        let hidden = 1 + rng.below(2 * dim);
        let mut student = common::random_student(&mut rng, dim, hidden, 2);
        let views = ContrastiveViews {
            query_inputs: (0..n).map(|_| common::random_unit(&mut rng, dim)).collect(),
            keys: (0..n).map(|_| common::random_unit(&mut rng, dim)).collect(),
        };
        let negatives: Vec<Vec<f64>> = (0..8).map(|_| common::random_unit(&mut rng, dim)).collect();
        let mut queue = KeyQueue::new(8);
        queue.push_batch(negatives.clone());
        let tau = 0.1 + rng.uniform::<f64>();
        let queries: Vec<Vec<f64>> = views
            .query_inputs
            .iter()
            .map(|x| common::unit(&common::encode(&student, x)))
            .collect();
        let want = common::info_nce(&queries, &views.keys, &negatives, tau);
        let got = contrastive_loss_fixed(&mut student.encoder, &views, &queue, tau, 1.0).unwrap();
        assert!(common::close(got, want, TOL), "{got} vs {want}");
    }
}

#[test]
fn top_k_selection_is_sort_and_slice() {
    let mut rng = fixture_rng("top-k");
    for _ in 0..FIXTURES {
        let classes = 1 + rng.below(6);
        let k = 1 + rng.below(5);
        let n = 1 + rng.below(200);
        let records: Vec<PseudoLabel> = (0..n)
            .map(|id| PseudoLabel {
                sample_id: id,
                label: rng.below(classes),
                // coarse confidences so that ties occur
                confidence: (1 + rng.below(10)) as f64 / 10.0,
                generator: Generator::Zeroshot,
                status: LabelStatus::Candidate,
            })
            .collect();
        let got = select_top_k(&PseudoLabelSet::from_records(records.clone()), k, classes).unwrap();
        let got: Vec<usize> = got.selected.iter().map(|r| r.sample_id).collect();
        assert_eq!(got, common::top_k(&records, k));
    }
}

#[test]
fn collaborative_filter_partition() {
    let mut rng = fixture_rng("filter");
    for _ in 0..FIXTURES {
        let classes = 2 + rng.below(4);
        let dim = 2 + rng.below(15);
        let ctx = 1 + rng.below(dim);
        let n = 1 + rng.below(20);
        let provider = common::random_provider(&mut rng, n, classes, dim, ctx);
        let mut m1 = common::random_model(ModelId::Model1, &mut rng, dim, ctx, 0.1);
        let mut m2 = common::random_model(ModelId::Model2, &mut rng, dim, ctx, 0.1);
        m1.trained = true;
        m2.trained = true;
        let ids: Vec<usize> = (0..n).collect();
        for (g, v) in [(&m1, &m2), (&m2, &m1)] {
            let got = collaborative_filter(g, v, &provider, &ids).unwrap();
            let want = common::filter(g, v, &provider);
            assert_eq!(got.labels.len(), n);
            for r in got.labels.iter() {
                let (y, keep) = want[r.sample_id];
                assert_eq!(r.label, y);
                assert_eq!(r.status == LabelStatus::Clean, keep);
                assert!(matches!(r.status, LabelStatus::Clean | LabelStatus::Noise));
            }
        }
    }
}

#[test]
fn filter_on_sixty_synthetic_samples() {
    use coft::data::{generate_synthetic, SyntheticSpec};
    let data = generate_synthetic(&SyntheticSpec {
        classes: 4,
        per_class: 15,
        dim: 12,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let provider = data.dataset.to_provider::<f64>(12, 9).unwrap();
    let mut rng = fixture_rng("filter-60");
    let mut m1 = common::random_model(ModelId::Model1, &mut rng, 12, 12, 0.07);
    let mut m2 = common::random_model(ModelId::Model2, &mut rng, 12, 12, 0.07);
    m1.trained = true;
    m2.trained = true;
    let ids = provider.sample_ids();
    assert_eq!(ids.len(), 60);
    let got = collaborative_filter(&m1, &m2, &provider, &ids).unwrap();
    let want = common::filter(&m1, &m2, &provider);
    let clean: Vec<usize> = got.clean().iter().map(|r| r.sample_id).collect();
    let noise: Vec<usize> = got.noise().iter().map(|r| r.sample_id).collect();
    let want_clean: Vec<usize> = (0..60).filter(|&i| want[i].1).collect();
    let want_noise: Vec<usize> = (0..60).filter(|&i| !want[i].1).collect();
    assert_eq!(clean, want_clean);
    assert_eq!(noise, want_noise);
}
