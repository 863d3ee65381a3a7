use reliqa::predictor::{predict_map, train_predictor, PredictorModel, TrainConfig};
use reliqa::scorer::{eval_ranking, train_scorer, ScorerConfig, ScorerModel};
use reliqa::synth::{
    build_tier_schedule, generate_triplets, load_tier_set, read_dataset, scene_for_item, write_dataset,
    write_tier_dataset, Engine, ReferenceSource,
};
use reliqa::{DistortionBank, Rng};
use tempfile::TempDir;

#[test]
fn disk_round_trips_preserve_training_and_scoring() {
    let tmp = TempDir::new().unwrap();
    let src = ReferenceSource::Procedural { height: 24, width: 24, semantic: true };
    let triplets = generate_triplets(&Engine::default(), &src, 21, 10, 0.25).unwrap();
    write_dataset(&triplets, tmp.path().join("ds")).unwrap();
    let loaded = read_dataset(tmp.path().join("ds")).unwrap();
    assert!(loaded.errors.is_empty());
    let reread: Vec<_> = loaded.items.into_iter().map(|(_, t)| t).collect();
    for (a, b) in reread.iter().zip(&triplets) {
        assert_eq!((&a.target, &a.masks, &a.assignments, a.swapped), (&b.target, &b.masks, &b.assignments, b.swapped));
        // Images are stored as 8-bit PNG; pristine scenes are already on that grid.
        for (x, y) in [(&a.reference, &b.reference), (&a.test, &b.test)] {
            let worst = x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
            assert!(worst <= 0.5 / 255.0 + 1e-6, "{worst}");
        }
        assert_eq!(a.pristine(), b.pristine());
    }

    let cfg = TrainConfig {
        epochs: 2,
        pixels_per_step: 128,
        ..Default::default()
    };
    let (model, _) = train_predictor(&reread, &cfg).unwrap();
    model.save(tmp.path().join("pm")).unwrap();
    let back = PredictorModel::load(tmp.path().join("pm")).unwrap();
    let t = &triplets[0];
    assert_eq!(
        predict_map(&back, &t.test, &t.reference).unwrap(),
        predict_map(&model, &t.test, &t.reference).unwrap()
    );

    let (images, masks): (Vec<_>, Vec<_>) = (0..4)
        .map(|i| {
            let s = scene_for_item(5, i, 24, 24);
            let m = s.masks().unwrap();
            (s.image, m)
        })
        .unzip();
    let tiers = build_tier_schedule(&DistortionBank::default(), &images, &[0.3, 0.6, 0.9], &masks, &mut Rng::new(1)).unwrap();
    write_tier_dataset(&tiers, tmp.path().join("tiers")).unwrap();
    let tiers_back = load_tier_set(tmp.path().join("tiers")).unwrap();
    assert_eq!((&tiers_back.alphas, tiers_back.base_seed), (&tiers.alphas, tiers.base_seed));
    for (a, b) in tiers_back.scenes.iter().zip(&tiers.scenes) {
        assert_eq!((&a.masks, &a.draws, &a.images[0]), (&b.masks, &b.draws, &b.images[0]));
        for (x, y) in a.images.iter().zip(&b.images) {
            let worst = x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
            assert!(worst <= 0.5 / 255.0 + 1e-6, "{worst}");
        }
    }

    let scfg = ScorerConfig {
        epochs: 30,
        ..Default::default()
    };
    let (scorer, report) = train_scorer(&tiers_back, &back, &scfg).unwrap();
    assert!(report.epoch_losses.last() < report.epoch_losses.first());
    scorer.save(tmp.path().join("sm")).unwrap();
    let scorer_back = ScorerModel::load(tmp.path().join("sm")).unwrap();
    assert_eq!(
        eval_ranking(&scorer_back, &back, &tiers_back).unwrap(),
        eval_ranking(&scorer, &model, &tiers_back).unwrap()
    );
}
