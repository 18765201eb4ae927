mod common;

use fgboost::spaces::{EuclideanSpace, LaplacianSpace, SphereSpace, WassersteinSpace};
use fgboost::{fit, BoostParams, GeodesicSpace, ModelFile, TreeParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(rng: &mut ChaCha8Rng) -> BoostParams {
    BoostParams {
        learning_rate: rng.random_range(0.05..0.5),
        n_iterations: rng.random_range(1..=12),
        tree: TreeParams {
            max_depth: rng.random_range(1..=3),
            min_samples_leaf: rng.random_range(1..=4),
            ..TreeParams::default()
        },
        seed: rng.random(),
        ..BoostParams::default()
    }
}

/// Fits, saves, reloads and checks that predictions agree bit for bit.
fn round_trip<S, F>(space: S, rng: &mut ChaCha8Rng, draw: F)
where
    S: GeodesicSpace,
    F: Fn(&S, &mut ChaCha8Rng) -> S::Point,
{
    let n = 40;
    let p = rng.random_range(1..=4);
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
    let y: Vec<S::Point> = (0..n).map(|_| draw(&space, rng)).collect();
    let bp = params(rng);
    let model = fit(&space, x.view(), &y, &bp).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let file = ModelFile::from_ensemble(&model, Some(bp));
    file.save(&path).unwrap();
    let loaded_file = ModelFile::load(&path).unwrap();
    assert_eq!(loaded_file, file);
    let loaded = loaded_file.into_ensemble(space.clone()).unwrap();

    let x_new = Array2::from_shape_fn((25, p), |_| rng.random_range(-1.5..1.5));
    let a = model.predict_many(x_new.view()).unwrap();
    let b = loaded.predict_many(x_new.view()).unwrap();
    for (pa, pb) in a.iter().zip(&b) {
        let (ca, cb) = (space.coords(pa), space.coords(pb));
        assert!(ca.iter().zip(cb).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
    assert_eq!(
        ModelFile::from_ensemble(&loaded, Some(bp))
            .to_json()
            .unwrap(),
        file.to_json().unwrap()
    );
}

#[test]
fn hundred_round_trips_predict_bit_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for case in 0..100 {
        match case % 4 {
            0 => round_trip(
                WassersteinSpace::new(16),
                &mut rng,
                common::random_distribution,
            ),
            1 => round_trip(LaplacianSpace::new(4), &mut rng, common::random_laplacian),
            2 => round_trip(
                SphereSpace::compositional(3),
                &mut rng,
                common::random_sphere,
            ),
            _ => round_trip(EuclideanSpace::new(2), &mut rng, common::random_vector),
        }
    }
}

#[test]
fn damaged_files_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let space = EuclideanSpace::new(2);
    let x = Array2::from_shape_fn((30, 2), |_| rng.random_range(-1.0..1.0));
    let y: Vec<_> = (0..30)
        .map(|_| common::random_vector(&space, &mut rng))
        .collect();
    let model = fit(&space, x.view(), &y, &BoostParams::default()).unwrap();
    let file = ModelFile::from_ensemble(&model, None);

    let mut short = file.clone();
    short.y0.pop();
    assert!(short.into_ensemble(space).is_err());

    let mut bad_rate = file.clone();
    bad_rate.learning_rate = 0.0;
    assert!(bad_rate.into_ensemble(space).is_err());

    assert!(ModelFile::from_json("{\"format_version\": 1}").is_err());
    assert!(ModelFile::from_json("not json").is_err());
    assert!(file.into_ensemble(EuclideanSpace::new(3)).is_err());
}
