use dcot::eval::{grid_search, holdout_split, lambda_grid, rmse, synthesize, SynthSpec};
use dcot::model::SliceGroup;
use dcot::{DcotError, DenseTensor, LossFamily, ObservationSet, Shape, SubjectPartition};

#[test]
fn lambda_grid_is_the_61_point_log_grid() {
    let g = lambda_grid();
    assert_eq!(g.len(), 61);
    for (nu, &l) in (1..=61).zip(&g) {
        assert_eq!(l, 10f64.powf(0.1 * f64::from(nu - 31)));
    }
    assert!((g[0] - 1e-3).abs() < 1e-18 && (g[60] - 1e3).abs() < 1e-12);
    assert_eq!(g[30], 1.0);
}

#[test]
fn rmse_is_zero_only_on_exact_match() {
    let shape = Shape::new(vec![2, 2]).unwrap();
    let t = DenseTensor::new(shape, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let omega = ObservationSet::from_dense(&t);
    assert_eq!(rmse(&t, &omega).unwrap(), 0.0);
    let mut off = t.clone();
    off.data_mut()[3] += 2.0;
    assert_eq!(rmse(&off, &omega).unwrap(), 1.0);
    assert!(rmse(&t, &ObservationSet::empty(t.shape().clone())).is_err());
}

#[test]
fn holdout_split_partitions_the_entries() {
    let d = synthesize(&SynthSpec { missing: 0.3, seed: 4, ..Default::default() }).unwrap();
    let (train, test) = holdout_split(&d.observed, 0.8, 9).unwrap();
    assert_eq!(train.len() + test.len(), d.observed.len());
    assert_eq!(train.len(), (0.8 * d.observed.len() as f64).round() as usize);
    let mut all: Vec<usize> = train.linear_indices().iter().chain(test.linear_indices()).copied().collect();
    all.sort_unstable();
    let mut expect = d.observed.linear_indices().to_vec();
    expect.sort_unstable();
    assert_eq!(all, expect);
    assert_eq!(holdout_split(&d.observed, 0.8, 9).unwrap().0, train);
    assert!(holdout_split(&d.observed, 1.0, 0).is_err());
}

#[test]
fn synthetic_truth_is_the_planted_reconstruction() {
    let spec = SynthSpec {
        shape: vec![6, 5, 4],
        ranks: vec![3, 2, 2],
        partition: SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 1]), SliceGroup::with_fixed(vec![1, 2], 1, 1)]),
        noise: 0.0,
        ..Default::default()
    };
    // overlapping groups are rejected
    assert!(synthesize(&spec).is_err());
    for family in [LossFamily::Gaussian, LossFamily::Bernoulli, LossFamily::Poisson, LossFamily::Gamma] {
        let spec = SynthSpec {
            partition: SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 1])]),
            family,
            noise: 0.1,
            missing: 0.25,
            seed: 3,
            ..spec.clone()
        };
        let a = synthesize(&spec).unwrap();
        let recon = a.model.reconstruct().unwrap();
        if family == LossFamily::Gaussian {
            assert!(recon.data().iter().zip(a.signal.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(a.observed.len() + a.missing.len(), 120);
        family.check_data(&a.observed).unwrap();
        let b = synthesize(&spec).unwrap();
        assert_eq!(a.observed, b.observed);
    }
}

#[test]
fn grid_search_is_independent_of_thread_count() {
    let shape = Shape::new(vec![3, 3]).unwrap();
    let truth = DenseTensor::from_fn(shape, |i| (i[0] + 2 * i[1]) as f64);
    let valid = ObservationSet::from_dense(&truth);
    let candidates: Vec<Vec<f64>> = [0.0, 0.5, 1.0, 2.0, 0.5].iter().map(|&l| vec![l]).collect();
    let fit = |l: &[f64]| {
        if l[0] == 2.0 {
            return Err(DcotError::Other("refused".into()));
        }
        Ok(truth.map(|v| v + (l[0] - 0.5).abs()))
    };
    let one = grid_search(&candidates, &valid, 1, fit).unwrap();
    let many = grid_search(&candidates, &valid, 4, fit).unwrap();
    assert_eq!(one, many);
    assert_eq!(one.best_lambda, vec![0.5]);
    assert_eq!(one.best_rmse, 0.0);
    assert!(one.rows[3].rmse.is_none() && one.rows[3].note.contains("refused"));
    // exact ties go to the heavier weight
    let tie = grid_search(&[vec![0.1], vec![0.3]], &valid, 2, |_| Ok(truth.clone())).unwrap();
    assert_eq!(tie.best_lambda, vec![0.3]);
}
