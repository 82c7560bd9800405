mod common;

use alloop_core::calc::evaluate;
use alloop_core::frame::{Dataset, LabeledFrame};
use alloop_core::geometry::{Cell, Vec3};
use alloop_core::oracle::label_frames;
use alloop_core::potential::*;
use alloop_core::structgen::{build_solid, Lattice};
use alloop_core::AtomicConfiguration;
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

fn species(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn basis(names: &[&str], n_radial: usize) -> DescriptorBasis {
    DescriptorBasis::new(&species(names), &BasisSettings { n_radial, ..BasisSettings::default() }).unwrap()
}

fn random_model(r: &mut ChaCha8Rng, b: DescriptorBasis) -> SurrogateModel {
    let mut m = SurrogateModel::zeros("m", b);
    for w in m.weights.values_mut() {
        w.iter_mut().for_each(|x| *x = r.random_range(-0.5..0.5));
    }
    for v in m.intercepts.values_mut() {
        *v = r.random_range(-3.0..-1.0);
    }
    m
}

fn teacher_dataset(model: &SurrogateModel, configs: &[AtomicConfiguration], id: &str) -> Dataset {
    let frames = configs
        .iter()
        .map(|c| {
            let (e, f) = predict(model, c).unwrap();
            LabeledFrame::new(c.clone(), e, f, "teacher").unwrap()
        })
        .collect();
    Dataset::new(id, frames, vec![])
}

fn flat(m: &SurrogateModel) -> Vec<f64> {
    m.basis.species.iter().flat_map(|s| std::iter::once(m.intercepts[s]).chain(m.weights[s].iter().copied())).collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300)
}

#[test]
fn isolated_atom_has_zero_features() {
    let b = basis(&["Ar"], 8);
    let c = AtomicConfiguration::new(Cell::open(), species(&["Ar"]), vec![Vec3::zeros()]);
    let d = compute_descriptors(&c, &b).unwrap();
    assert!(d.features[0].iter().all(|&x| x == 0.0));
    assert!(d.gradients[0].is_empty());
}

#[test]
fn dimer_at_center_peaks_in_matching_block() {
    let b = basis(&["Ar", "Cu"], 12);
    let mu = b.center(1);
    let c = AtomicConfiguration::new(Cell::open(), species(&["Ar", "Cu"]), vec![Vec3::zeros(), Vec3::new(mu, 0.0, 0.0)]);
    let d = compute_descriptors(&c, &b).unwrap();
    let block = b.pair_block(0, 1);
    let fc = 0.5 * ((std::f64::consts::PI * mu / b.cutoff).cos() + 1.0);
    let col = block * b.n_radial + 1;
    assert!((d.features[0][col] - fc).abs() < 1e-14);
    let (arg, _) = d.features[0].iter().enumerate().fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    assert_eq!(arg, col);
}

#[test]
fn descriptor_gradients_match_finite_differences() {
    let b = basis(&["Cu", "Ar"], 12);
    let mut r = rng(7);
    let c = random_config(&mut r, Cell::cubic(11.0), &["Cu", "Ar"], 16, 1.5);
    let d = compute_descriptors(&c, &b).unwrap();
    let h = 1e-5;
    let mut num2 = 0.0;
    let mut den2 = 0.0;
    for a in 0..c.len() {
        for k in 0..3 {
            let mut p = c.clone();
            p.positions[a][k] += h;
            let dp = compute_descriptors(&p, &b).unwrap();
            p.positions[a][k] -= 2.0 * h;
            let dm = compute_descriptors(&p, &b).unwrap();
            for i in 0..c.len() {
                let mut analytic = vec![0.0; b.dim()];
                for &(atom, col, g) in &d.gradients[i] {
                    if atom == a {
                        analytic[col] += g[k];
                    }
                }
                for col in 0..b.dim() {
                    let fd = (dp.features[i][col] - dm.features[i][col]) / (2.0 * h);
                    num2 += (fd - analytic[col]).powi(2);
                    den2 += analytic[col].powi(2);
                }
            }
        }
    }
    assert!((num2 / den2).sqrt() < 1e-6, "{}", (num2 / den2).sqrt());
}

#[test]
fn zero_weights_give_sum_of_intercepts() {
    let b = basis(&["Cu", "Ar"], 6);
    let mut m = SurrogateModel::zeros("z", b);
    m.intercepts.insert("Cu".into(), -3.5);
    m.intercepts.insert("Ar".into(), -0.25);
    let mut r = rng(8);
    let c = random_config(&mut r, Cell::cubic(10.0), &["Cu", "Ar"], 10, 1.5);
    let (e, f) = predict(&m, &c).unwrap();
    assert!((e - (5.0 * -3.5 + 5.0 * -0.25)).abs() < 1e-12);
    assert!(f.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn isolated_atoms_give_intercepts_exactly() {
    let mut r = rng(9);
    let m = random_model(&mut r, basis(&["Cu", "Ar"], 6));
    let c = AtomicConfiguration::new(
        Cell::open(),
        species(&["Cu", "Ar"]),
        vec![Vec3::zeros(), Vec3::new(20.0, 0.0, 0.0)],
    );
    let (e, _) = predict(&m, &c).unwrap();
    assert_eq!(e, m.intercepts["Cu"] + m.intercepts["Ar"]);
}

#[test]
fn uncovered_species_is_an_error() {
    let m = SurrogateModel::zeros("z", basis(&["Cu"], 4));
    let c = AtomicConfiguration::new(Cell::open(), species(&["Ar"]), vec![Vec3::zeros()]);
    assert!(predict(&m, &c).is_err());
}

#[test]
fn predicted_forces_match_finite_differences_and_pair_form() {
    let mut r = rng(10);
    for _ in 0..5 {
        let m = random_model(&mut r, basis(&["Cu", "Ar"], 12));
        let cell = random_cell(&mut r);
        let c = random_config(&mut r, cell, &["Cu", "Ar"], 16, 1.5);
        let (e, f) = predict(&m, &c).unwrap();
        let fd = fd_forces(&c, 1e-5, |x| predict(&m, x).unwrap().0);
        assert!(rel_diff(&fd, &f) < 1e-6);
        let ev = evaluate(&m.calculator(), &c).unwrap();
        assert!((ev.energy - e).abs() < 1e-9 * e.abs().max(1.0));
        assert!(rel_diff(&ev.forces, &f) < 1e-10);
    }
}

#[test]
fn energy_is_extensive_under_cell_doubling() {
    let mut r = rng(11);
    let m = random_model(&mut r, basis(&["Cu"], 8));
    let mut c = build_solid(Lattice::Fcc, 3.6, &species(&["Cu"]), [3, 3, 3]).unwrap();
    for p in c.positions.iter_mut() {
        *p += Vec3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), r.random_range(-0.1..0.1));
    }
    let mut doubled = c.clone();
    let a = c.cell.vector(0);
    doubled.positions.extend(c.positions.iter().map(|p| p + a));
    doubled.species.extend(c.species.iter().cloned());
    let mut v = *c.cell.vectors();
    v.set_row(0, &(2.0 * a).transpose());
    doubled.cell = c.cell.with_vectors(v).unwrap();
    let e1 = predict(&m, &c).unwrap().0;
    let e2 = predict(&m, &doubled).unwrap().0;
    assert!((e2 - 2.0 * e1).abs() < 1e-8 * e1.abs());
}

#[test]
fn permutation_and_rotation_invariance() {
    let mut r = rng(12);
    let m = random_model(&mut r, basis(&["Cu", "Ar"], 8));
    let c = random_config(&mut r, Cell::open(), &["Cu", "Ar"], 14, 1.5);
    let (e, f) = predict(&m, &c).unwrap();

    let perm: Vec<usize> = (0..c.len()).rev().collect();
    let p = AtomicConfiguration::new(
        c.cell.clone(),
        perm.iter().map(|&i| c.species[i].clone()).collect(),
        perm.iter().map(|&i| c.positions[i]).collect(),
    );
    let (ep, fp) = predict(&m, &p).unwrap();
    assert!((e - ep).abs() < 1e-10);
    for (k, &i) in perm.iter().enumerate() {
        assert!((fp[k] - f[i]).norm() < 1e-10);
    }

    let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let q = AtomicConfiguration::new(c.cell.clone(), c.species.clone(), c.positions.iter().map(|x| rot * x).collect());
    assert!((predict(&m, &q).unwrap().0 - e).abs() < 1e-9);
}

fn single_species_configs(r: &mut ChaCha8Rng, n: usize) -> Vec<AtomicConfiguration> {
    (0..n).map(|k| random_config(r, Cell::cubic(10.0 + 0.1 * k as f64), &["Ar"], 12, 1.6)).collect()
}

fn request<'a>(datasets: Vec<&'a Dataset>, n_radial: usize, lambda: f64) -> TrainRequest<'a> {
    TrainRequest {
        model_id: "t".into(),
        datasets,
        species: vec![],
        basis: BasisSettings { n_radial, ..BasisSettings::default() },
        mode: TrainMode::Accurate,
        parent: None,
        lambda,
        beta: DEFAULT_BETA,
        z_max: 3.0,
    }
}

#[test]
fn exact_recovery_at_zero_lambda() {
    let mut r = rng(13);
    let teacher = random_model(&mut r, basis(&["Ar"], 6));
    let ds = teacher_dataset(&teacher, &single_species_configs(&mut r, 40), "d");
    let out = train(&request(vec![&ds], 6, 0.0)).unwrap();
    assert!(rel(&flat(&out.model), &flat(&teacher)) < 1e-8, "{}", rel(&flat(&out.model), &flat(&teacher)));
}

#[test]
fn ridge_shrinks_weights() {
    let mut r = rng(14);
    let teacher = random_model(&mut r, basis(&["Ar"], 6));
    let ds = teacher_dataset(&teacher, &single_species_configs(&mut r, 40), "d");
    let norm = |m: &SurrogateModel| flat(m).iter().map(|x| x * x).sum::<f64>();
    let a = train(&request(vec![&ds], 6, 0.0)).unwrap();
    let b = train(&request(vec![&ds], 6, 1e3)).unwrap();
    assert!(norm(&b.model) < norm(&a.model));
}

#[test]
fn singular_system_at_zero_lambda_is_reported() {
    let mut r = rng(15);
    // Two identical frames of a dimer cannot determine 12 radial weights.
    let c = AtomicConfiguration::new(Cell::open(), species(&["Ar", "Ar"]), vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0)]);
    let ds = teacher_dataset(&random_model(&mut r, basis(&["Ar"], 12)), &[c.clone(), c], "d");
    assert!(matches!(train(&request(vec![&ds], 12, 0.0)), Err(TrainError::Singular)));
}

#[test]
fn empty_union_is_an_error() {
    assert!(matches!(train(&request(vec![], 6, 1e-6)), Err(TrainError::Empty)));
}

/// Ridge solution by SVD of the stacked augmented system `[A; √λ I] x = [b; 0]`.
fn dense_ridge(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut aug = DMatrix::zeros(m + n, n);
    aug.view_mut((0, 0), (m, n)).copy_from(a);
    for d in 0..n {
        aug[(m + d, d)] = lambda.sqrt();
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(b);
    aug.svd(true, true).solve(&rhs, 1e-14).unwrap()
}

#[test]
fn solver_matches_dense_reference_on_20_random_problems() {
    let mut r = rng(16);
    for _ in 0..20 {
        let n = r.random_range(5..=40);
        let m = r.random_range(n..=200);
        let a = DMatrix::from_fn(m, n, |_, _| r.random_range(-1.0..1.0));
        let b = DVector::from_fn(m, |_, _| r.random_range(-1.0..1.0));
        let lambda = 10f64.powf(r.random_range(-6.0..0.0));
        let x = solve_ridge(&a.tr_mul(&a), &a.tr_mul(&b), lambda).unwrap();
        let y = dense_ridge(&a, &b, lambda);
        assert!(rel(x.as_slice(), y.as_slice()) < 1e-8);
    }
}

/// Stacks every frame's rows and solves densely; independent of the chunked
/// normal-equation accumulation.
fn dense_train(frames: &[&LabeledFrame], b: &DescriptorBasis, beta: f64, lambda: f64) -> Vec<f64> {
    let blocks: Vec<_> = frames.iter().map(|f| design_rows(f, b, beta).unwrap()).collect();
    let rows: usize = blocks.iter().map(|(a, _)| a.nrows()).sum();
    let cols = blocks[0].0.ncols();
    let mut a = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    let mut at = 0;
    for (ba, bb) in &blocks {
        a.view_mut((at, 0), ba.shape()).copy_from(ba);
        y.rows_mut(at, bb.len()).copy_from(bb);
        at += ba.nrows();
    }
    dense_ridge(&a, &y, lambda).as_slice().to_vec()
}

#[test]
fn trainer_matches_dense_solve_on_oracle_data() {
    let mut r = rng(17);
    let configs: Vec<_> = (0..8).map(|_| random_config(&mut r, Cell::cubic(9.0), &["Cu", "Ar"], 12, 1.7)).collect();
    let ds = label_frames("d", &configs, &binary_lj(), vec![]).unwrap();
    let out = train(&request(vec![&ds], 6, 1e-3)).unwrap();
    let frames: Vec<&LabeledFrame> = ds.frames.iter().collect();
    let dense = dense_train(&frames, &out.model.basis, DEFAULT_BETA, 1e-3);
    // Columns never touched by the data are pinned to zero by the trainer and
    // shrink to zero in the dense solve, so the two agree everywhere.
    assert!(rel(&flat(&out.model), &dense) < 1e-8);
}

#[test]
fn duplicating_frames_matches_halved_lambda() {
    let mut r = rng(18);
    let configs: Vec<_> = (0..6).map(|_| random_config(&mut r, Cell::cubic(9.0), &["Ar"], 10, 1.7)).collect();
    let ds = label_frames("d", &configs, &binary_lj(), vec![]).unwrap();
    let mut twice = ds.frames.clone();
    twice.extend(ds.frames.iter().cloned());
    let dup = Dataset::new("dd", twice, vec![]);
    let a = train(&request(vec![&dup], 6, 1e-2)).unwrap();
    let frames: Vec<&LabeledFrame> = ds.frames.iter().collect();
    // (2AᵀA + λI)x = 2Aᵀb is the single-copy system at λ/2.
    let dense = dense_train(&frames, &a.model.basis, DEFAULT_BETA, 0.5e-2);
    assert!(rel(&flat(&a.model), &dense) < 1e-8);
}

#[test]
fn fine_tune_equals_cold_solve_on_union() {
    let mut r = rng(19);
    let mk = |r: &mut ChaCha8Rng, id: &str| {
        let configs: Vec<_> = (0..5).map(|_| random_config(r, Cell::cubic(9.0), &["Cu", "Ar"], 10, 1.7)).collect();
        label_frames(id, &configs, &binary_lj(), vec![]).unwrap()
    };
    let d1 = mk(&mut r, "d1");
    let d2 = mk(&mut r, "d2");
    let parent = train(&request(vec![&d1], 8, 1e-6)).unwrap().model;
    let mut ft = request(vec![&d1, &d2], 8, 1e-6);
    ft.parent = Some(&parent);
    let tuned = train(&ft).unwrap();
    let cold = train(&request(vec![&d1, &d2], 8, 1e-6)).unwrap();
    assert_eq!(tuned.model.parent_id.as_deref(), Some("t"));
    assert_eq!(tuned.model.trained_on, vec!["d1", "d2"]);
    let (a, b) = (flat(&tuned.model), flat(&cold.model));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-10 * y.abs().max(1.0)));
}

#[test]
fn fine_tune_without_parent_data_fails() {
    let mut r = rng(20);
    let configs: Vec<_> = (0..4).map(|_| random_config(&mut r, Cell::cubic(9.0), &["Ar"], 8, 1.7)).collect();
    let d1 = label_frames("d1", &configs, &binary_lj(), vec![]).unwrap();
    let d2 = label_frames("d2", &configs, &binary_lj(), vec![]).unwrap();
    let parent = train(&request(vec![&d1], 6, 1e-6)).unwrap().model;
    let mut ft = request(vec![&d2], 6, 1e-6);
    ft.parent = Some(&parent);
    assert!(matches!(train(&ft), Err(TrainError::MissingParentData { .. })));
}

#[test]
fn quick_mode_halves_basis_and_ignores_forces() {
    let mut r = rng(21);
    let configs: Vec<_> = (0..6).map(|_| random_config(&mut r, Cell::cubic(9.0), &["Ar"], 8, 1.7)).collect();
    let ds = label_frames("d", &configs, &binary_lj(), vec![]).unwrap();
    let mut q = request(vec![&ds], 12, 1e-6);
    q.mode = TrainMode::Quick;
    let out = train(&q).unwrap();
    assert_eq!(out.model.basis.n_radial, 6);
    assert_eq!(out.model.beta, 0.0);
    assert_eq!(out.equations, 6);
}

#[test]
fn metrics_match_recomputation() {
    let mut r = rng(22);
    let configs: Vec<_> = (0..6).map(|_| random_config(&mut r, Cell::cubic(9.0), &["Cu", "Ar"], 10, 1.7)).collect();
    let ds = label_frames("d", &configs, &binary_lj(), vec![]).unwrap();
    let out = train(&request(vec![&ds], 8, 1e-6)).unwrap();
    let mut e = 0.0;
    let mut f = 0.0;
    let mut comps = 0;
    for fr in &ds.frames {
        let (pe, pf) = predict(&out.model, &fr.config).unwrap();
        e += ((pe - fr.energy) / fr.config.len() as f64).abs();
        for (a, b) in pf.iter().zip(&fr.forces) {
            f += (a - b).abs().sum();
            comps += 3;
        }
    }
    assert!((out.model.metrics.energy_mae - e / 6.0).abs() < 1e-12);
    assert!((out.model.metrics.force_mae - f / comps as f64).abs() < 1e-12);
    assert_eq!(out.record.epochs, 1);
}

#[test]
fn identical_frames_have_no_outliers() {
    let mut r = rng(23);
    let c = random_config(&mut r, Cell::cubic(9.0), &["Ar"], 8, 1.7);
    let ds = label_frames("d", &vec![c; 10], &binary_lj(), vec![]).unwrap();
    let m = SurrogateModel::zeros("z", basis(&["Ar"], 4));
    assert!(detect_outliers(&m, &[&ds], 3.0).unwrap().is_empty());
}

#[test]
fn corrupted_energy_is_the_only_outlier() {
    let mut r = rng(24);
    let model = random_model(&mut r, basis(&["Ar"], 8));
    let configs: Vec<_> = (0..100).map(|_| random_config(&mut r, Cell::cubic(12.0), &["Ar"], 8, 2.2)).collect();
    let clean = teacher_dataset(&model, &configs, "d");
    let mut frames = clean.frames.clone();
    let bad = 37;
    let n = frames[bad].config.len() as f64;
    frames[bad] = LabeledFrame::new(frames[bad].config.clone(), frames[bad].energy + 10.0 * n, frames[bad].forces.clone(), "x").unwrap();
    let ds = Dataset::new("d", frames, vec![]);
    let out = detect_outliers(&model, &[&ds], 3.0).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].frame_index, bad);
    assert_eq!(out[0].reason, OutlierReason::Energy);
}

#[test]
fn outliers_need_three_frames() {
    let mut r = rng(25);
    let configs: Vec<_> = (0..2).map(|_| random_config(&mut r, Cell::cubic(9.0), &["Ar"], 8, 1.7)).collect();
    let ds = label_frames("d", &configs, &binary_lj(), vec![]).unwrap();
    let m = SurrogateModel::zeros("z", basis(&["Ar"], 4));
    assert!(detect_outliers(&m, &[&ds], 3.0).is_err());
}

#[test]
fn model_round_trips_through_json() {
    let mut r = rng(26);
    let m = random_model(&mut r, basis(&["Cu", "Ar"], 5));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    assert_eq!(SurrogateModel::load(&path).unwrap(), m);
}

#[test]
fn train_time_model_fits_a_line() {
    let t = TrainTimeModel::fit(&[(100, 0.2), (200, 0.3), (400, 0.5)]).unwrap();
    assert!((t.seconds_per_equation - 1e-3).abs() < 1e-12);
    assert!((t.estimate(300) - 0.4).abs() < 1e-12);
    assert!(TrainTimeModel::fit(&[(5, 1.0)]).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn outlier_flags_are_a_subset_and_deterministic(seed in 0u64..500, z in 1.0f64..4.0) {
        let mut r = rng(seed);
        let residuals: Vec<FrameResidual> = (0..20).map(|k| FrameResidual {
            dataset_id: "d".into(),
            index: k,
            energy_per_atom: r.random_range(-1.0..1.0),
            max_force: r.random_range(0.0..1.0),
            force_abs_sum: 0.0,
            force_components: 3,
        }).collect();
        let a = outliers_from_residuals(&residuals, z).unwrap();
        let b = outliers_from_residuals(&residuals, z).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|o| o.frame_index < 20));
        let bigger = outliers_from_residuals(&residuals, z + 1.0).unwrap();
        prop_assert!(bigger.len() <= a.len());
    }
}
