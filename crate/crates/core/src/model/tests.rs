use super::*;
use crate::data::{generate, ShiftKind, ShiftSpec};
use crate::numeric::finite_diff_check;

fn small_spec(variant: Variant, placements: Placements) -> ModelSpec {
    ModelSpec {
        backbone: BackboneSpec {
            input_width: 2,
            hidden: vec![8, 8],
        },
        variant,
        embedding: EmbeddingConfig::with_orders(2, 8),
        placements,
        h_mod: 6,
        task: Task::BinaryClassification,
    }
}

fn batch(model: &Model, n: usize, seed: u64) -> Batch {
    let ds = generate(&ShiftSpec::new(ShiftKind::ConceptShift, n, seed)).unwrap();
    let mut x = ds.x.clone();
    for v in x.as_mut_slice() {
        *v /= 2.0;
    }
    Batch {
        raw_time: model.time_features(&ds.t),
        x,
        y: ds.y,
    }
}

fn preprocessing() -> Preprocessing {
    let mut p = Preprocessing::identity(2);
    p.trend = TrendNormalizer::new(
        crate::data::SYNTH_EPOCH,
        crate::data::SYNTH_EPOCH + crate::data::SYNTH_SPAN,
    )
    .unwrap();
    p
}

/// Perturbs every parameter so zero-initialized heads do not hide gradient paths.
fn jitter(model: &mut Model, seed: u64) {
    let mut r = rng::stream(seed, "jitter");
    let mut theta = model.flat_params();
    for v in &mut theta {
        *v += rng::symmetric(&mut r, 0.3);
    }
    model.set_flat_params(&theta).unwrap();
}

fn check_gradients(spec: ModelSpec) {
    let mut model = Model::new(spec, preprocessing(), 3).unwrap();
    jitter(&mut model, 4);
    let b = batch(&model, 8, 5);
    model.zero_grad();
    model.loss_and_grad(&b).unwrap();
    let analytic = model.flat_grads();
    let theta = model.flat_params();
    let mut probe = model.clone();
    let report = finite_diff_check(
        |p| {
            probe.set_flat_params(p).unwrap();
            let out = probe.forward(&b.x, b.raw_time.as_ref()).unwrap();
            probe.loss(&out, &b.y).unwrap().0
        },
        &theta,
        &analytic,
        1e-6,
        1e-4,
    );
    assert!(report.passed, "worst {} at {}", report.max_rel_err, report.worst_index);
}

#[test]
fn gradients_static() {
    check_gradients(small_spec(Variant::Static, Placements::none()));
}

#[test]
fn gradients_embedding() {
    check_gradients(small_spec(Variant::Embedding, Placements::none()));
}

#[test]
fn gradients_every_placement() {
    check_gradients(small_spec(Variant::Modulated, Placements::all(2)));
}

#[test]
fn gradients_regression() {
    let mut spec = small_spec(Variant::Modulated, Placements::all(2));
    spec.task = Task::Regression;
    check_gradients(spec);
}

#[test]
fn modulated_at_init_matches_static() {
    let stat = Model::new(small_spec(Variant::Static, Placements::none()), preprocessing(), 11).unwrap();
    let modu = Model::new(small_spec(Variant::Modulated, Placements::all(2)), preprocessing(), 11).unwrap();
    let b = batch(&modu, 64, 1);
    let a = stat.forward(&b.x, None).unwrap();
    let m = modu.forward(&b.x, b.raw_time.as_ref()).unwrap();
    assert_eq!(a, m);
}

#[test]
fn degenerate_variants_collapse_to_static() {
    let mut spec = small_spec(Variant::Modulated, Placements::none());
    assert_eq!(spec.effective_variant(), Variant::Static);
    spec.placements = Placements::input_only();
    spec.embedding.d_embedding = 0;
    assert_eq!(spec.effective_variant(), Variant::Static);
    let m = Model::new(spec, preprocessing(), 0).unwrap();
    assert!(!m.uses_time());
    assert!(m.modulators.is_empty());
}

#[test]
fn time_aware_models_require_timestamps() {
    let m = Model::new(small_spec(Variant::Embedding, Placements::none()), preprocessing(), 0).unwrap();
    let x = Matrix::zeros(3, 2);
    assert!(matches!(m.forward(&x, None), Err(Error::Input(_))));
    assert!(m.forward_t(&x, Some(&[0.0, 1.0, 2.0])).is_ok());
}

#[test]
fn invalid_specs_rejected() {
    let mut spec = small_spec(Variant::Modulated, Placements::all(2));
    spec.placements.representation = vec![2];
    assert!(Model::new(spec.clone(), preprocessing(), 0).is_err());
    spec.placements.representation.clear();
    spec.backbone.hidden.clear();
    assert!(Model::new(spec.clone(), preprocessing(), 0).is_err());
    spec.backbone.hidden = vec![4];
    spec.embedding.d_embedding = 6;
    assert!(Model::new(spec, preprocessing(), 0).is_err());
}

#[test]
fn parameter_names_are_ordered() {
    let m = Model::new(small_spec(Variant::Modulated, Placements::all(2)), preprocessing(), 0).unwrap();
    let names: Vec<String> = m.named_params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names[0], "backbone.0.weight");
    assert_eq!(names[6], "embedding.weight");
    assert_eq!(names[8], "modulator.input.hidden.weight");
    assert_eq!(names.last().unwrap(), "modulator.output.head.bias");
    assert_eq!(m.num_params(), m.flat_params().len());
}

#[test]
fn save_load_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [Variant::Static, Variant::Embedding, Variant::Modulated] {
        let mut m = Model::new(small_spec(variant, Placements::all(2)), preprocessing(), 7).unwrap();
        jitter(&mut m, 8);
        let path = dir.path().join(format!("{variant}.bin"));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.spec(), m.spec());
        assert_eq!(back.preprocessing, m.preprocessing);
        let a: Vec<u64> = m.flat_params().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn corrupt_model_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = Model::new(
        small_spec(Variant::Modulated, Placements::input_only()),
        preprocessing(),
        7,
    )
    .unwrap();
    let path = dir.path().join("m.bin");
    save_model(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let p = dir.path().join("trunc.bin");
    std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_model(&p), Err(Error::ModelFormat(_))));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    std::fs::write(&p, &magic).unwrap();
    assert!(matches!(load_model(&p), Err(Error::ModelFormat(_))));
}

#[test]
fn shared_timestamp_forward_matches_per_row() {
    for variant in [Variant::Static, Variant::Embedding, Variant::Modulated] {
        let mut m = Model::new(small_spec(variant, Placements::all(2)), preprocessing(), 2).unwrap();
        jitter(&mut m, 3);
        let x = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![-0.3, 0.0]]).unwrap();
        let t = crate::data::SYNTH_EPOCH + 1234567.0;
        let shared = m.forward_at(&x, t).unwrap();
        let per_row = m.forward_t(&x, Some(&[t; 3])).unwrap();
        assert!(shared.max_abs_diff(&per_row) < 1e-12, "{variant}");
    }
}

#[test]
fn modulated_input_is_identity_at_init() {
    let m = Model::new(
        small_spec(Variant::Modulated, Placements::input_only()),
        preprocessing(),
        2,
    )
    .unwrap();
    let x = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
    let t = [crate::data::SYNTH_EPOCH, crate::data::SYNTH_EPOCH + 9.0e6];
    assert_eq!(m.modulated_input(&x, &t).unwrap(), Some(x.clone()));
    let s = Model::new(small_spec(Variant::Static, Placements::none()), preprocessing(), 2).unwrap();
    assert_eq!(s.modulated_input(&x, &t).unwrap(), None);
}
