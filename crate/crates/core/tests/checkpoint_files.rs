use bcwi_core::checkpoint::{Checkpoint, Provenance};
use bcwi_core::fisher::{compute_fisher, Normalization};
use bcwi_core::model::init_params;
use bcwi_core::{Activation, Error, ModelSpec, SparseFeatures};
use proptest::prelude::*;

#[test]
fn write_read_write_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(64, 8, 5, Activation::Tanh).unwrap();
    let ckpt = Checkpoint::from_params(
        init_params(spec, 42),
        Provenance {
            role: "new".into(),
            seed: 42,
            config_hash: "0123abcd".into(),
        },
    );
    let a = dir.path().join("a.bcwi");
    let b = dir.path().join("b.bcwi");
    ckpt.write(&a).unwrap();
    Checkpoint::read(&a).unwrap().write(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn fisher_file_keeps_its_normalization() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(6, 0, 3, Activation::Tanh).unwrap();
    let p = init_params(spec, 1);
    let data = vec![(SparseFeatures::new(vec![2], vec![1.0]).unwrap(), 2)];
    let f = compute_fisher(&p, &data, Normalization::MeanOne, 1e-8).unwrap();
    let path = dir.path().join("f.bcwi");
    Checkpoint::from_fisher(&f, Provenance::default()).write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap().to_fisher().unwrap();
    assert_eq!(back.normalization, Normalization::MeanOne);
    assert_eq!(back.as_slice(), f.as_slice());
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(4, 2, 2, Activation::Relu).unwrap();
    let path = dir.path().join("t.bcwi");
    Checkpoint::from_params(init_params(spec, 0), Provenance::default()).write(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in [1, 8, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(Checkpoint::read(&path), Err(Error::Format(_))), "cut at {cut}");
    }
}

proptest! {
    #[test]
    fn arbitrary_values_roundtrip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 3 * 2 + 2), seed in any::<u64>()) {
        let spec = ModelSpec::new(3, 0, 2, Activation::Tanh).unwrap();
        let params = bcwi_core::ParamVector::from_values(spec, values).unwrap();
        let ckpt = Checkpoint::from_params(params, Provenance { role: "old".into(), seed, config_hash: String::new() });
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back, ckpt);
    }
}
