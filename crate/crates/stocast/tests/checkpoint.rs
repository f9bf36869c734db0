use stocast::checkpoint::{load_checkpoint, params_path, save_checkpoint, CheckpointManifest};
use stocast::formats::{read_json, write_json};
use stocast::Error;
use stocast_core::dataset::{WindowSample, N_DYNAMIC, N_STATIC, WINDOW_HOURS};
use stocast_core::net::{init_params, Architecture};
use stocast_core::rng::StreamRng;

fn tiny() -> Architecture {
    Architecture { gru1: 3, gru2: 4, gru3: 4, gru4: 3, fc1: 5, fc2: 3, fc3: 4, fc4: 2 }
}

fn samples(n: usize, seed: u64) -> Vec<WindowSample> {
    let mut rng = StreamRng::new(seed);
    (0..n)
        .map(|i| WindowSample {
            event: 0,
            cell_id: i,
            t0: 0,
            dynamic_in: [[0.0; N_DYNAMIC]; WINDOW_HOURS].map(|r| r.map(|_| rng.uniform_in(0.0, 30.0))),
            static_in: [0.0; N_STATIC].map(|_| rng.uniform_in(0.0, 1.0)),
            label: [0.0; 6],
            transformer_count: 1 + rng.below(20) as u32,
        })
        .collect()
}

#[test]
fn round_trip_preserves_predictions_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = init_params(tiny(), 11);
    save_checkpoint(&model, None, &path).unwrap();
    let (back, manifest) = load_checkpoint(&path, Some(tiny())).unwrap();
    assert_eq!(back, model);
    assert_eq!(manifest.n_params, tiny().n_params());
    let s = samples(17, 3);
    let a = model.predict(&s);
    let b = back.predict(&s);
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn edited_dimension_is_an_architecture_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&init_params(tiny(), 1), None, &path).unwrap();
    let mut m: CheckpointManifest = read_json(&path).unwrap();
    m.architecture.fc2 += 1;
    write_json(&path, &m).unwrap();
    let err = load_checkpoint(&path, None).unwrap_err();
    assert!(err.to_string().contains("architecture mismatch"), "{err}");
}

#[test]
fn unexpected_architecture_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&init_params(tiny(), 1), None, &path).unwrap();
    let err = load_checkpoint(&path, Some(Architecture::STOCAST)).unwrap_err();
    assert!(err.to_string().contains("architecture mismatch"), "{err}");
}

#[test]
fn truncated_or_corrupted_parameters_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&init_params(tiny(), 1), None, &path).unwrap();
    let sidecar = params_path(&path);
    let bytes = std::fs::read(&sidecar).unwrap();

    std::fs::write(&sidecar, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_checkpoint(&path, None), Err(Error::Format { .. })));

    let mut flipped = bytes.clone();
    flipped[5] ^= 1;
    std::fs::write(&sidecar, &flipped).unwrap();
    let err = load_checkpoint(&path, None).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");

    std::fs::remove_file(&sidecar).unwrap();
    assert!(matches!(load_checkpoint(&path, None), Err(Error::Io { .. })));
}

#[test]
fn unsupported_version_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&init_params(tiny(), 1), None, &path).unwrap();
    let mut m: CheckpointManifest = read_json(&path).unwrap();
    m.format_version = 99;
    write_json(&path, &m).unwrap();
    assert!(load_checkpoint(&path, None).unwrap_err().to_string().contains("format_version"));
}

#[test]
fn save_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&init_params(tiny(), 8), None, &a).unwrap();
    save_checkpoint(&init_params(tiny(), 8), None, &b).unwrap();
    assert_eq!(std::fs::read(params_path(&a)).unwrap(), std::fs::read(params_path(&b)).unwrap());
    let ma: CheckpointManifest = read_json(&a).unwrap();
    let mb: CheckpointManifest = read_json(&b).unwrap();
    assert_eq!(ma.params_sha256, mb.params_sha256);
}

#[test]
fn standardization_stats_survive_the_json_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut model = init_params(tiny(), 2);
    let mut rng = StreamRng::new(77);
    // Values with long decimal expansions catch parsers that are off by an ulp.
    model.stats.dynamic_mean = [0.0; 3].map(|_| rng.uniform_in(0.0, 40.0));
    model.stats.dynamic_std = [0.0; 3].map(|_| rng.uniform_in(0.1, 20.0));
    model.stats.static_mean = [0.0; N_STATIC].map(|_| rng.uniform_in(-500.0, 500.0));
    model.stats.static_std = [0.0; N_STATIC].map(|_| rng.uniform_in(0.01, 90.0));
    save_checkpoint(&model, None, &path).unwrap();
    let (back, _) = load_checkpoint(&path, None).unwrap();
    assert_eq!(back.stats, model.stats);
    let s = samples(9, 4);
    let (a, b) = (model.predict(&s), back.predict(&s));
    assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
