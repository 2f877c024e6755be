//! Dataset directory round trips, corruption detection and CLI command
//! behavior on small datasets.

use mmresgnn_cli::commands::{fit_baseline_cmd, gen_data, GenDataArgs};
use mmresgnn_cli::dataset_io::{load_dataset, read_manifest, write_dataset};
use mmresgnn_cli::CliError;
use mmresgnn_core::scene::ScenarioKind;
use mmresgnn_harness::dataset::{generate_dataset, DatasetSpec};
use std::path::Path;

fn small_spec(seed: u64) -> DatasetSpec {
    let mut spec = DatasetSpec::new(ScenarioKind::WideLane, 10, seed);
    spec.scene.num_vehicles = 5;
    spec.scene.num_rx = 150;
    spec.graph.k = 12;
    spec.graph.k_corr = 3;
    spec.render_size = 16;
    spec
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    walk(dir, dir, &mut files);
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn write_load_round_trip_preserves_everything() {
    let mut spec = small_spec(3);
    spec.num_snapshots = 24;
    spec.scene.num_rx = 250;
    spec.graph.k = 40;
    let mut dataset = generate_dataset(&spec).unwrap();
    let all: Vec<usize> = (0..dataset.graphs.len()).collect();
    let baseline = dataset.fit_baseline_on(&all).unwrap();
    dataset.attach_baseline(baseline);

    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dataset, dir.path()).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();

    assert_eq!(loaded.spec, dataset.spec);
    assert_eq!(loaded.scene, dataset.scene);
    assert_eq!(loaded.snapshots, dataset.snapshots);
    // Graph payloads are f64 and must round-trip bit-exactly.
    assert_eq!(loaded.graphs, dataset.graphs);
    assert_eq!(
        loaded.baseline.as_ref().unwrap().id(),
        dataset.baseline.as_ref().unwrap().id()
    );
    // Images round-trip exactly at 8-bit quantization.
    for (a, b) in loaded.images.iter().zip(dataset.images.iter()) {
        for (&x, &y) in a.pixels.iter().zip(b.pixels.iter()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
    // Writing the loaded dataset again is byte-identical.
    let dir2 = tempfile::tempdir().unwrap();
    write_dataset(&loaded, dir2.path()).unwrap();
    let a = dir_snapshot(dir.path());
    let b = dir_snapshot(dir2.path());
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(b.iter()) {
        assert_eq!(name_a, name_b);
        if name_a.ends_with(".ppm") {
            // Quantized images are idempotent after the first write.
            assert_eq!(bytes_a, bytes_b, "{name_a}");
        } else {
            assert_eq!(bytes_a, bytes_b, "{name_a}");
        }
    }
}

#[test]
fn gen_data_is_byte_deterministic() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    for dir in [&dir1, &dir2] {
        gen_data(&GenDataArgs {
            scenario: ScenarioKind::Crossroad,
            snapshots: 6,
            seed: 11,
            out: dir.path().to_path_buf(),
            num_rx: Some(120),
            num_vehicles: Some(4),
            k: Some(10),
            k_corr: Some(3),
            image_size: Some(16),
        })
        .unwrap();
    }
    let a = dir_snapshot(dir1.path());
    let b = dir_snapshot(dir2.path());
    assert_eq!(a, b);
}

#[test]
fn corrupted_graph_record_is_detected_and_named() {
    let spec = small_spec(4);
    let dataset = generate_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dataset, dir.path()).unwrap();

    // Flip one byte in a graph record.
    let victim = dir.path().join("graphs/3.bin");
    let mut bytes = std::fs::read(&victim).unwrap();
    let idx = bytes.len() / 2;
    bytes[idx] ^= 0xff;
    std::fs::write(&victim, &bytes).unwrap();

    match load_dataset(dir.path()) {
        Err(CliError::Integrity { file, .. }) => assert_eq!(file, "graphs/3.bin"),
        other => panic!("expected Integrity error, got {other:?}"),
    }
}

#[test]
fn truncated_graph_record_is_an_integrity_error() {
    let spec = small_spec(5);
    let dataset = generate_dataset(&spec).unwrap();
    let bytes = mmresgnn_cli::formats::encode_graph(&dataset.graphs[0]);
    let truncated = &bytes[..bytes.len() - 10];
    match mmresgnn_cli::formats::decode_graph(truncated, "graphs/0.bin") {
        Err(CliError::Integrity { file, .. }) => assert_eq!(file, "graphs/0.bin"),
        other => panic!("expected Integrity error, got {other:?}"),
    }
}

#[test]
fn fit_baseline_updates_manifest_and_enables_reload() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(&GenDataArgs {
        scenario: ScenarioKind::WideLane,
        snapshots: 24,
        seed: 13,
        out: dir.path().to_path_buf(),
        num_rx: Some(250),
        num_vehicles: Some(6),
        k: Some(40),
        k_corr: Some(3),
        image_size: Some(16),
    })
    .unwrap();
    assert!(read_manifest(dir.path()).unwrap().baseline_model_id.is_none());

    let out = dir.path().join("baseline_copy.txt");
    fit_baseline_cmd(dir.path(), &out, None).unwrap();
    let manifest = read_manifest(dir.path()).unwrap();
    assert!(manifest.baseline_model_id.is_some());
    assert!(out.exists());

    let loaded = load_dataset(dir.path()).unwrap();
    let baseline = loaded.baseline.unwrap();
    assert_eq!(Some(baseline.id()), manifest.baseline_model_id);
    // Targets are attached on load.
    assert!(loaded.graphs[0].transmission_edges[0].y_target.is_some());
}
