//! Dataset directory layout, manifest with per-file checksums, and the
//! write/load round trip.
//!
//! Layout:
//!   manifest.json          UTF-8 JSON manifest
//!   masks/{building,tree,road}.pgm
//!   snapshots.csv          one row per vehicle per snapshot
//!   graphs/<snapshot_id>.bin
//!   images/<snapshot_id>.ppm
//!   baseline.txt           written by the baseline fit

use crate::formats::{
    decode_baseline, decode_graph, decode_pgm, decode_ppm, encode_baseline, encode_graph,
    encode_pgm, encode_ppm, write_atomic,
};
use crate::{CliError, Result};
use mmresgnn_core::baseline::BaselineModel;
use mmresgnn_core::scene::ScenarioKind;
use mmresgnn_harness::dataset::{generate_dataset, Dataset, DatasetSpec, DerivedSeeds};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSeeds {
    pub root: u64,
    pub scene: u64,
    pub trajectory: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub snapshots: usize,
    pub rx: usize,
    pub vehicles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub scenario_kind: ScenarioKind,
    pub seeds: ManifestSeeds,
    pub counts: ManifestCounts,
    pub spec: DatasetSpec,
    pub baseline_model_id: Option<String>,
    /// sha256 hex digest per record file (relative path).
    pub checksums: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn snapshots_csv(dataset: &Dataset) -> String {
    let mut csv = String::from("snapshot_id,vehicle_id,x,y,z,heading,speed,is_tx\n");
    for snap in &dataset.snapshots {
        let mut rows: Vec<(u32, [f64; 3], f64, f64, bool)> = Vec::new();
        rows.push((
            snap.tx_vehicle_id,
            snap.tx_position,
            snap.tx_heading,
            snap.tx_speed,
            true,
        ));
        for v in &snap.dynamic_vehicles {
            rows.push((v.vehicle_id, v.position, v.heading, v.speed, false));
        }
        rows.sort_by_key(|r| r.0);
        for (vid, pos, heading, speed, is_tx) in rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                snap.snapshot_id,
                vid,
                pos[0],
                pos[1],
                pos[2],
                heading,
                speed,
                u8::from(is_tx)
            ));
        }
    }
    csv
}

/// Write a dataset directory; returns the manifest. Writes are atomic per
/// file and the manifest carries a checksum for every record file.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir.join("masks")).map_err(CliError::io(dir.display().to_string()))?;
    std::fs::create_dir_all(dir.join("graphs")).map_err(CliError::io(dir.display().to_string()))?;
    std::fs::create_dir_all(dir.join("images")).map_err(CliError::io(dir.display().to_string()))?;

    let mut checksums = BTreeMap::new();
    let mut write_record = |rel: String, bytes: Vec<u8>| -> Result<()> {
        checksums.insert(rel.clone(), sha256_hex(&bytes));
        write_atomic(&dir.join(&rel), &bytes)
    };

    write_record("masks/building.pgm".into(), encode_pgm(&dataset.scene.building_mask))?;
    write_record("masks/tree.pgm".into(), encode_pgm(&dataset.scene.tree_mask))?;
    write_record("masks/road.pgm".into(), encode_pgm(&dataset.scene.road_mask))?;
    write_record("snapshots.csv".into(), snapshots_csv(dataset).into_bytes())?;
    for graph in &dataset.graphs {
        write_record(format!("graphs/{}.bin", graph.snapshot_id), encode_graph(graph))?;
    }
    for (snap, image) in dataset.snapshots.iter().zip(dataset.images.iter()) {
        write_record(format!("images/{}.ppm", snap.snapshot_id), encode_ppm(image))?;
    }
    if let Some(baseline) = &dataset.baseline {
        write_record("baseline.txt".into(), encode_baseline(baseline).into_bytes())?;
    }

    let seeds = dataset.spec.derived_seeds();
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        scenario_kind: dataset.spec.scene.scenario_kind,
        seeds: ManifestSeeds {
            root: dataset.spec.seed,
            scene: seeds.scene,
            trajectory: seeds.trajectory,
            noise: seeds.noise,
        },
        counts: ManifestCounts {
            snapshots: dataset.snapshots.len(),
            rx: dataset.scene.rx_positions.len(),
            vehicles: dataset.spec.scene.num_vehicles,
        },
        spec: dataset.spec.clone(),
        baseline_model_id: dataset.baseline.as_ref().map(|b| b.id()),
        checksums,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Data(e.to_string()))?;
    write_atomic(&dir.join("manifest.json"), &json)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(CliError::io(path.display().to_string()))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| CliError::Integrity {
        file: "manifest.json".into(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(CliError::Integrity {
            file: "manifest.json".into(),
            reason: format!("unsupported format_version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

/// Validate every checksummed record file and return its bytes keyed by
/// relative path.
fn read_and_verify(dir: &Path, manifest: &DatasetManifest) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for (rel, expected) in &manifest.checksums {
        let path = dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|_| CliError::Integrity {
            file: rel.clone(),
            reason: "record file missing or unreadable".into(),
        })?;
        let got = sha256_hex(&bytes);
        if &got != expected {
            return Err(CliError::Integrity {
                file: rel.clone(),
                reason: format!("checksum mismatch: manifest {expected}, file {got}"),
            });
        }
        out.insert(rel.clone(), bytes);
    }
    Ok(out)
}

/// Load a dataset directory: checksums are validated, graphs and images are
/// decoded, and the scene and snapshots are regenerated deterministically
/// from the manifest spec.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let files = read_and_verify(dir, &manifest)?;

    // Deterministic regeneration of the static world; verified against the
    // stored masks below.
    let regenerated = generate_dataset(&DatasetSpec {
        num_snapshots: manifest.counts.snapshots,
        ..manifest.spec.clone()
    })
    .map_err(|e| CliError::Data(e.to_string()))?;

    for (rel, mask) in [
        ("masks/building.pgm", &regenerated.scene.building_mask),
        ("masks/tree.pgm", &regenerated.scene.tree_mask),
        ("masks/road.pgm", &regenerated.scene.road_mask),
    ] {
        let stored = decode_pgm(files.get(rel).ok_or_else(|| CliError::Integrity {
            file: rel.to_string(),
            reason: "missing from manifest".into(),
        })?, rel)?;
        if &stored != mask {
            return Err(CliError::Integrity {
                file: rel.to_string(),
                reason: "stored mask does not match the seeded regeneration".into(),
            });
        }
    }

    let mut graphs = Vec::with_capacity(manifest.counts.snapshots);
    let mut images = Vec::with_capacity(manifest.counts.snapshots);
    for snap_id in 0..manifest.counts.snapshots {
        let rel = format!("graphs/{snap_id}.bin");
        let bytes = files.get(&rel).ok_or_else(|| CliError::Integrity {
            file: rel.clone(),
            reason: "graph record missing from manifest".into(),
        })?;
        graphs.push(decode_graph(bytes, &rel)?);
        let rel = format!("images/{snap_id}.ppm");
        let bytes = files.get(&rel).ok_or_else(|| CliError::Integrity {
            file: rel.clone(),
            reason: "image record missing from manifest".into(),
        })?;
        images.push(decode_ppm(bytes, manifest.spec.features.window, &rel)?);
    }

    let baseline: Option<BaselineModel> = match &manifest.baseline_model_id {
        None => None,
        Some(id) => {
            let bytes = files.get("baseline.txt").ok_or_else(|| CliError::Integrity {
                file: "baseline.txt".into(),
                reason: "manifest names a baseline but the record is missing".into(),
            })?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Integrity {
                file: "baseline.txt".into(),
                reason: "not valid UTF-8".into(),
            })?;
            let model = decode_baseline(&text, "baseline.txt")?;
            if &model.id() != id {
                return Err(CliError::Integrity {
                    file: "baseline.txt".into(),
                    reason: format!("baseline id {} does not match manifest {id}", model.id()),
                });
            }
            Some(model)
        }
    };

    let mut dataset = Dataset {
        spec: manifest.spec.clone(),
        scene: regenerated.scene,
        snapshots: regenerated.snapshots,
        graphs,
        images,
        baseline: None,
    };
    if let Some(b) = baseline {
        dataset.attach_baseline(b);
    }
    Ok(dataset)
}

/// Persist a fitted baseline into the dataset directory and update the
/// manifest checksum and id.
pub fn store_baseline(dir: &Path, baseline: &BaselineModel) -> Result<()> {
    let mut manifest = read_manifest(dir)?;
    let text = encode_baseline(baseline);
    write_atomic(&dir.join("baseline.txt"), text.as_bytes())?;
    manifest
        .checksums
        .insert("baseline.txt".into(), sha256_hex(text.as_bytes()));
    manifest.baseline_model_id = Some(baseline.id());
    write_manifest(&manifest, dir)
}

/// Derived seed bundle for reporting.
pub fn seeds_of(spec: &DatasetSpec) -> DerivedSeeds {
    spec.derived_seeds()
}

/// Canonical baseline location inside a dataset directory.
pub fn baseline_path(dir: &Path) -> PathBuf {
    dir.join("baseline.txt")
}
