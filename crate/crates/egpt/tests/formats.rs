use std::fs;

use egpt::checkpoint::{self, Checkpoint};
use egpt::dataset::{read_dataset, read_snapshot, write_dataset, write_prediction, META_FILE};
use egpt::CliError;
use egpt_core::egpt::{EgptConfig, EgptModel};
use egpt_core::features::{build_sequence, decode_prediction, FeatureLayout};
use egpt_core::synthgen::{generate_dataset, Dataset, GeneratorConfig};
use egpt_core::trainer::Hyperparams;

fn tiny() -> Dataset {
    let config = GeneratorConfig {
        users: 12,
        steps: 4,
        initial_degree: 2,
        final_degree: Some(6),
        ..GeneratorConfig::default()
    };
    generate_dataset(&config, 7).unwrap()
}

#[test]
fn dataset_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = tiny();
    write_dataset(dir.path(), &d).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap(), d);
    let snap = fs::read_to_string(dir.path().join("snapshot_01.json")).unwrap();
    assert!(snap.contains("\"egpt-dataset/1\""));
    assert!(!snap.contains("profiles"), "unchanged profiles live in profiles.csv");
}

#[test]
fn unknown_format_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &tiny()).unwrap();
    let meta = dir.path().join(META_FILE);
    let text = fs::read_to_string(&meta).unwrap().replace("egpt-dataset/1", "egpt-dataset/9");
    fs::write(&meta, text).unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, CliError::Format { .. }), "{err}");
    assert!(err.to_string().contains("egpt-dataset/9"));
}

#[test]
fn corrupt_adjacency_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &tiny()).unwrap();
    let path = dir.path().join("snapshot_02.json");
    let text = fs::read_to_string(&path).unwrap();
    // Flip one off-diagonal bit in the first row only: asymmetric.
    let row_start = text.find("\"0").or_else(|| text.find("\"1")).unwrap() + 2;
    let mut bytes = text.into_bytes();
    bytes[row_start] = if bytes[row_start] == b'0' { b'1' } else { b'0' };
    fs::write(&path, bytes).unwrap();
    assert!(matches!(read_dataset(dir.path()).unwrap_err(), CliError::Format { .. }));
}

#[test]
fn missing_directory_is_an_io_error() {
    let err = read_dataset(std::path::Path::new("/nonexistent/egpt")).unwrap_err();
    assert_eq!(err.exit_code(), egpt::error::exit::IO);
}

#[test]
fn checkpoint_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = EgptConfig::new(FeatureLayout::new(5), 8, 2);
    config.heads = 2;
    let model = EgptModel::new(config, 3).unwrap();
    let hp = Hyperparams::default();
    let path = dir.path().join("ck.json");
    checkpoint::save(&path, &Checkpoint::new(&model, &hp, 3)).unwrap();
    let (back, hp_back) = checkpoint::load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(hp_back, hp);
}

#[test]
fn checkpoint_shapes_are_checked_against_config() {
    let dir = tempfile::tempdir().unwrap();
    let model = EgptModel::new(EgptConfig::new(FeatureLayout::new(4), 8, 1), 1).unwrap();
    let mut ck = Checkpoint::new(&model, &Hyperparams::default(), 1);
    ck.config.d_h = 12;
    let path = dir.path().join("ck.json");
    checkpoint::save(&path, &ck).unwrap();
    assert!(checkpoint::load_model(&path).is_err());

    let mut ck = Checkpoint::new(&model, &Hyperparams::default(), 1);
    ck.params.swap(0, 1);
    checkpoint::save(&path, &ck).unwrap();
    let err = checkpoint::load_model(&path).unwrap_err().to_string();
    assert!(err.contains("embed.weight"), "{err}");
}

#[test]
fn predicted_snapshots_load_through_the_standard_reader() {
    let dir = tempfile::tempdir().unwrap();
    let d = tiny();
    let model = EgptModel::new(EgptConfig::new(FeatureLayout::new(12), 8, 1), 2).unwrap();
    let seq = build_sequence(&d).unwrap();
    let blocks = model.rollout(&seq, 2).unwrap();
    let predicted: Vec<_> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| decode_prediction(b, 5 + i, 0.5).unwrap())
        .collect();
    write_prediction(dir.path(), &d, predicted.clone()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.snapshots, predicted);
    assert_eq!(read_snapshot(&dir.path().join("snapshot_05.json"), &d.users).unwrap(), predicted[0]);
}
