//! Replays the checked-in fuzz corpus through the same entry points and
//! roundtrip assertions as the fuzz targets, on the stable toolchain.

use std::path::PathBuf;

use icvec_cli::scenario::to_toml;
use icvec_cli::ScenarioFile;
use icvec_core::backhaul::wire::{decode, encode};
use icvec_core::training::TrainingSet;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn wire_decode_corpus() {
    let mut decoded = 0;
    for (name, bytes) in corpus("wire_decode") {
        if let Ok(msg) = decode(&bytes) {
            let again = decode(&encode(&msg).unwrap()).unwrap();
            assert_eq!(again, msg, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 5);
}

#[test]
fn scenario_toml_corpus() {
    let mut parsed = 0;
    for (name, bytes) in corpus("scenario_toml") {
        let Ok(text) = std::str::from_utf8(&bytes) else { continue };
        if let Ok(s) = ScenarioFile::parse(text) {
            let back = ScenarioFile::parse(&to_toml(&s).unwrap()).unwrap();
            assert_eq!(back, s, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 6);
}

#[test]
fn training_csv_corpus() {
    let mut parsed = 0;
    for (name, bytes) in corpus("training_csv") {
        if let Ok(set) = TrainingSet::read_csv(bytes.as_slice()) {
            let mut out = Vec::new();
            set.write_csv(&mut out).unwrap();
            assert_eq!(TrainingSet::read_csv(out.as_slice()).unwrap().full(), set.full(), "{name}");
            parsed += 1;
        }
    }
    assert_eq!(parsed, 2);
}
