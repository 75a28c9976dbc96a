//! The example configurations shipped in `configs/` stay valid.

use nlc2_core::config::{load_config, load_study_config, reference_text};
use std::path::{Path, PathBuf};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn every_example_parses() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if !name.ends_with(".ini") || name == "reference.ini" {
            continue;
        }
        if name.starts_with("study_") {
            let s = load_study_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(s.ladder.len() >= 3, "{name}");
        } else {
            load_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn reference_file_matches_the_built_in_text() {
    let on_disk = std::fs::read_to_string(configs_dir().join("reference.ini")).unwrap();
    assert_eq!(
        on_disk,
        reference_text(),
        "regenerate with `nlc2 config-reference > configs/reference.ini`"
    );
}
