#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lansagnn::gateway::{BackendConfig, BackendKind};
use lansagnn::pipeline::{DatasetConfig, RunConfig, SyntheticSpec};

/// Default synthetic config with every cache and run directory under `root`.
pub fn config_in(root: &Path) -> RunConfig {
    let cache = root.join("cache");
    RunConfig {
        run_root: root.join("runs"),
        kb_backend: BackendConfig::new(BackendKind::OracleExtract, &cache),
        extract_backend: BackendConfig::new(BackendKind::OracleExtract, &cache),
        ep_backend: BackendConfig::new(BackendKind::OracleEp, &cache),
        ..RunConfig::default()
    }
}

/// A smaller, faster variant for structural tests.
pub fn small_config_in(root: &Path) -> RunConfig {
    let mut c = config_in(root);
    c.dataset = DatasetConfig::Synthetic(SyntheticSpec {
        nodes_per_class: 25,
        p_in: 0.15,
        p_out: 0.02,
        ..SyntheticSpec::default()
    });
    c.runs = 2;
    c.kb_nodes = 5;
    c.n_ep_pairs = 20;
    c.train.max_epochs = 40;
    c.train.hidden = 16;
    c
}

pub fn fixed_text(c: &mut RunConfig, text: &str) {
    c.extract_backend = BackendConfig {
        fixed_text: Some(text.to_owned()),
        ..BackendConfig::new(BackendKind::FixedText, c.extract_backend.cache_dir.clone())
    };
}

/// Relative path to file bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut todo = vec![dir.to_owned()];
    while let Some(d) = todo.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                todo.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
