//! Harness bodies shared by the fuzz targets and the seed replay test.

use fistlab::datastore::{decode_dataset, encode_dataset, DatasetManifest};
use fistlab::imitator::{parse_jsonl, summarize_records, PolicyKind};
use fistlab::maze::{MazeLayout, Region};
use fistlab::numerics::params::{decode_param, CheckpointManifest, ParamEntry};
use fistlab::pipeline::{render_svg, ExperimentConfig, RunManifest};

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn dataset_manifest(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(m) = DatasetManifest::parse(s) {
        let again = DatasetManifest::parse(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(again, m);
    }
}

/// Header bytes pick dimensions, trajectory lengths and whether the
/// checksums match; the rest is split into the two arrays.
pub fn dataset_decode(data: &[u8]) {
    if data.len() < 4 {
        return;
    }
    let sd = (data[0] % 8 + 1) as usize;
    let ad = (data[1] % 4 + 1) as usize;
    let n_traj = (data[2] % 4) as usize;
    let flags = data[3];
    let Some(len_bytes) = data.get(4..4 + n_traj) else { return };
    let lengths: Vec<usize> = len_bytes.iter().map(|b| (b % 6 + 1) as usize).collect();
    let rest = &data[4 + n_traj..];
    let n: usize = lengths.iter().sum();
    let cut = rest.len().min(n * sd * 4);
    let (states, actions) = rest.split_at(cut);
    let honest = flags & 1 == 1;
    let manifest = DatasetManifest {
        format_version: 1,
        dtype: "f32".into(),
        endianness: "little".into(),
        state_dim: sd,
        action_dim: ad,
        num_trajectories: lengths.len(),
        num_transitions: n,
        lengths,
        states_crc32: if honest { crc32fast::hash(states) } else { 0 },
        actions_crc32: if honest { crc32fast::hash(actions) } else { 0 },
        seed: 0,
        config_hash: String::new(),
        extra: serde_json::Value::Null,
    };
    let manifest = DatasetManifest::parse(&serde_json::to_string(&manifest).unwrap()).unwrap();
    if let Ok(d) = decode_dataset(&manifest, states, actions) {
        let (m2, s2, a2) = encode_dataset(&d);
        assert_eq!(s2, states);
        assert_eq!(a2, actions);
        assert_eq!(m2.lengths, manifest.lengths);
    }
}

pub fn checkpoint_manifest(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(m) = CheckpointManifest::parse(s) {
        let again = CheckpointManifest::parse(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(again.params, m.params);
    }
}

pub fn checkpoint_param(data: &[u8]) {
    if data.len() < 2 {
        return;
    }
    let ndims = (data[0] % 3 + 1) as usize;
    let Some(dims) = data.get(1..1 + ndims) else { return };
    let shape: Vec<usize> = dims.iter().map(|d| (d % 8) as usize).collect();
    let Some(&flag) = data.get(1 + ndims) else { return };
    let bytes = &data[2 + ndims..];
    let entry = ParamEntry {
        name: "p".into(),
        shape: shape.clone(),
        file: "p.bin".into(),
        crc32: if flag & 1 == 1 { crc32fast::hash(bytes) } else { flag as u32 },
    };
    if let Ok(values) = decode_param(&entry, bytes) {
        assert_eq!(values.len(), shape.iter().product::<usize>());
        let back: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let same = back.chunks(4).zip(bytes.chunks(4)).all(|(a, b)| {
            let (x, y) = (f32::from_le_bytes([a[0], a[1], a[2], a[3]]), f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
            x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())
        });
        assert!(same);
    }
}

pub fn layout_parse(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(layout) = s.parse::<MazeLayout>() {
        let again: MazeLayout = layout.to_string().parse().unwrap();
        assert_eq!(again, layout);
        assert!(!layout.free_cells().is_empty());
    }
}

pub fn episode_log(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(records) = parse_jsonl(s) {
        if let Ok(rows) = summarize_records(&records) {
            for r in &rows {
                assert!((0.0..=1.0).contains(&r.normalized_score));
            }
            if !rows.is_empty() {
                render_svg(&rows).unwrap();
            }
        }
    }
}

pub fn experiment_config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(c) = ExperimentConfig::parse(s) {
        let _ = c.validate();
        let again = ExperimentConfig::parse(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again.content_hash(), c.content_hash());
    }
}

pub fn run_manifest(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(m) = RunManifest::parse(s) {
        let again = RunManifest::parse(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(again, m);
    }
}

pub fn names(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(r) = s.parse::<Region>() {
        assert_eq!(r.name().parse::<Region>().unwrap(), r);
    }
    if let Ok(k) = s.parse::<PolicyKind>() {
        assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
    }
}
