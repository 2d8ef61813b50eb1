#![allow(dead_code)]

pub mod conformance;

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use arro::synth::{generate, reference_scene, SynthBackground, SynthEpisode};
use arro::{Frame, Mask};

/// SHA-256 of every file under `root`, keyed by relative path.
pub fn hash_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, Sha256::digest(std::fs::read(&p).unwrap()).to_vec());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn clutter_episode(id: &str, seed: u64, res: [u32; 2], len: u32) -> SynthEpisode {
    generate(&reference_scene(id, res, len, SynthBackground::Clutter { seed, count: 60 })).unwrap()
}

/// Write `n` reference episodes with distinct clutter under `root`.
pub fn write_dataset(root: &Path, n: u32, len: u32) {
    for k in 0..n {
        let id = format!("ep-{k:03}");
        clutter_episode(&id, 100 + k as u64, [160, 96], len).write(&root.join(&id)).unwrap();
    }
}

/// A small RGB test card: gray field, red block, blue block.
pub fn card(w: u32, h: u32) -> Frame {
    Frame::from_fn(w, h, |x, y| {
        if (8..20).contains(&x) && (8..20).contains(&y) {
            [220, 30, 30]
        } else if (36..50).contains(&x) && (20..34).contains(&y) {
            [30, 40, 220]
        } else {
            [120, 120, 120]
        }
    })
}

pub fn red_block(w: u32, h: u32) -> Mask {
    Mask::rect(w, h, 8, 8, 20, 20)
}

pub fn blue_block(w: u32, h: u32) -> Mask {
    Mask::rect(w, h, 36, 20, 50, 34)
}
