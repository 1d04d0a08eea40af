#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn clav(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clav"))
        .env_remove("CLAV_WORKSPACE")
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .output()
        .expect("clav runs")
}

pub fn ok(ws: &Path, args: &[&str]) -> String {
    let out = clav(ws, args);
    assert!(
        out.status.success(),
        "clav {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Word `rank` of `topic`; each topic owns 50 words drawn with weight 1/(rank+1).
pub fn zipf_word(rng: &mut ChaCha8Rng, topic: usize) -> String {
    let total: f64 = (0..50).map(|r| 1.0 / (r as f64 + 1.0)).sum();
    let mut u = rng.random::<f64>() * total;
    for r in 0..50 {
        u -= 1.0 / (r as f64 + 1.0);
        if u < 0.0 {
            return format!("t{topic}w{r:02}");
        }
    }
    format!("t{topic}w49")
}

pub fn paragraph(rng: &mut ChaCha8Rng, topic: usize, len: usize) -> String {
    (0..len).map(|_| zipf_word(rng, topic)).collect::<Vec<_>>().join(" ")
}

/// Paged contracts: 3 pages of 2 paragraphs each, topics rotating.
pub fn paged_corpus(dir: &Path, docs: usize) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for d in 0..docs {
        let pages: Vec<String> = (0..3)
            .map(|p| {
                (0..2)
                    .map(|i| paragraph(&mut rng, (d + p + i) % 3, 20))
                    .collect::<Vec<_>>()
                    .join("\n\n")
            })
            .collect();
        fs::write(dir.join(format!("avtal{d:02}.txt")), pages.join("\x0c")).unwrap();
    }
}

pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

