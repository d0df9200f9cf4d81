//! Synthetic datasets, result files and scripted trackers for driving the
//! `giteval` binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const FRAME_W: u32 = 48;
pub const FRAME_H: u32 = 36;

pub struct SequenceSpec {
    pub name: &'static str,
    pub frames: usize,
    /// 1-based frames without the target.
    pub absent: Vec<usize>,
    pub shotcut: Vec<usize>,
    pub restarts: Vec<usize>,
    /// Pixels the texture moves per frame; 0 gives identical frames.
    pub speed: u32,
}

impl SequenceSpec {
    pub fn new(name: &'static str, frames: usize) -> Self {
        Self {
            name,
            frames,
            absent: vec![],
            shotcut: vec![],
            restarts: vec![],
            speed: 1,
        }
    }

    pub fn restarts(mut self, r: &[usize]) -> Self {
        self.restarts = r.to_vec();
        self
    }

    pub fn absent(mut self, a: &[usize]) -> Self {
        self.absent = a.to_vec();
        self
    }

    pub fn speed(mut self, s: u32) -> Self {
        self.speed = s;
        self
    }
}

/// Ground-truth box of 1-based frame `k`.
pub fn gt_box(k: usize) -> [f64; 4] {
    [8.0 + (k - 1) as f64, 10.0, 12.0, 9.0]
}

pub fn write_sequence(root: &Path, spec: &SequenceSpec) -> PathBuf {
    let dir = root.join(spec.name);
    fs::create_dir_all(dir.join("frames")).unwrap();
    let mut gt = String::new();
    for k in 1..=spec.frames {
        let shift = spec.speed * (k as u32 - 1);
        let img = image::RgbImage::from_fn(FRAME_W, FRAME_H, |x, y| {
            let v = ((x + shift) * 37 + y * 91 + (x + shift) * y * 7) % 251;
            image::Rgb([v as u8, (v * 3 % 256) as u8, (255 - v) as u8])
        });
        img.save(dir.join("frames").join(format!("{k:05}.png"))).unwrap();
        if spec.absent.contains(&k) {
            gt.push_str("NaN,NaN,NaN,NaN\n");
        } else {
            let b = gt_box(k);
            gt.push_str(&format!("{},{},{},{}\n", b[0], b[1], b[2], b[3]));
        }
    }
    fs::write(dir.join("groundtruth.txt"), gt).unwrap();
    let list = |v: &[usize]| v.iter().map(|k| format!("{k}\n")).collect::<String>();
    if !spec.shotcut.is_empty() {
        fs::write(dir.join("shotcut.txt"), list(&spec.shotcut)).unwrap();
    }
    if !spec.restarts.is_empty() {
        fs::write(dir.join("restart.txt"), list(&spec.restarts)).unwrap();
    }
    dir
}

pub fn write_dataset(root: &Path, specs: &[SequenceSpec]) -> PathBuf {
    let dir = root.join("dataset");
    for s in specs {
        write_sequence(&dir, s);
    }
    dir
}

/// Writes `<results>/<tracker>/<sequence>.txt` with `predict(k)` per frame.
pub fn write_results(
    results: &Path,
    tracker: &str,
    spec: &SequenceSpec,
    predict: impl Fn(usize) -> Option<[f64; 4]>,
) {
    let dir = results.join(tracker);
    fs::create_dir_all(&dir).unwrap();
    let text: String = (1..=spec.frames)
        .map(|k| match predict(k) {
            Some(b) => format!("{},{},{},{}\n", b[0], b[1], b[2], b[3]),
            None => "NaN,NaN,NaN,NaN\n".to_string(),
        })
        .collect();
    fs::write(dir.join(format!("{}.txt", spec.name)), text).unwrap();
}

/// Shell tracker that answers with the sequence's own ground truth.
/// Init messages carrying `"sequence":"crash"` make it exit.
pub const ORACLE_TRACKER: &str = r#"
while IFS= read -r line; do
  case "$line" in
    *'"sequence":"crash"'*) exit 3 ;;
    *'"type":"init"'*|*'"type":"restart"'*)
      p=$(printf '%s' "$line" | sed 's/.*"path":"\([^"]*\)".*/\1/')
      gt="$(dirname "$(dirname "$p")")/groundtruth.txt"
      echo '{"type":"ready"}' ;;
    *'"type":"frame"'*)
      i=$(printf '%s' "$line" | sed 's/.*"index":\([0-9]*\).*/\1/')
      b=$(sed -n "${i}p" "$gt" | sed 's/NaN/0/g')
      echo "{\"type\":\"prediction\",\"index\":$i,\"box\":[$b]}" ;;
    *'"type":"end"'*) exit 0 ;;
  esac
done
"#;

/// Shell tracker that always answers with a box in the frame corner.
pub const CORNER_TRACKER: &str = r#"
while IFS= read -r line; do
  case "$line" in
    *'"type":"init"'*|*'"type":"restart"'*) echo '{"type":"ready"}' ;;
    *'"type":"frame"'*)
      i=$(printf '%s' "$line" | sed 's/.*"index":\([0-9]*\).*/\1/')
      echo "{\"type\":\"prediction\",\"index\":$i,\"box\":[40,30,3,3]}" ;;
    *'"type":"end"'*) exit 0 ;;
  esac
done
"#;

/// Writes a tracker script into `dir` and returns the command running it.
pub fn tracker_command(dir: &Path, name: &str, script: &str) -> String {
    let path = dir.join(format!("{name}.sh"));
    fs::write(&path, script).unwrap();
    format!("sh {}", path.display())
}

pub fn giteval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_giteval"))
        .args(args)
        .env_remove("GITEVAL_CONFIG")
        .output()
        .expect("running giteval")
}

pub fn giteval_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_giteval"))
        .args(args)
        .env(key, value)
        .output()
        .expect("running giteval")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every file below `root` with its contents, keyed by relative path.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
