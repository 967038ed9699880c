//! Helpers shared by the CLI integration tests and the acceptance harness.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const BIN: &str = env!("CARGO_BIN_EXE_nqs-geom");

pub const DEMOS: [&str; 3] = ["markov-chain", "qutrit-metric", "qutrit-holonomy"];

pub fn bundled_sources() -> Vec<&'static str> {
    vec![
        include_str!("../../scenarios/markov_chain.nqs"),
        include_str!("../../scenarios/qutrit.nqs"),
        include_str!("../../scenarios/qutrit_holonomy.nqs"),
    ]
}

pub fn run_bin(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("NQS_GEOM_JOBS")
        .output()
        .expect("binary runs")
}

/// Fresh scratch directory under the system temp dir.
pub fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nqs-geom-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).expect("write scenario");
    p
}

fn random_scalar(rng: &mut ChaCha8Rng) -> Value {
    let pool = [
        json!(0),
        json!(-1),
        json!(1),
        json!(2),
        json!(0.5),
        json!(-0.5),
        json!(1e-300),
        json!(1e300),
        json!(-1e300),
        json!(9007199254740993u64),
        json!(4294967296u64),
        json!(17),
        json!(5001),
        json!(0.49),
        json!(1e6),
        json!(null),
        json!(true),
        json!(""),
        json!("C2"),
        json!("random"),
        json!("lindblad"),
        json!("hessian"),
        json!("analyze-context"),
        json!([]),
        json!({}),
        json!([[1, 0], [0, 1]]),
        json!([1, 2]),
    ];
    pool[rng.random_range(0..pool.len())].clone()
}

/// Collects every node path in `v`.
fn paths(v: &Value, prefix: &mut Vec<Value>, out: &mut Vec<Vec<Value>>) {
    out.push(prefix.clone());
    match v {
        Value::Object(m) => {
            for (k, c) in m {
                prefix.push(json!(k));
                paths(c, prefix, out);
                prefix.pop();
            }
        }
        Value::Array(a) => {
            for (i, c) in a.iter().enumerate() {
                prefix.push(json!(i));
                paths(c, prefix, out);
                prefix.pop();
            }
        }
        _ => {}
    }
}

fn node_mut<'a>(v: &'a mut Value, path: &[Value]) -> &'a mut Value {
    path.iter().fold(v, |node, key| match key {
        Value::String(k) => &mut node[k.as_str()],
        Value::Number(i) => &mut node[i.as_u64().unwrap() as usize],
        _ => unreachable!(),
    })
}

fn structural_mutation(doc: &mut Value, rng: &mut ChaCha8Rng) {
    let mut all = Vec::new();
    paths(doc, &mut Vec::new(), &mut all);
    let path = all[rng.random_range(0..all.len())].clone();
    match rng.random_range(0..6) {
        // replace the node
        0 | 1 => *node_mut(doc, &path) = random_scalar(rng),
        // perturb a number
        2 => {
            let node = node_mut(doc, &path);
            if let Some(x) = node.as_f64() {
                let factor = [-1.0, 0.0, 2.0, 1e-9, 1e9, 1.0 + 1e-7][rng.random_range(0..6)];
                *node = json!(x * factor);
            } else {
                *node = random_scalar(rng);
            }
        }
        // drop a key or an element
        3 => {
            if let Some((last, parent)) = path.split_last() {
                match (node_mut(doc, parent), last) {
                    (Value::Object(m), Value::String(k)) => {
                        m.remove(k);
                    }
                    (Value::Array(a), Value::Number(i)) => {
                        a.remove(i.as_u64().unwrap() as usize);
                    }
                    _ => {}
                }
            }
        }
        // duplicate an array element or add a stray key
        4 => match node_mut(doc, &path) {
            Value::Array(a) if !a.is_empty() => {
                let k = rng.random_range(0..a.len());
                let dup = a[k].clone();
                a.push(dup);
            }
            Value::Object(m) => {
                m.insert("stray".into(), random_scalar(rng));
            }
            other => *other = json!([other.clone()]),
        },
        // swap in a subtree from elsewhere in the document
        _ => {
            let donor = all[rng.random_range(0..all.len())].clone();
            let value = node_mut(doc, &donor).clone();
            *node_mut(doc, &path) = value;
        }
    }
}

fn textual_mutation(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut bytes = text.as_bytes().to_vec();
    let n = bytes.len();
    match rng.random_range(0..4) {
        0 => bytes.truncate(rng.random_range(0..n)),
        1 => {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..40)).min(n);
            bytes.drain(a..b);
        }
        2 => {
            let at = rng.random_range(0..n);
            let junk = [b'{', b'}', b'[', b']', b',', b':', b'"', b'-', b'e', b'9', b'.', 0xff, b'\\'];
            for _ in 0..rng.random_range(1..5) {
                bytes.insert(at, junk[rng.random_range(0..junk.len())]);
            }
        }
        _ => {
            let at = rng.random_range(0..n);
            bytes[at] = rng.random_range(0..=255u8);
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

/// `count` mutants of the bundled scenarios, deterministic in `seed`. About a
/// quarter are byte-level corruptions; the rest are structural edits of the
/// parsed document with one to three mutations each.
pub fn mutation_corpus(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = bundled_sources();
    (0..count)
        .map(|_| {
            let text = sources[rng.random_range(0..sources.len())];
            if rng.random_bool(0.25) {
                textual_mutation(text, &mut rng)
            } else {
                let mut doc: Value = serde_json::from_str(text).unwrap();
                for _ in 0..rng.random_range(1..=3) {
                    structural_mutation(&mut doc, &mut rng);
                }
                serde_json::to_string_pretty(&doc).unwrap()
            }
        })
        .collect()
}

/// Why a run of the binary did not end in a structured outcome, if it did not.
pub fn unstructured(out: &Output) -> Option<String> {
    let stderr = String::from_utf8_lossy(&out.stderr);
    if stderr.contains("panicked") {
        return Some(format!("panic: {stderr}"));
    }
    match out.status.code() {
        Some(0) | Some(1) => {
            let report: Value = match serde_json::from_slice(&out.stdout) {
                Ok(v) => v,
                Err(e) => return Some(format!("report is not JSON: {e}")),
            };
            let results = report["results"].as_object()?;
            let failed = results.values().filter(|r| r["status"] == "error").count();
            if results.values().any(|r| r["error"]["code"] == "internal") {
                return Some("task hit an internal error".into());
            }
            let expected = if failed == 0 { 0 } else { 1 };
            (out.status.code() != Some(expected)).then(|| format!("exit code {:?} with {failed} failed tasks", out.status.code()))
        }
        Some(2) => {
            let err: Value = match serde_json::from_slice(&out.stderr) {
                Ok(v) => v,
                Err(e) => return Some(format!("error output is not JSON ({e}): {stderr}")),
            };
            err["error"]["code"].as_str().is_none().then(|| format!("error without code: {stderr}"))
        }
        other => Some(format!("exit status {other:?}: {stderr}")),
    }
}

/// Runs every file of the corpus through `nqs-geom run` on a few worker threads
/// and returns the failures.
pub fn fuzz_binary(corpus: &[String], tag: &str) -> (Vec<String>, [usize; 3]) {
    let dir = scratch_dir(tag);
    let files: Vec<PathBuf> = corpus
        .iter()
        .enumerate()
        .map(|(i, text)| write(&dir, &format!("mutant_{i:04}.nqs"), text))
        .collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2).min(8);
    let chunks: Vec<&[PathBuf]> = files.chunks(files.len().div_ceil(workers).max(1)).collect();
    let outcomes: Vec<(String, Option<String>, Option<i32>)> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|f| {
                            let out = run_bin(&["run", f.to_str().unwrap(), "--jobs", "1"]);
                            (f.display().to_string(), unstructured(&out), out.status.code())
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let mut counts = [0usize; 3];
    let mut failures = Vec::new();
    for (file, problem, code) in outcomes {
        if let Some(c @ 0..=2) = code {
            counts[c as usize] += 1;
        }
        if let Some(p) = problem {
            failures.push(format!("{file}: {p}"));
        }
    }
    if failures.is_empty() {
        let _ = std::fs::remove_dir_all(&dir);
    }
    (failures, counts)
}
