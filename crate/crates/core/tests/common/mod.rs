#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use duplex_coupling::experiments::{ExperimentConfig, GridSpec, ProbeSettings};
use duplex_coupling::probe::{Perspective, Task};
use duplex_coupling::Variant;

/// Two cells, ten-second dialogues, a short probe sweep.
pub fn tiny_config(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        grid: GridSpec {
            noise_levels: vec![0.0, 0.7],
            bias_levels: vec![0.0],
            pairings: vec![(Variant::Default, Variant::Default)],
            seeds,
            duration_s: 10.0,
            max_lag_frames: 10,
            min_overlap: 50,
            ..GridSpec::default()
        },
        probe: ProbeSettings {
            tasks: vec![Task::Eoi],
            perspectives: vec![Perspective::Production],
            delays_frames: vec![0, 2],
            hidden_size: 4,
            epochs: 2,
            ..ProbeSettings::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Structural XML check: balanced tags, quoted attributes, escaped text, an
/// `svg` root carrying a viewBox.
pub fn check_svg(text: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    let mut saw_root = false;
    while let Some(open) = rest.find('<') {
        let between = &rest[..open];
        if between.contains('>') {
            return Err(format!("stray '>' in text {between:?}"));
        }
        check_text(between)?;
        rest = &rest[open..];
        if let Some(body) = rest.strip_prefix("<?") {
            let end = body.find("?>").ok_or("unterminated declaration")?;
            rest = &body[end + 2..];
            continue;
        }
        if let Some(body) = rest.strip_prefix("<!--") {
            let end = body.find("-->").ok_or("unterminated comment")?;
            rest = &body[end + 3..];
            continue;
        }
        let close = rest.find('>').ok_or("unterminated tag")?;
        let tag = &rest[1..close];
        rest = &rest[close + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name.trim() => {}
                other => return Err(format!("</{name}> closes {other:?}")),
            }
            continue;
        }
        let self_closing = tag.ends_with('/');
        let tag = tag.trim_end_matches('/');
        let name = tag.split_whitespace().next().ok_or("empty tag")?.to_string();
        check_attributes(&tag[name.len()..])?;
        if stack.is_empty() {
            if saw_root || name != "svg" {
                return Err(format!("unexpected root element {name}"));
            }
            if !tag.contains("viewBox=\"") {
                return Err("svg root lacks viewBox".into());
            }
            saw_root = true;
        }
        if !self_closing {
            stack.push(name);
        }
    }
    check_text(rest)?;
    if !stack.is_empty() {
        return Err(format!("unclosed elements {stack:?}"));
    }
    if !saw_root {
        return Err("no root element".into());
    }
    Ok(())
}

fn check_text(t: &str) -> Result<(), String> {
    let mut s = t;
    while let Some(i) = s.find('&') {
        let tail = &s[i..];
        let ok = ["&amp;", "&lt;", "&gt;", "&quot;", "&apos;"]
            .iter()
            .any(|e| tail.starts_with(e));
        if !ok {
            return Err(format!("unescaped '&' in {t:?}"));
        }
        s = &s[i + 1..];
    }
    Ok(())
}

fn check_attributes(s: &str) -> Result<(), String> {
    let mut rest = s.trim();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or(format!("attribute without value in {s:?}"))?;
        let name = rest[..eq].trim();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("bad attribute name {name:?}"));
        }
        let after = &rest[eq + 1..];
        let body = after.strip_prefix('"').ok_or(format!("unquoted attribute {name}"))?;
        let end = body.find('"').ok_or("unterminated attribute")?;
        let value = &body[..end];
        if value.contains('<') {
            return Err(format!("'<' inside attribute {name}"));
        }
        check_text(value)?;
        rest = body[end + 1..].trim_start();
    }
    Ok(())
}
