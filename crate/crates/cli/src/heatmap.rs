//! Attention matrices from `translate --attention` rendered as a binary
//! greymap (PGM P5, white = weight 1) and as ASCII shading.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

const SHADES: &[u8] = b" .:-=+*#%@";

#[derive(Debug, Deserialize)]
pub struct AttentionRecord {
    pub id: usize,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub attention: Vec<Vec<f64>>,
}

pub fn find(text: &str, id: usize) -> Result<AttentionRecord> {
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AttentionRecord = serde_json::from_str(line).with_context(|| format!("attention line {}", n + 1))?;
        if rec.id == id {
            for (i, row) in rec.attention.iter().enumerate() {
                if row.len() != rec.source.len() {
                    bail!(
                        "sentence {id}: attention row {i} has {} columns, source has {}",
                        row.len(),
                        rec.source.len()
                    );
                }
            }
            return Ok(rec);
        }
    }
    bail!("no sentence with id {id}")
}

/// One `cell`×`cell` block per (target, source) weight.
pub fn pgm(rec: &AttentionRecord, cell: usize) -> Vec<u8> {
    let cell = cell.max(1);
    let (w, h) = (rec.source.len() * cell, rec.attention.len() * cell);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in &rec.attention {
        let line: Vec<u8> = row
            .iter()
            .flat_map(|&a| std::iter::repeat_n((a.clamp(0.0, 1.0) * 255.0).round() as u8, cell))
            .collect();
        for _ in 0..cell {
            out.extend_from_slice(&line);
        }
    }
    out
}

pub fn ascii(rec: &AttentionRecord) -> String {
    let label_w = rec.target.iter().map(|t| t.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (i, row) in rec.attention.iter().enumerate() {
        let label = rec.target.get(i).map_or("<eos>", String::as_str);
        out.push_str(&format!("{label:>label_w$} |"));
        for &a in row {
            let k = ((a.clamp(0.0, 1.0) * (SHADES.len() - 1) as f64).round()) as usize;
            out.push(SHADES[k] as char);
        }
        out.push('\n');
    }
    out.push_str(&format!("{:>label_w$}  {}\n", "", rec.source.join(" ")));
    out
}

pub fn run(attention: &Path, id: usize, pgm_path: Option<&Path>, cell: usize, ascii_path: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(attention).with_context(|| format!("cannot read {}", attention.display()))?;
    let rec = find(&text, id)?;
    if let Some(p) = pgm_path {
        fs::write(p, pgm(&rec, cell)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let art = ascii(&rec);
    match ascii_path {
        Some(p) => fs::write(p, art)?,
        None => std::io::stdout().write_all(art.as_bytes())?,
    }
    Ok(())
}
