//! Plain-text summary of an artifact set.

use std::fs;

use crate::experiment::{ArtifactSet, FIGURE_MAP};
use crate::CliError;

pub fn emit_summary(art: &ArtifactSet) -> Result<String, CliError> {
    if art.files.is_empty() {
        return Err(CliError::Usage("no artifacts to summarize".into()));
    }
    let mut s = String::new();
    s.push_str("figures:\n");
    for (prefix, what) in FIGURE_MAP {
        let files: Vec<String> = art
            .files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
            .filter(|n| n.starts_with(prefix))
            .collect();
        if !files.is_empty() {
            s.push_str(&format!("  {what}\n    {}\n", files.join(", ")));
        }
    }
    s.push_str("findings:\n");
    for f in &art.findings {
        s.push_str(&format!("  {f}\n"));
    }
    s.push_str("checks:\n");
    for c in &art.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("  [{tag}] {}: {}\n", c.name, c.detail));
    }
    Ok(s)
}

/// Writes `summary.txt` next to the artifacts and returns its text.
pub fn write_summary(art: &ArtifactSet) -> Result<String, CliError> {
    let text = emit_summary(art)?;
    let path = art.out_dir.join("summary.txt");
    fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    Ok(text)
}
