//! Reading back the CSV files written by [`super::PathEnsemble`].

use std::io::BufRead;

use crate::error::{invalid, Result};

/// Parsed CSV: `# key: value` metadata, header, and integer rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<u64>>,
}

impl CsvTable {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn read_paths_csv<R: BufRead>(reader: R) -> Result<CsvTable> {
    let mut metadata = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta.split_once(':').unwrap_or((meta, ""));
            metadata.push((k.trim().to_string(), v.trim().to_string()));
            continue;
        }
        if line.is_empty() {
            continue;
        }
        match &header {
            None => header = Some(line.split(',').map(str::to_string).collect()),
            Some(h) => {
                let row = line
                    .split(',')
                    .map(|f| f.parse::<u64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
                if row.len() != h.len() {
                    return Err(invalid(format!(
                        "line {}: {} fields, header has {}",
                        n + 1,
                        row.len(),
                        h.len()
                    )));
                }
                rows.push(row);
            }
        }
    }
    let header = header.ok_or_else(|| invalid("CSV has no header row"))?;
    Ok(CsvTable { metadata, header, rows })
}
