//! CSV assembly with the leading run-manifest comment.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

/// Rows are buffered and written in one go so a failed run leaves no partial file.
pub struct CsvOut {
    text: String,
}

impl CsvOut {
    pub fn new(manifest: &Value, header: &[&str]) -> Self {
        let mut text = format!("# {manifest}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn comment(&mut self, line: &str) {
        self.text.push_str("# ");
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn finish(self, out: Option<&Path>) -> std::io::Result<()> {
        match out {
            Some(p) => std::fs::write(p, self.text),
            None => {
                let mut so = std::io::stdout().lock();
                so.write_all(self.text.as_bytes())?;
                so.flush()
            }
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}
