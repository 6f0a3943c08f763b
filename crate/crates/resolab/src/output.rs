//! Result files: tab-separated tables, plot dumps and JSON documents.
//!
//! Every file opens with the same header. The `generated_unix` line is the
//! only part that changes between identical runs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

pub const ARTIFACT: &str = concat!("resolab ", env!("CARGO_PKG_VERSION"));

/// Bumped on any breaking change to the layout of result files.
pub const SCHEMA: u32 = 1;

/// Prefix of the only header line allowed to differ between reruns.
pub const TIMESTAMP_KEY: &str = "generated_unix";

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub anchor: String,
    pub generated: u64,
}

impl Header {
    pub fn new(command: &str, config_hash: String, seed: u64, anchor: &str) -> Self {
        let generated = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Header {
            command: command.into(),
            config_hash,
            seed,
            anchor: anchor.into(),
            generated,
        }
    }

    fn comment_block(&self) -> String {
        format!(
            "# artifact {ARTIFACT}\n# schema {SCHEMA}\n# command {}\n# config_sha256 {}\n# seed {}\n# anchor {}\n# {TIMESTAMP_KEY} {}\n",
            self.command, self.config_hash, self.seed, self.anchor, self.generated
        )
    }
}

/// Formats a float losslessly; non-finite values print as `nan`, `inf`, `-inf`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:e}")
    }
}

/// JSON has no NaN or infinity; those become `null`.
pub fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra `# ` lines after the rows.
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, header: &Header) -> String {
        let mut out = header.comment_block();
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        for f in &self.footer {
            out.push_str("# ");
            out.push_str(f);
            out.push('\n');
        }
        out
    }
}

/// Writes result files into one output directory.
#[derive(Debug, Clone)]
pub struct Writer {
    pub dir: PathBuf,
    pub header: Header,
    pub written: Vec<PathBuf>,
}

impl Writer {
    /// Creates the directory and checks that it accepts files.
    pub fn open(dir: &Path, header: Header) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let probe = dir.join(".resolab-write-probe");
        fs::write(&probe, b"")?;
        fs::remove_file(&probe)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            header,
            written: Vec::new(),
        })
    }

    pub fn table(&mut self, name: &str, table: &Table) -> io::Result<()> {
        self.put(name, table.render(&self.header))
    }

    /// `(x, y)` pairs for a log-log plot, one per line.
    pub fn plot(&mut self, name: &str, x: &str, y: &str, points: &[(f64, f64)]) -> io::Result<()> {
        let mut t = Table::new(&[x, y]);
        for &(a, b) in points {
            t.push(vec![num(a), num(b)]);
        }
        self.table(name, &t)
    }

    pub fn json(&mut self, name: &str, result: Value) -> io::Result<()> {
        let h = &self.header;
        let doc = json!({
            "artifact": ARTIFACT,
            "schema": SCHEMA,
            "command": h.command,
            "config_sha256": h.config_hash,
            "seed": h.seed,
            "anchor": h.anchor,
            TIMESTAMP_KEY: h.generated,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("json serializes");
        text.push('\n');
        self.put(name, text)
    }

    fn put(&mut self, name: &str, text: String) -> io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

/// Drops the timestamp line, for comparing reruns.
pub fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains(TIMESTAMP_KEY))
        .map(|l| format!("{l}\n"))
        .collect()
}
