//! Deterministic CSV emission with a config-hash comment header.

use std::fmt::Write as _;

/// FNV-1a over the canonical config string; stable across runs and
/// platforms, so identical configs produce identical headers.
pub fn config_hash(canonical: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str, config_canonical: &str) -> Self {
        let mut buf = String::new();
        let _ = writeln!(
            buf,
            "# bridge-green v{} config_hash={:016x}",
            env!("CARGO_PKG_VERSION"),
            config_hash(config_canonical)
        );
        let _ = writeln!(buf, "{header}");
        Self { buf }
    }

    pub fn row(&mut self, fields: &[CsvField]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            match f {
                CsvField::Num(v) => {
                    if v.is_finite() {
                        let _ = write!(self.buf, "{v:.12e}");
                    } else {
                        let _ = write!(self.buf, "{v}");
                    }
                }
                CsvField::Str(s) => self.buf.push_str(s),
                CsvField::Empty => {}
            }
        }
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

pub enum CsvField {
    Num(f64),
    Str(String),
    Empty,
}

/// Write to the path, or to stdout when no path was given.
pub fn emit(out: Option<&std::path::Path>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
