//! CSV/JSON emission and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Shortest decimal that round-trips the value rounded to 12 significant digits.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

/// CSV document with a mandatory header row; comment rows start with `#`.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.text, "# {text}");
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a, P: Serialize> {
    command: &'a str,
    version: &'a str,
    parameters: &'a P,
    seeds: Vec<u64>,
    outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes `body` to `out` plus a manifest beside it, or to stdout when `out` is `None`.
pub fn emit<P: Serialize>(
    body: &str,
    out: Option<&Path>,
    command: &str,
    parameters: &P,
    seeds: Vec<u64>,
) -> Result<(), CliError> {
    let Some(out) = out else {
        return io::stdout().write_all(body.as_bytes()).map_err(CliError::io);
    };
    fs::write(out, body).map_err(CliError::io)?;
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        parameters,
        seeds,
        outputs: vec![OutputDigest {
            path: out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: sha256_hex(body.as_bytes()),
        }],
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::numerical(e.to_string()))?;
    text.push('\n');
    fs::write(manifest_path(out), text).map_err(CliError::io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(2.0 * std::f64::consts::SQRT_2), "2.82842712475");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(-1.25e-9), "-0.00000000125");
        assert_eq!(num(-0.0), "0");
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&[1.0, 0.25]);
        csv.comment("done");
        assert_eq!(csv.into_string(), "a,b\n1,0.25\n# done\n");
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("/tmp/x/curve.csv")), PathBuf::from("/tmp/x/curve.csv.manifest.json"));
    }
}
