//! Split manifest: one `split design [labels]` entry per line, `#` comments.
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use hgn_congestion::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub design: PathBuf,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub train: Vec<Entry>,
    pub val: Vec<Entry>,
    pub test: Vec<Entry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(Error::Schema {
                    line: i + 1,
                    message: "expected `split design [labels]`".into(),
                });
            }
            let entry = Entry {
                design: base.join(parts[1]),
                labels: parts.get(2).map(|p| base.join(p)),
            };
            match parts[0] {
                "train" => m.train.push(entry),
                "val" => m.val.push(entry),
                "test" => m.test.push(entry),
                other => {
                    return Err(Error::Schema {
                        line: i + 1,
                        message: format!("unknown split `{other}`"),
                    })
                }
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::commands::with_path(path, e))?;
        Manifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn split(&self, name: &str) -> Result<&[Entry]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{name}`"))),
        }
    }
}
