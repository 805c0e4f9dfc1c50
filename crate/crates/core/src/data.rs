//! Grouped binary-response data with fixed- and random-effect design
//! vectors, and the delimited text format the CLI reads and writes.
//!
//! The on-disk format is a UTF-8 comma-separated file with header
//! `group,y,xF1,…,xFp,xR1,…,xRq`. Rows belonging to the same group
//! label are collected together; label order of first appearance is
//! preserved. Decimal points only, no locale variation.

use crate::error::{Error, Result};

/// One Bernoulli response with its design vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: u8,
    pub x_f: Vec<f64>,
    pub x_r: Vec<f64>,
}

/// All observations sharing one random-effect vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: String,
    pub obs: Vec<Observation>,
}

impl Group {
    #[inline]
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// A dataset of `m` groups with declared design dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub d_f: usize,
    pub d_r: usize,
    pub groups: Vec<Group>,
}

impl GroupedDataset {
    pub fn new(d_f: usize, d_r: usize, groups: Vec<Group>) -> Result<Self> {
        let ds = GroupedDataset { d_f, d_r, groups };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_f == 0 || self.d_r == 0 {
            return Err(Error::Dimension(
                "both design dimensions must be at least 1".into(),
            ));
        }
        if self.groups.is_empty() {
            return Err(Error::Dimension("dataset needs at least one group".into()));
        }
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::Dimension(format!("group {} is empty", g.label)));
            }
            for o in &g.obs {
                if o.y > 1 {
                    return Err(Error::InvalidArgument(format!(
                        "group {}: response must be 0 or 1",
                        g.label
                    )));
                }
                if o.x_f.len() != self.d_f || o.x_r.len() != self.d_r {
                    return Err(Error::Dimension(format!(
                        "group {}: design vector length mismatch",
                        g.label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    /// Parse the delimited text format. Errors carry 1-based line numbers.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "group" || cols[1] != "y" {
            return Err(Error::Parse {
                line: 1,
                message: "header must start with 'group,y' followed by xF and xR columns".into(),
            });
        }
        let d_f = cols.iter().filter(|c| c.starts_with("xF")).count();
        let d_r = cols.iter().filter(|c| c.starts_with("xR")).count();
        if d_f == 0 || d_r == 0 || 2 + d_f + d_r != cols.len() {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header needs xF1.. and xR1.. columns covering all {} fields",
                    cols.len()
                ),
            });
        }

        let mut groups: Vec<Group> = Vec::new();
        let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
        for (i, raw) in lines {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            let label = fields[0].to_string();
            let y: u8 = match fields[1] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("response must be 0 or 1, got '{other}'"),
                    })
                }
            };
            let parse_f64 = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("cannot parse {what} value '{s}'"),
                })
            };
            let mut x_f = Vec::with_capacity(d_f);
            for k in 0..d_f {
                x_f.push(parse_f64(fields[2 + k], "xF")?);
            }
            let mut x_r = Vec::with_capacity(d_r);
            for k in 0..d_r {
                x_r.push(parse_f64(fields[2 + d_f + k], "xR")?);
            }
            let gi = *index.entry(label.clone()).or_insert_with(|| {
                groups.push(Group {
                    label,
                    obs: Vec::new(),
                });
                groups.len() - 1
            });
            groups[gi].obs.push(Observation { y, x_f, x_r });
        }
        if groups.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "no data rows".into(),
            });
        }
        GroupedDataset::new(d_f, d_r, groups)
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    /// Serialize back to the delimited text format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("group,y");
        for k in 1..=self.d_f {
            out.push_str(&format!(",xF{k}"));
        }
        for k in 1..=self.d_r {
            out.push_str(&format!(",xR{k}"));
        }
        out.push('\n');
        for g in &self.groups {
            for o in &g.obs {
                out.push_str(&g.label);
                out.push(',');
                out.push_str(if o.y == 1 { "1" } else { "0" });
                for v in &o.x_f {
                    out.push_str(&format!(",{v}"));
                }
                for v in &o.x_r {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}
