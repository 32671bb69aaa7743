//! Machine-readable reports: per-check residual records, condition
//! estimates and Bethe-root tables. Reports carry no timing so that equal
//! inputs give byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

/// The model point a record was computed at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordParams {
    pub tau_im: f64,
    pub eta: f64,
    pub l: f64,
    pub n: usize,
    pub seed: u64,
}

impl From<&RunConfig> for RecordParams {
    fn from(c: &RunConfig) -> Self {
        RecordParams {
            tau_im: c.tau_im,
            eta: c.eta,
            l: c.l,
            n: c.n,
            seed: c.seed,
        }
    }
}

/// One residual check. `residual` is `null` when the check could not be
/// evaluated (see `note`); such records never pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub check_id: String,
    /// The identity being tested, written out.
    pub relation: String,
    pub parameters: RecordParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<[u8; 2]>,
    pub residual: Option<f64>,
    pub bound: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub name: String,
    pub parameters: RecordParams,
    pub value: Option<f64>,
}

/// One Bethe root; the column set of the CSV plus the model point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootRow {
    pub sector_nu1: u8,
    pub sector_nu3: u8,
    pub eigen_index: usize,
    pub root_index: usize,
    pub re_u: f64,
    pub im_u: f64,
    pub q_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootTable {
    pub parameters: RecordParams,
    pub rows: Vec<RootRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub all_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub subcommand: String,
    pub records: Vec<Record>,
    #[serde(default)]
    pub conditions: Vec<ConditionEstimate>,
    #[serde(default)]
    pub roots: Vec<RootTable>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub summary: Summary,
}

impl Record {
    /// Passes iff the residual is finite and within the bound.
    pub fn new(
        check_id: &str,
        relation: &str,
        parameters: &RecordParams,
        residual: f64,
        bound: f64,
    ) -> Self {
        let finite = residual.is_finite();
        Record {
            check_id: check_id.to_string(),
            relation: relation.to_string(),
            parameters: parameters.clone(),
            sector: None,
            residual: finite.then_some(residual),
            bound,
            pass: finite && residual <= bound,
            note: (!finite).then(|| format!("non-finite residual ({residual})")),
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(
        check_id: &str,
        relation: &str,
        parameters: &RecordParams,
        bound: f64,
        note: impl Into<String>,
    ) -> Self {
        Record {
            check_id: check_id.to_string(),
            relation: relation.to_string(),
            parameters: parameters.clone(),
            sector: None,
            residual: None,
            bound,
            pass: false,
            note: Some(note.into()),
        }
    }

    pub fn in_sector(mut self, nu1: u8, nu3: u8) -> Self {
        self.sector = Some([nu1, nu3]);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        self.note = Some(match self.note.take() {
            Some(prev) => format!("{prev}; {note}"),
            None => note,
        });
        self
    }
}

impl Summary {
    pub fn of(records: &[Record]) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        Summary {
            total: records.len(),
            passed,
            failed: records.len() - passed,
            all_pass: passed == records.len(),
        }
    }
}

impl Report {
    pub fn new(subcommand: &str) -> Self {
        Report {
            subcommand: subcommand.to_string(),
            records: Vec::new(),
            conditions: Vec::new(),
            roots: Vec::new(),
            notes: Vec::new(),
            summary: Summary::of(&[]),
        }
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
        self.summary = Summary::of(&self.records);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = Record>) {
        self.records.extend(records);
        self.summary = Summary::of(&self.records);
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            field: format!("{}:{}", path.display(), e.path()),
            reason: e.into_inner().to_string(),
        })
    }

    /// All root rows, in table order.
    pub fn root_rows(&self) -> impl Iterator<Item = &RootRow> {
        self.roots.iter().flat_map(|t| t.rows.iter())
    }

    pub fn write_roots_csv(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        for row in self.root_rows() {
            w.serialize(row).map_err(|e| io(e.into()))?;
        }
        if self.root_rows().next().is_none() {
            // header only
            w.write_record([
                "sector_nu1",
                "sector_nu3",
                "eigen_index",
                "root_index",
                "re_u",
                "im_u",
                "q_residual",
            ])
            .map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }
}

/// Union of the inputs' records, conditions, root tables and notes, each
/// kept in order of first appearance (inputs taken in argument order);
/// exact duplicates are dropped.
pub fn merge(reports: &[Report]) -> Report {
    fn union<T: PartialEq + Clone>(out: &mut Vec<T>, items: &[T]) {
        for it in items {
            if !out.contains(it) {
                out.push(it.clone());
            }
        }
    }
    let mut merged = Report::new("report");
    for r in reports {
        union(&mut merged.records, &r.records);
        union(&mut merged.conditions, &r.conditions);
        union(&mut merged.roots, &r.roots);
        union(&mut merged.notes, &r.notes);
    }
    merged.summary = Summary::of(&merged.records);
    merged
}

/// `<dir>/<stem>_roots.csv` next to the JSON report.
pub fn roots_csv_path(json_path: &Path) -> std::path::PathBuf {
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    json_path.with_file_name(format!("{stem}_roots.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> RecordParams {
        RecordParams {
            tau_im: 1.0,
            eta: 0.15,
            l: 0.5,
            n: 2,
            seed,
        }
    }

    #[test]
    fn records_fail_on_non_finite_residuals() {
        let r = Record::new("x", "a = b", &params(1), f64::NAN, 1.0);
        assert!(!r.pass && r.residual.is_none() && r.note.is_some());
        let r = Record::new("x", "a = b", &params(1), 0.5, 1.0);
        assert!(r.pass);
        let r = Record::new("x", "a = b", &params(1), 1.5, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn merge_is_a_stable_union() {
        let a = Record::new("a", "", &params(1), 0.1, 1.0);
        let b = Record::new("b", "", &params(1), 2.0, 1.0);
        let c = Record::new("a", "", &params(2), 0.1, 1.0);
        let mut r1 = Report::new("verify-algebra");
        r1.extend([a.clone(), b.clone()]);
        let mut r2 = Report::new("verify-lattice");
        r2.extend([c.clone(), a.clone()]);
        let m = merge(&[r1, r2]);
        assert_eq!(m.records, vec![a, b, c]);
        assert_eq!(
            m.summary,
            Summary {
                total: 3,
                passed: 2,
                failed: 1,
                all_pass: false
            }
        );
    }

    #[test]
    fn json_round_trip() {
        let mut r = Report::new("spectra");
        r.push(Record::new("a", "x = y", &params(1), 1e-13, 1e-9).in_sector(0, 1));
        r.roots.push(RootTable {
            parameters: params(1),
            rows: vec![RootRow {
                sector_nu1: 0,
                sector_nu3: 1,
                eigen_index: 0,
                root_index: 0,
                re_u: 0.5,
                im_u: 0.25,
                q_residual: 1e-14,
            }],
        });
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), r.to_json());
    }

    #[test]
    fn csv_path_uses_report_stem() {
        assert_eq!(
            roots_csv_path(Path::new("/tmp/p1.json")),
            Path::new("/tmp/p1_roots.csv")
        );
    }
}
