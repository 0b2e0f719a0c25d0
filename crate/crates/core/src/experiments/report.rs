use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiments::config::CampaignId;
use crate::Result;

/// Bumped whenever a campaign's column layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// One row: a replicate, the cell within it, and the campaign's columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub replicate: usize,
    pub cell: String,
    /// Aligned with [`CampaignReport::columns`]; `NaN` where a replicate failed.
    pub values: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Predicate {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: u32,
    pub config_sha256: String,
    pub seed: u64,
    /// Hex key of the campaign stream; replicate `i` uses its child `i`.
    pub campaign_stream: String,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub campaign: CampaignId,
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub predicates: Vec<Predicate>,
    pub passed: bool,
}

impl CampaignReport {
    pub fn aggregate(&self, name: &str) -> Option<f64> {
        self.aggregates.iter().find(|a| a.name == name).map(|a| a.value)
    }

    pub fn predicate(&self, name: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn failed_replicates(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// Values of one column over all successful records.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(j) = self.columns.iter().position(|c| c == name) else {
            return Vec::new();
        };
        self.records.iter().filter(|r| r.error.is_none()).map(|r| r.values[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# schema={} campaign={} config_sha256={} seed={}",
            self.provenance.schema, self.campaign, self.provenance.config_sha256, self.provenance.seed
        )?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["replicate".to_string(), "cell".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("error".into());
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.replicate.to_string(), r.cell.clone()];
            row.extend(r.values.iter().map(|v| v.to_string()));
            row.push(r.error.clone().unwrap_or_default());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Write `<dir>/<campaign>.csv` or `.json`, creating `dir` if needed.
pub fn emit_report(report: &CampaignReport, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    };
    let path = dir.join(format!("{}.{ext}", report.campaign));
    let file = std::io::BufWriter::new(fs::File::create(&path)?);
    match format {
        ReportFormat::Csv => report.write_csv(file)?,
        ReportFormat::Json => report.write_json(file)?,
    }
    Ok(path)
}

#[cfg(test)]
mod unit {
    use super::*;

    fn report(records: Vec<Record>) -> CampaignReport {
        CampaignReport {
            campaign: CampaignId::Spacing,
            provenance: Provenance { schema: SCHEMA_VERSION, config_sha256: "ab".into(), seed: 1, campaign_stream: "cd".into(), replicates: records.len() },
            columns: vec!["a".into(), "b".into()],
            records,
            aggregates: vec![],
            predicates: vec![],
            passed: true,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        report(vec![]).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("# schema=1 campaign=spacing config_sha256=ab"));
        assert_eq!(text.lines().nth(1).unwrap(), "replicate,cell,a,b,error");
    }

    #[test]
    fn csv_and_json_agree() {
        let r = report(vec![Record { replicate: 0, cell: "x".into(), values: vec![0.1 + 0.2, 1.0 / 3.0], error: None }]);
        let mut csv_buf = Vec::new();
        r.write_csv(&mut csv_buf).unwrap();
        let mut json_buf = Vec::new();
        r.write_json(&mut json_buf).unwrap();
        let back: CampaignReport = serde_json::from_slice(&json_buf).unwrap();
        let line = String::from_utf8(csv_buf).unwrap().lines().nth(2).unwrap().to_string();
        let fields: Vec<f64> = line.split(',').skip(2).take(2).map(|s| s.parse().unwrap()).collect();
        assert_eq!(fields, back.records[0].values);
        assert_eq!(fields, r.records[0].values);
    }

    #[test]
    fn unwritable_directory() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        assert!(emit_report(&report(vec![]), &blocker.join("sub"), ReportFormat::Csv).is_err());
    }
}
