use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GeegaError, Result};
use crate::losses::{ConflictRecord, Pair};

/// Share of batches in one epoch whose pair gradients conflicted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictFraction {
    pub epoch: usize,
    pub pair: Pair,
    pub batches: usize,
    pub conflicts: usize,
    pub fraction: f64,
}

/// Per-epoch, per-pair conflict fractions, ordered by epoch then pair.
pub fn conflict_report(log: &[ConflictRecord]) -> Result<Vec<ConflictFraction>> {
    if log.is_empty() {
        return Err(GeegaError::Parameter("conflict log is empty".into()));
    }
    let mut counts: BTreeMap<(usize, &'static str), (Pair, usize, usize)> = BTreeMap::new();
    for r in log {
        let slot = counts.entry((r.epoch, r.pair.as_str())).or_insert((r.pair, 0, 0));
        slot.1 += 1;
        slot.2 += r.conflict as usize;
    }
    Ok(counts
        .into_iter()
        .map(|((epoch, _), (pair, batches, conflicts))| ConflictFraction {
            epoch,
            pair,
            batches,
            conflicts,
            fraction: conflicts as f64 / batches as f64,
        })
        .collect())
}

/// Mean per-epoch fraction of `pair` over `epochs` (a half-open range).
pub fn mean_fraction(report: &[ConflictFraction], pair: Pair, epochs: std::ops::Range<usize>) -> Option<f64> {
    let v: Vec<f64> = report
        .iter()
        .filter(|c| c.pair == pair && epochs.contains(&c.epoch))
        .map(|c| c.fraction)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn heatmap_csv(report: &[ConflictFraction]) -> String {
    let mut out = String::from("epoch,pair,batches,conflicts,fraction\n");
    for c in report {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            c.epoch, c.pair, c.batches, c.conflicts, c.fraction
        ));
    }
    out
}

pub fn conflict_log_csv(log: &[ConflictRecord]) -> String {
    let mut out = String::from(ConflictRecord::csv_header());
    out.push('\n');
    for r in log {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Reads a conflict log written by [`conflict_log_csv`].
pub fn parse_conflict_log(text: &str) -> Result<Vec<ConflictRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| GeegaError::Parameter(format!("conflict log header: {e}")))?
        .clone();
    let expected: Vec<&str> = ConflictRecord::csv_header().split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(GeegaError::Parameter(format!(
            "conflict log header must be `{}`",
            ConflictRecord::csv_header()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| GeegaError::Parameter(format!("conflict log line {line}: {e}")))?;
        let field = |j: usize| row.get(j).unwrap_or("");
        let bad = |what: &str| GeegaError::Parameter(format!("conflict log line {line}: bad {what}"));
        let pair = match field(2) {
            "gcn-topo" => Pair::GcnTopo,
            "gcn-spectro" => Pair::GcnSpectro,
            _ => return Err(bad("pair")),
        };
        out.push(ConflictRecord {
            epoch: field(0).parse().map_err(|_| bad("epoch"))?,
            batch: field(1).parse().map_err(|_| bad("batch"))?,
            pair,
            cosine: field(3).parse().map_err(|_| bad("cosine"))?,
            conflict: match field(4) {
                "0" => false,
                "1" => true,
                _ => return Err(bad("conflict flag")),
            },
        });
    }
    Ok(out)
}
