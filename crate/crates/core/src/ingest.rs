//! Reading and writing unit records, study tables and reports, plus
//! stratified frequency estimation of a [`StudyTable`] from records.

use std::io::{Read, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bounds::BoundsProfile;
use crate::format::sig9;
use crate::model::{ModelError, ObservedTable, Policy, Sign, StratumId, StudyTable};
use crate::parallel;
use crate::simulate::{Record, Records, StrategyComparison};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown coding {0:?} (expected pm1 or 01)")]
    UnknownCoding(String),
    #[error("input has no data rows")]
    EmptyInput,
    #[error("stratum {stratum}, z = {z}: no rows and zero pseudo-count")]
    EmptySlice { stratum: StratumId, z: Sign },
    #[error("schema violation at {0}")]
    SchemaViolation(String),
    #[error("negative pseudo-count {0}")]
    InvalidSmoothing(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IngestError {
    /// Whether the failure came from the filesystem rather than the content.
    pub fn is_io(&self) -> bool {
        match self {
            IngestError::Io(_) => true,
            IngestError::Csv(e) => e.is_io_error(),
            IngestError::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

/// Encoding of binary columns in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coding {
    #[default]
    Pm1,
    /// `0 -> -1`, `1 -> +1`.
    Zero1,
}

impl Coding {
    pub fn name(self) -> &'static str {
        match self {
            Coding::Pm1 => "pm1",
            Coding::Zero1 => "01",
        }
    }

    fn parse_value(self, s: &str) -> Option<Sign> {
        let v: i64 = s.trim().parse().ok()?;
        if s.trim().starts_with('+') && self == Coding::Zero1 {
            return None;
        }
        match self {
            Coding::Pm1 => Sign::from_pm1(v),
            Coding::Zero1 => Sign::from_01(v),
        }
    }

    fn label(self, s: Sign) -> &'static str {
        match (self, s) {
            (Coding::Pm1, Sign::Minus) => "-1",
            (Coding::Pm1, Sign::Plus) => "+1",
            (Coding::Zero1, Sign::Minus) => "0",
            (Coding::Zero1, Sign::Plus) => "1",
        }
    }
}

impl FromStr for Coding {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pm1" => Ok(Coding::Pm1),
            "01" => Ok(Coding::Zero1),
            other => Err(IngestError::UnknownCoding(other.to_owned())),
        }
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), IngestError> {
    let header = rdr.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(malformed(
            1,
            format!("expected header {}", expected.join(",")),
        ));
    }
    Ok(())
}

fn sorted_ids(mut ids: Vec<StratumId>) -> Vec<StratumId> {
    let numeric: Option<Vec<i64>> = ids.iter().map(|s| s.as_str().parse().ok()).collect();
    match numeric {
        Some(_) => ids.sort_by_key(|s| s.as_str().parse::<i64>().unwrap_or_default()),
        None => ids.sort(),
    }
    ids
}

/// Parse a records CSV with header `stratum,z,a,y`.
///
/// Row order is preserved; strata are listed in sorted order (numeric when
/// every id is an integer).
pub fn read_records(source: impl Read, coding: Coding) -> Result<Records, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(source);
    check_header(&mut rdr, &["stratum", "z", "a", "y"])?;
    let mut raw: Vec<(StratumId, Sign, Sign, Sign)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(malformed(
                line,
                format!("expected 4 fields, found {}", rec.len()),
            ));
        }
        let id = rec[0].trim();
        if id.is_empty() {
            return Err(malformed(line, "empty stratum"));
        }
        let mut vals = [Sign::Minus; 3];
        for (k, name) in ["z", "a", "y"].iter().enumerate() {
            vals[k] = coding
                .parse_value(&rec[k + 1])
                .ok_or_else(|| malformed(line, format!("bad {name} value {:?}", &rec[k + 1])))?;
        }
        raw.push((StratumId::new(id), vals[0], vals[1], vals[2]));
    }
    if raw.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut distinct: Vec<StratumId> = raw.iter().map(|r| r.0.clone()).collect();
    distinct.sort();
    distinct.dedup();
    let strata = sorted_ids(distinct);
    let index: std::collections::HashMap<&StratumId, usize> =
        strata.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let rows = raw
        .iter()
        .map(|(id, z, a, y)| Record {
            stratum: index[id],
            z: *z,
            a: *a,
            y: *y,
        })
        .collect();
    Ok(Records { strata, rows })
}

pub fn write_records(
    sink: impl Write,
    records: &Records,
    coding: Coding,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["stratum", "z", "a", "y"])?;
    for r in &records.rows {
        w.write_record([
            records.strata[r.stratum].as_str(),
            coding.label(r.z),
            coding.label(r.a),
            coding.label(r.y),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-stratum cell counts, indexed like [`ObservedTable`] cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountTable {
    pub counts: Vec<[u64; 8]>,
}

impl CountTable {
    pub fn new(strata: usize) -> Self {
        CountTable {
            counts: vec![[0; 8]; strata],
        }
    }

    pub fn add(&mut self, r: &Record) {
        let cell = (r.z.bit() << 2) | (r.y.bit() << 1) | r.a.bit();
        self.counts[r.stratum][cell] += 1;
    }

    /// Associative, commutative merge of two shards' counts.
    pub fn merge(mut self, other: CountTable) -> CountTable {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), [0; 8]);
        }
        for (acc, c) in self.counts.iter_mut().zip(other.counts) {
            for (a, b) in acc.iter_mut().zip(c) {
                *a += b;
            }
        }
        self
    }

    pub fn from_rows(strata: usize, rows: &[Record]) -> CountTable {
        parallel::install(|| {
            rows.par_chunks(1 << 14)
                .map(|chunk| {
                    let mut t = CountTable::new(strata);
                    chunk.iter().for_each(|r| t.add(r));
                    t
                })
                .reduce(|| CountTable::new(strata), CountTable::merge)
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Additive smoothing applied per `(y, a)` cell within each slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingSpec {
    pub pseudo_count: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec { pseudo_count: 0.5 }
    }
}

/// Plug-in study: `(count + pc) / (n_{z,x} + 4 pc)` per cell, weights from
/// stratum frequencies.
pub fn estimate_study(
    records: &Records,
    smoothing: SmoothingSpec,
) -> Result<StudyTable, IngestError> {
    let pc = smoothing.pseudo_count;
    if pc < 0.0 || !pc.is_finite() {
        return Err(IngestError::InvalidSmoothing(pc));
    }
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let counts = CountTable::from_rows(records.strata.len(), &records.rows);
    let total = counts.total() as f64;
    let mut strata = Vec::with_capacity(records.strata.len());
    for (id, c) in records.strata.iter().zip(&counts.counts) {
        let n_x: u64 = c.iter().sum();
        let mut table = ObservedTable::zeros(n_x as f64 / total);
        for z in Sign::BOTH {
            let base = z.bit() << 2;
            let n_z: u64 = c[base..base + 4].iter().sum();
            let denom = n_z as f64 + 4.0 * pc;
            if denom <= 0.0 {
                return Err(IngestError::EmptySlice {
                    stratum: id.clone(),
                    z,
                });
            }
            for y in Sign::BOTH {
                for a in Sign::BOTH {
                    let k = base | (y.bit() << 1) | a.bit();
                    table.set(y, a, z, (c[k] as f64 + pc) / denom);
                }
            }
        }
        strata.push((id.clone(), table));
    }
    Ok(StudyTable::new(strata)?)
}

fn cell_key(coding: Coding, y: Sign, a: Sign) -> String {
    format!("y={},a={}", coding.label(y), coding.label(a))
}

fn slice_key(coding: Coding, z: Sign) -> String {
    format!("z={}", coding.label(z))
}

fn exact_keys(obj: &Map<String, Value>, keys: &[String], path: &str) -> Result<(), IngestError> {
    for k in obj.keys() {
        if !keys.contains(k) {
            return Err(IngestError::SchemaViolation(format!("{path}.{k}")));
        }
    }
    for k in keys {
        if !obj.contains_key(k) {
            return Err(IngestError::SchemaViolation(format!("{path}.{k}")));
        }
    }
    Ok(())
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, IngestError> {
    v.as_object()
        .ok_or_else(|| IngestError::SchemaViolation(path.to_owned()))
}

fn as_number(v: &Value, path: &str) -> Result<f64, IngestError> {
    v.as_f64()
        .ok_or_else(|| IngestError::SchemaViolation(path.to_owned()))
}

/// Parse a study document. Keys must match exactly; `"01"` documents use
/// `0`/`1` labels in the cell keys.
pub fn read_study(source: impl Read) -> Result<StudyTable, IngestError> {
    let doc: Value = serde_json::from_reader(source)?;
    let root = as_object(&doc, "$")?;
    exact_keys(root, &["coding".into(), "strata".into()], "$")?;
    let coding: Coding = root["coding"]
        .as_str()
        .ok_or_else(|| IngestError::SchemaViolation("$.coding".into()))?
        .parse()?;
    let list = root["strata"]
        .as_array()
        .ok_or_else(|| IngestError::SchemaViolation("$.strata".into()))?;
    let slice_keys: Vec<String> = Sign::BOTH.iter().map(|&z| slice_key(coding, z)).collect();
    let mut cell_keys = Vec::new();
    for y in Sign::BOTH {
        for a in Sign::BOTH {
            cell_keys.push(cell_key(coding, y, a));
        }
    }
    let mut strata = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let path = format!("$.strata[{i}]");
        let obj = as_object(entry, &path)?;
        exact_keys(obj, &["id".into(), "weight".into(), "p".into()], &path)?;
        let id = obj["id"]
            .as_str()
            .ok_or_else(|| IngestError::SchemaViolation(format!("{path}.id")))?;
        let weight = as_number(&obj["weight"], &format!("{path}.weight"))?;
        let p = as_object(&obj["p"], &format!("{path}.p"))?;
        exact_keys(p, &slice_keys, &format!("{path}.p"))?;
        let mut table = ObservedTable::zeros(weight);
        for z in Sign::BOTH {
            let zk = slice_key(coding, z);
            let zpath = format!("{path}.p.{zk}");
            let slice = as_object(&p[&zk], &zpath)?;
            exact_keys(slice, &cell_keys, &zpath)?;
            for y in Sign::BOTH {
                for a in Sign::BOTH {
                    let ck = cell_key(coding, y, a);
                    table.set(y, a, z, as_number(&slice[&ck], &format!("{zpath}.{ck}"))?);
                }
            }
        }
        strata.push((StratumId::new(id), table));
    }
    Ok(StudyTable::new(strata)?)
}

/// The study as a `pm1` document with full binary64 precision.
pub fn study_to_json(study: &StudyTable) -> Value {
    let strata: Vec<Value> = study
        .strata()
        .iter()
        .map(|(id, t)| {
            let mut p = Map::new();
            for z in Sign::BOTH {
                let mut slice = Map::new();
                for y in Sign::BOTH {
                    for a in Sign::BOTH {
                        slice.insert(cell_key(Coding::Pm1, y, a), json!(t.p(y, a, z)));
                    }
                }
                p.insert(slice_key(Coding::Pm1, z), Value::Object(slice));
            }
            json!({ "id": id.as_str(), "weight": t.weight, "p": p })
        })
        .collect();
    json!({ "coding": "pm1", "strata": strata })
}

pub fn write_study(sink: impl Write, study: &StudyTable) -> Result<(), IngestError> {
    let mut sink = sink;
    serde_json::to_writer_pretty(&mut sink, &study_to_json(study))?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub const BOUNDS_HEADER: [&str; 8] = [
    "stratum", "weight", "lo_minus", "hi_minus", "lo_plus", "hi_plus", "cate_lo", "cate_hi",
];

/// Bounds report, one row per stratum, 9 significant digits.
pub fn write_bounds_csv(sink: impl Write, profile: &BoundsProfile) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(BOUNDS_HEADER)?;
    for e in profile.entries() {
        let b = &e.bounds;
        let mut row = vec![e.stratum.as_str().to_owned()];
        row.extend(
            [
                e.weight, b.lo_minus, b.hi_minus, b.lo_plus, b.hi_plus, b.cate_lo, b.cate_hi,
            ]
            .iter()
            .map(|&v| sig9(v)),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Policy CSV with header `stratum,kind,action_or_p`.
pub fn write_policy_csv(sink: impl Write, policy: &Policy) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["stratum", "kind", "action_or_p"])?;
    match policy {
        Policy::Deterministic(m) => {
            for (id, a) in m {
                w.write_record([id.as_str(), "deterministic", &a.to_string()])?;
            }
        }
        Policy::Stochastic(m) => {
            for (id, p) in m {
                w.write_record([id.as_str(), "stochastic", &sig9(*p)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a policy CSV. A file with any stochastic row yields a stochastic
/// policy; deterministic rows then become probabilities 0 or 1.
pub fn read_policy_csv(source: impl Read) -> Result<Policy, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(source);
    check_header(&mut rdr, &["stratum", "kind", "action_or_p"])?;
    let mut rows: Vec<(StratumId, Result<Sign, f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(malformed(
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let id = StratumId::new(rec[0].trim());
        if rows.iter().any(|(s, _)| s == &id) {
            return Err(malformed(line, format!("duplicate stratum {id}")));
        }
        let value = rec[2].trim();
        let entry = match rec[1].trim() {
            "deterministic" => Ok(value
                .parse::<Sign>()
                .map_err(|_| malformed(line, format!("bad action {value:?}")))?),
            "stochastic" => {
                let p: f64 = value
                    .parse()
                    .ok()
                    .filter(|p: &f64| (0.0..=1.0).contains(p))
                    .ok_or_else(|| malformed(line, format!("bad probability {value:?}")))?;
                Err(p)
            }
            other => return Err(malformed(line, format!("unknown kind {other:?}"))),
        };
        rows.push((id, entry));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(if rows.iter().all(|(_, e)| e.is_ok()) {
        Policy::Deterministic(rows.into_iter().map(|(id, e)| (id, e.unwrap())).collect())
    } else {
        Policy::Stochastic(
            rows.into_iter()
                .map(|(id, e)| {
                    let p = match e {
                        Ok(a) => a.bit() as f64,
                        Err(p) => p,
                    };
                    (id, p)
                })
                .collect::<IndexMap<_, _>>(),
        )
    })
}

/// Strategy comparison CSV with header `stratum,strategy,action,correct`.
pub fn write_strategy_csv(sink: impl Write, table: &StrategyComparison) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["stratum", "strategy", "action", "correct"])?;
    for r in &table.rows {
        w.write_record([
            r.stratum.as_str(),
            r.strategy.name(),
            &r.action.to_string(),
            if r.correct { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
