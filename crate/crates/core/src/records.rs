//! Ingestion of heterogeneous delimited-text databases into [`Record`]s.
//!
//! Every source database keeps its own column names. Ingest only maps the
//! identifier and coordinate columns, drops null cells, and preserves the
//! remaining columns in header order.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(Error::Coordinate { lat, lon })
        }
    }
}

/// One row of a source database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub uri: String,
    pub source_id: String,
    /// Non-null cells in source column order.
    pub attributes: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoPoint>,
}

impl Record {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.attributes.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub id_column: Option<String>,
    pub lat_column: Option<String>,
    pub lon_column: Option<String>,
    pub exclude_columns: Vec<String>,
    /// Cell values treated as null. The empty string (after trimming) is
    /// always null.
    pub null_markers: Vec<String>,
    /// Keep the id column as an ordinary attribute. Off by default since a
    /// column of unique values carries no matching signal.
    pub keep_id_column: bool,
    /// Field delimiter; comma when unset.
    pub delimiter: Option<char>,
}

impl SchemaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn is_null(&self, cell: &str) -> bool {
        let t = cell.trim();
        t.is_empty() || self.null_markers.iter().any(|m| m == t || m == cell)
    }

    fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter {
            None => Ok(b','),
            Some(c) if c.is_ascii() => Ok(c as u8),
            Some(c) => Err(Error::Schema(format!("delimiter {c:?} is not a single ASCII byte"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub source_id: String,
    pub records: Vec<Record>,
    pub schema: SchemaConfig,
}

/// Side information collected while ingesting one file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    /// Rows whose coordinates were present but unparseable or out of range.
    pub coordinate_warnings: usize,
}

pub fn ingest_csv(path: &Path, source_id: &str, schema: &SchemaConfig) -> Result<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, source_id, schema)
}

pub fn ingest_reader<R: Read>(reader: R, source_id: &str, schema: &SchemaConfig) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(schema.delimiter_byte()?).has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();

    let mut seen = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if seen.insert(h.as_str(), i).is_some() {
            return Err(Error::Schema(format!("duplicate column `{h}` in header")));
        }
    }
    let column = |name: &Option<String>, role: &str| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(n) => {
                seen.get(n.as_str()).copied().map(Some).ok_or_else(|| Error::Schema(format!("{role} column `{n}` not found in header")))
            }
        }
    };
    let id_idx = column(&schema.id_column, "id")?;
    let lat_idx = column(&schema.lat_column, "latitude")?;
    let lon_idx = column(&schema.lon_column, "longitude")?;
    if lat_idx.is_some() != lon_idx.is_some() {
        return Err(Error::Schema("latitude and longitude columns must be declared together".into()));
    }

    let keep: Vec<bool> = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let is_id = Some(i) == id_idx && !schema.keep_id_column;
            !is_id && !schema.exclude_columns.iter().any(|x| x == h)
        })
        .collect();

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let row = row + 1;
        let cells = result?;
        let cell = |i: usize| cells.get(i).unwrap_or("");

        let uri = match id_idx {
            Some(i) if !schema.is_null(cell(i)) => format!("{source_id}:{}", cell(i).trim()),
            Some(_) => return Err(Error::Schema(format!("row {row}: empty id column"))),
            None => format!("{source_id}:row{row}"),
        };

        let attributes = header
            .iter()
            .enumerate()
            .filter(|&(i, _)| keep[i] && !schema.is_null(cell(i)))
            .map(|(i, h)| (h.clone(), cell(i).to_owned()))
            .collect();

        let location = match (lat_idx, lon_idx) {
            (Some(la), Some(lo)) if !schema.is_null(cell(la)) && !schema.is_null(cell(lo)) => {
                let parsed = cell(la)
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .zip(cell(lo).trim().parse::<f64>().ok())
                    .and_then(|(lat, lon)| GeoPoint::new(lat, lon).ok());
                if parsed.is_none() {
                    log::warn!("{uri}: unusable coordinates ({:?}, {:?})", cell(la), cell(lo));
                    report.coordinate_warnings += 1;
                }
                parsed
            }
            _ => None,
        };

        records.push(Record { uri, source_id: source_id.to_owned(), attributes, location });
    }
    report.rows = records.len();

    Ok((Dataset { source_id: source_id.to_owned(), records, schema: schema.clone() }, report))
}

/// Write records as delimited text that [`ingest_reader`] reads back into
/// equal records under the returned schema.
pub fn export_csv<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<SchemaConfig> {
    const ID: &str = "__uri_id";
    const LAT: &str = "__lat";
    const LON: &str = "__lon";

    let columns = merged_column_order(&dataset.records);
    let prefix = format!("{}:", dataset.source_id);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ID.to_owned(), LAT.to_owned(), LON.to_owned()];
    header.extend(columns.iter().cloned());
    wtr.write_record(&header)?;
    for r in &dataset.records {
        let id = r.uri.strip_prefix(&prefix).unwrap_or(&r.uri).to_owned();
        let (lat, lon) = match r.location {
            Some(p) => (format!("{:?}", p.lat), format!("{:?}", p.lon)),
            None => (String::new(), String::new()),
        };
        let mut row = vec![id, lat, lon];
        row.extend(columns.iter().map(|c| r.get(c).unwrap_or("").to_owned()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<export>", e))?;
    Ok(SchemaConfig {
        id_column: Some(ID.into()),
        lat_column: Some(LAT.into()),
        lon_column: Some(LON.into()),
        exclude_columns: vec![LAT.into(), LON.into()],
        null_markers: Vec::new(),
        keep_id_column: false,
        delimiter: None,
    })
}

/// A column order in which every record's attribute order is a subsequence:
/// a topological sort of the "comes before" relation, ties broken by first
/// appearance.
fn merged_column_order(records: &[Record]) -> Vec<String> {
    let mut names: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut succ: Vec<Vec<usize>> = Vec::new();
    for r in records {
        let mut prev: Option<usize> = None;
        for (name, _) in &r.attributes {
            let i = *index.entry(name.as_str()).or_insert_with(|| {
                names.push(name.as_str());
                succ.push(Vec::new());
                names.len() - 1
            });
            if let Some(p) = prev {
                succ[p].push(i);
            }
            prev = Some(i);
        }
    }
    let mut indegree = vec![0usize; names.len()];
    for s in succ.iter().flatten() {
        indegree[*s] += 1;
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..names.len()).filter(|&i| indegree[i] == 0).collect();
    let mut out = Vec::with_capacity(names.len());
    while let Some(i) = ready.pop_first() {
        out.push(names[i].to_owned());
        for &s in &succ[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(s);
            }
        }
    }
    // cyclic orders cannot round-trip; append the rest in first-seen order
    for (i, n) in names.iter().enumerate() {
        if indegree[i] > 0 {
            out.push((*n).to_owned());
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub missing_location: usize,
    pub duplicate_uris: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.duplicate_uris.is_empty()
    }
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    validate_records(d.records.iter())
}

pub fn validate_records<'a>(records: impl IntoIterator<Item = &'a Record>) -> ValidationReport {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut report = ValidationReport::default();
    for r in records {
        report.records += 1;
        if r.location.is_none() {
            report.missing_location += 1;
        }
        *counts.entry(r.uri.as_str()).or_default() += 1;
    }
    report.duplicate_uris = counts.into_iter().filter(|&(_, c)| c > 1).map(|(u, _)| u.to_owned()).collect();
    report
}

/// uri → record lookup over one or more datasets.
#[derive(Debug, Default, Clone)]
pub struct RecordIndex {
    by_uri: HashMap<String, Record>,
}

impl RecordIndex {
    pub fn new(records: impl IntoIterator<Item = Record>) -> Result<Self> {
        let mut by_uri = HashMap::new();
        for r in records {
            if by_uri.contains_key(&r.uri) {
                return Err(Error::DuplicateUri(r.uri));
            }
            by_uri.insert(r.uri.clone(), r);
        }
        Ok(Self { by_uri })
    }

    pub fn get(&self, uri: &str) -> Result<&Record> {
        self.by_uri.get(uri).ok_or_else(|| Error::UnknownUri(uri.to_owned()))
    }

    pub fn contains(&self, uri: &str) -> bool {
        self.by_uri.contains_key(uri)
    }

    pub fn len(&self) -> usize {
        self.by_uri.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_uri.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.by_uri.values()
    }
}

/// Records as JSON Lines, one record per line.
pub fn write_records_jsonl<W: std::io::Write>(records: &[Record], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<records>", e))?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: std::io::BufRead>(r: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<records>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
