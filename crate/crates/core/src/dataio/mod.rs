//! File formats and the synthetic dataset generator.
//!
//! Observation CSV: header `consumer_id,service_id,response_time_ms`, LF
//! line endings, one row per (consumer, service). A dataset written by
//! [`save_dataset`] may carry a ground-truth ordering in a sidecar JSON file
//! next to the CSV (`data.csv` -> `data.truth.json`).
//!
//! Ranking JSON: `{"generated_by", "ordering", "priority_values"}`. Services
//! that were ranked without evidence have a `null` priority value.
//!
//! Trace JSON: the serde form of [`SimTrace`].

mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ranking::{ConsumerId, ObservationSet, PriorityVector, RankedList, ServiceId};
use crate::sim::SimTrace;
use crate::GENERATED_BY;

pub use synthetic::{generate_synthetic, SyntheticParams};

pub const CSV_HEADER: [&str; 3] = ["consumer_id", "service_id", "response_time_ms"];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate observation of service {service} by consumer {consumer}")]
    DuplicateObservation { line: u64, consumer: ConsumerId, service: ServiceId },
    #[error("line {line}: {message}")]
    InvalidValue { line: u64, message: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("ranking and priority values disagree: {0}")]
    ServiceMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Observations from several consumers over a shared service set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    services: BTreeSet<ServiceId>,
    consumers: Vec<ObservationSet>,
    ground_truth: Option<RankedList>,
}

impl Dataset {
    /// Consumers are stored in id order. Every sampled service must belong to
    /// `services`, and the ground truth (if any) must rank exactly `services`.
    pub fn new(
        services: BTreeSet<ServiceId>,
        mut consumers: Vec<ObservationSet>,
        ground_truth: Option<RankedList>,
    ) -> Result<Self, DataError> {
        consumers.sort_by(|a, b| a.consumer().cmp(b.consumer()));
        if let Some(w) = consumers.windows(2).find(|w| w[0].consumer() == w[1].consumer()) {
            return Err(DataError::InvalidDataset(format!("consumer {} appears twice", w[0].consumer())));
        }
        for c in &consumers {
            if let Some(s) = c.samples().keys().find(|s| !services.contains(*s)) {
                return Err(DataError::InvalidDataset(format!("service {s} sampled by {} is not in the service set", c.consumer())));
            }
        }
        if let Some(truth) = &ground_truth {
            if truth.services() != services {
                return Err(DataError::InvalidDataset("ground truth does not rank exactly the dataset's services".into()));
            }
        }
        Ok(Self { services, consumers, ground_truth })
    }

    /// Builds a dataset whose service set is everything the consumers sampled.
    pub fn from_observations(consumers: Vec<ObservationSet>) -> Result<Self, DataError> {
        let services = consumers.iter().flat_map(|c| c.samples().keys().cloned()).collect();
        Self::new(services, consumers, None)
    }

    pub fn services(&self) -> &BTreeSet<ServiceId> {
        &self.services
    }

    pub fn consumers(&self) -> &[ObservationSet] {
        &self.consumers
    }

    pub fn consumer(&self, id: &ConsumerId) -> Option<&ObservationSet> {
        self.consumers.binary_search_by(|c| c.consumer().cmp(id)).ok().map(|i| &self.consumers[i])
    }

    pub fn ground_truth(&self) -> Option<&RankedList> {
        self.ground_truth.as_ref()
    }

    pub fn with_ground_truth(self, truth: RankedList) -> Result<Self, DataError> {
        let services = truth.services();
        Self::new(services, self.consumers, Some(truth))
    }
}

/// Formats with at most 6 fractional digits and no trailing zeros.
pub fn format_decimal(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Rounds to 6 fractional digits, the precision every output file uses.
pub fn round6(x: f64) -> f64 {
    format_decimal(x).parse().expect("formatted decimal parses")
}

pub fn parse_observations<R: Read>(reader: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?.clone();
    if header.is_empty() {
        return Err(DataError::Parse { line: 1, message: "missing header".into() });
    }
    if header.iter().ne(CSV_HEADER) {
        let unknown: Vec<&str> = header.iter().filter(|h| !CSV_HEADER.contains(h)).collect();
        let message = if unknown.is_empty() {
            format!("header must be exactly `{}`", CSV_HEADER.join(","))
        } else {
            format!("unknown column(s) {}; header must be exactly `{}`", unknown.join(", "), CSV_HEADER.join(","))
        };
        return Err(DataError::Parse { line: 1, message });
    }

    let mut by_consumer: BTreeMap<ConsumerId, ObservationSet> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let consumer = ConsumerId::new(&record[0]).map_err(|_| DataError::Parse { line, message: "empty consumer_id".into() })?;
        let service = ServiceId::new(&record[1]).map_err(|_| DataError::Parse { line, message: "empty service_id".into() })?;
        let raw = &record[2];
        let value: f64 = raw
            .parse()
            .map_err(|_| DataError::Parse { line, message: format!("response_time_ms `{raw}` is not a number") })?;
        if !(value.is_finite() && value > 0.0) {
            return Err(DataError::InvalidValue { line, message: format!("response_time_ms must be positive, got `{raw}`") });
        }
        let set = by_consumer.entry(consumer.clone()).or_insert_with(|| ObservationSet::new(consumer.clone()));
        if set.contains(&service) {
            return Err(DataError::DuplicateObservation { line, consumer, service });
        }
        set.insert(service, value).expect("validated above");
    }
    Dataset::from_observations(by_consumer.into_values().collect())
}

/// Reads an observation CSV. The result has no ground truth.
pub fn load_observations(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_observations(file)
}

pub fn write_observations<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let to_data_err = |e: csv::Error| DataError::InvalidDataset(e.to_string());
    wtr.write_record(CSV_HEADER).map_err(to_data_err)?;
    for c in &dataset.consumers {
        for (service, t) in c.samples() {
            wtr.write_record([c.consumer().as_str(), service.as_str(), &format_decimal(*t)]).map_err(to_data_err)?;
        }
    }
    wtr.flush().map_err(|e| DataError::InvalidDataset(e.to_string()))
}

/// Sidecar path holding the ground truth for an observation CSV.
pub fn truth_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("truth.json")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthDocument {
    generated_by: String,
    ground_truth: Vec<ServiceId>,
}

/// Writes the observation CSV and, when the dataset has one, the ground-truth sidecar.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_observations(dataset, &mut buf)?;
    fs::write(path, buf).map_err(io_err(path))?;
    if let Some(truth) = &dataset.ground_truth {
        let doc = TruthDocument { generated_by: GENERATED_BY.to_string(), ground_truth: truth.ordering().to_vec() };
        let side = truth_path(path);
        fs::write(&side, to_json(&doc)?).map_err(io_err(&side))?;
    }
    Ok(())
}

/// Reads an observation CSV plus its ground-truth sidecar, if present.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let dataset = load_observations(path)?;
    let side = truth_path(path);
    if !side.exists() {
        return Ok(dataset);
    }
    let raw = fs::read_to_string(&side).map_err(io_err(&side))?;
    let doc: TruthDocument = serde_json::from_str(&raw)?;
    let truth = RankedList::from_ordering(doc.ground_truth).map_err(|e| DataError::InvalidDataset(e.to_string()))?;
    dataset.with_ground_truth(truth)
}

/// A ranking as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingDocument {
    pub ranking: RankedList,
    pub priority_values: BTreeMap<ServiceId, Option<f64>>,
    pub generated_by: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankingJson {
    generated_by: String,
    ordering: Vec<ServiceId>,
    priority_values: BTreeMap<ServiceId, Option<f64>>,
}

/// Renders the ranking JSON. Every priority value must belong to a ranked
/// service; ranked services without one are written as `null`.
pub fn render_ranking(r: &RankedList, pv: &PriorityVector) -> Result<String, DataError> {
    if let Some((s, _)) = pv.iter().find(|(s, _)| !r.contains(s)) {
        return Err(DataError::ServiceMismatch(format!("service {s} has a priority value but is not ranked")));
    }
    let doc = RankingJson {
        generated_by: GENERATED_BY.to_string(),
        ordering: r.ordering().to_vec(),
        priority_values: r.iter().map(|s| (s.clone(), pv.get(s).map(round6))).collect(),
    };
    to_json(&doc)
}

pub fn save_ranking(r: &RankedList, pv: &PriorityVector, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let json = render_ranking(r, pv)?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn load_ranking(path: impl AsRef<Path>) -> Result<RankingDocument, DataError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let doc: RankingJson = serde_json::from_str(&raw)?;
    let ranking = RankedList::from_ordering(doc.ordering).map_err(|e| DataError::InvalidDataset(e.to_string()))?;
    if doc.priority_values.keys().collect::<BTreeSet<_>>() != ranking.iter().collect::<BTreeSet<_>>() {
        return Err(DataError::ServiceMismatch("priority_values keys differ from ordering".into()));
    }
    Ok(RankingDocument { ranking, priority_values: doc.priority_values, generated_by: doc.generated_by })
}

pub fn save_trace(trace: &SimTrace, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, to_json(trace)?).map_err(io_err(path))
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<SimTrace, DataError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&raw)?)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, DataError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
