//! Temporal knowledge-graph data model.
//!
//! A [`TkgDataset`] holds entity, relation and timestamp vocabularies, the
//! train/valid/test quadruple lists and a time-ordered snapshot index. Raw
//! files are tab-separated `subject relation object time [ignored]` lines;
//! [`load_dataset`] reads a directory of `train.txt`/`valid.txt`/`test.txt`
//! and the binary cache in [`TkgDataset::write_cache`] stores the result.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One fact `(subject, predicate, object, time)` as vocabulary indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub subject: u32,
    pub predicate: u32,
    pub object: u32,
    pub time: u32,
}

impl Quadruple {
    pub const fn new(subject: u32, predicate: u32, object: u32, time: u32) -> Self {
        Self {
            subject,
            predicate,
            object,
            time,
        }
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.subject, self.predicate, self.object, self.time
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Bijective index <-> label map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i as u32).is_some() {
                return Err(Error::Cache(format!("duplicate vocabulary label `{label}`")));
            }
        }
        Ok(Self { labels, index })
    }

    /// Vocabulary whose labels are `0..n` rendered as decimal strings.
    pub fn numbered(n: usize) -> Self {
        Self::from_labels((0..n).map(|i| i.to_string()).collect()).expect("distinct labels")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: u32) -> Option<&str> {
        self.labels.get(index as usize).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Time granularity: raw timestamps are divided by `step` before compaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub step: u64,
    pub unit: String,
}

impl Interval {
    pub fn new(step: u64, unit: impl Into<String>) -> Self {
        Self {
            step,
            unit: unit.into(),
        }
    }

    /// Step 1 with no unit; raw timestamps are already consecutive steps.
    pub fn unit_step() -> Self {
        Self::new(1, "step")
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self::unit_step()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.step, self.unit)
    }
}

impl FromStr for Interval {
    type Err = Error;

    /// Accepts `24`, `24h`, `24 hours`, `15 mins`, `1 year`, ...
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let step: u64 = num
            .parse()
            .map_err(|_| Error::Config(format!("invalid interval `{s}`")))?;
        if step == 0 {
            return Err(Error::Config("interval step must be positive".into()));
        }
        let unit = match unit.trim().to_ascii_lowercase().as_str() {
            "" | "step" | "steps" => "step",
            "h" | "hour" | "hours" => "hours",
            "m" | "min" | "mins" | "minute" | "minutes" => "mins",
            "d" | "day" | "days" => "days",
            "y" | "year" | "years" => "year",
            other => return Err(Error::Config(format!("unknown interval unit `{other}`"))),
        };
        Ok(Self::new(step, unit))
    }
}

/// Sorted raw timestamps; index `i` is the compacted timestamp index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeVocab {
    raw: Vec<i64>,
    interval: Interval,
}

impl TimeVocab {
    pub fn new(raw: Vec<i64>, interval: Interval) -> Result<Self> {
        if raw.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Cache("timestamps must be strictly increasing".into()));
        }
        Ok(Self { raw, interval })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self, index: u32) -> Option<i64> {
        self.raw.get(index as usize).copied()
    }

    pub fn raw_times(&self) -> &[i64] {
        &self.raw
    }

    pub fn interval(&self) -> &Interval {
        &self.interval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QuadRef {
    split: Split,
    position: u32,
}

/// Immutable temporal knowledge graph with splits and snapshot index.
#[derive(Debug, Clone, PartialEq)]
pub struct TkgDataset {
    entities: Vocab,
    relations: Vocab,
    times: TimeVocab,
    train: Vec<Quadruple>,
    valid: Vec<Quadruple>,
    test: Vec<Quadruple>,
    snapshots: Vec<Vec<QuadRef>>,
}

impl TkgDataset {
    pub fn new(
        entities: Vocab,
        relations: Vocab,
        times: TimeVocab,
        train: Vec<Quadruple>,
        valid: Vec<Quadruple>,
        test: Vec<Quadruple>,
    ) -> Result<Self> {
        let (ne, nr, nt) = (entities.len(), relations.len(), times.len());
        for quads in [&train, &valid, &test] {
            for q in quads {
                check_index("entity", q.subject, ne)?;
                check_index("entity", q.object, ne)?;
                check_index("relation", q.predicate, nr)?;
                check_index("timestamp", q.time, nt)?;
            }
        }
        let mut snapshots = vec![Vec::new(); nt];
        for split in Split::ALL {
            let quads = match split {
                Split::Train => &train,
                Split::Valid => &valid,
                Split::Test => &test,
            };
            for (position, q) in quads.iter().enumerate() {
                snapshots[q.time as usize].push(QuadRef {
                    split,
                    position: position as u32,
                });
            }
        }
        Ok(Self {
            entities,
            relations,
            times,
            train,
            valid,
            test,
            snapshots,
        })
    }

    /// Dataset with numbered vocabularies of the given sizes.
    pub fn from_indexed(
        num_entities: usize,
        num_relations: usize,
        num_timestamps: usize,
        train: Vec<Quadruple>,
        valid: Vec<Quadruple>,
        test: Vec<Quadruple>,
    ) -> Result<Self> {
        let times = TimeVocab::new((0..num_timestamps as i64).collect(), Interval::unit_step())?;
        Self::new(
            Vocab::numbered(num_entities),
            Vocab::numbered(num_relations),
            times,
            train,
            valid,
            test,
        )
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_timestamps(&self) -> usize {
        self.times.len()
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn times(&self) -> &TimeVocab {
        &self.times
    }

    pub fn split(&self, split: Split) -> &[Quadruple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Quadruple] {
        &self.train
    }

    pub fn valid(&self) -> &[Quadruple] {
        &self.valid
    }

    pub fn test(&self) -> &[Quadruple] {
        &self.test
    }

    pub fn total_facts(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    /// All quadruples with `time == t` from the requested splits, in
    /// insertion order (train, then valid, then test).
    pub fn snapshot(&self, t: u32, splits: &[Split]) -> Result<Vec<Quadruple>> {
        let refs = self.snapshots.get(t as usize).ok_or(Error::Index {
            what: "timestamp",
            index: t as usize,
            size: self.snapshots.len(),
        })?;
        Ok(refs
            .iter()
            .filter(|r| splits.contains(&r.split))
            .map(|r| self.split(r.split)[r.position as usize])
            .collect())
    }

    /// Timestamp indices that carry at least one fact from `splits`.
    pub fn active_times(&self, splits: &[Split]) -> Vec<u32> {
        self.snapshots
            .iter()
            .enumerate()
            .filter(|(_, refs)| refs.iter().any(|r| splits.contains(&r.split)))
            .map(|(t, _)| t as u32)
            .collect()
    }

    /// Vocabulary and split sizes, one tab-separated row.
    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            entities: self.num_entities(),
            relations: self.num_relations(),
            timestamps: self.num_timestamps(),
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
            interval: self.times.interval().to_string(),
        }
    }

    pub fn relation_cardinality(&self) -> Result<RelationCardinality> {
        RelationCardinality::from_dataset(self)
    }

    fn metadata(&self) -> CacheMetadata {
        CacheMetadata {
            num_entities: self.num_entities(),
            num_relations: self.num_relations(),
            num_timestamps: self.num_timestamps(),
            interval: self.times.interval().clone(),
            split_sizes: [self.train.len(), self.valid.len(), self.test.len()],
            entity_labels: self.entities.labels().to_vec(),
            relation_labels: self.relations.labels().to_vec(),
            raw_times: self.times.raw_times().to_vec(),
        }
    }

    /// Encodes the dataset in the `TKGD` container.
    pub fn to_cache_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata())?;
        let mut out = Vec::with_capacity(16 + meta.len() + self.total_facts() * 16);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for split in Split::ALL {
            let quads = self.split(split);
            out.extend_from_slice(&(quads.len() as u64).to_le_bytes());
            for q in quads {
                for v in [q.subject, q.predicate, q.object, q.time] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_cache_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let magic = take(&mut cursor, 4)?;
        if magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic, expected TKGD".into()));
        }
        let version = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported cache version {version}")));
        }
        let meta_len = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let meta: CacheMetadata = serde_json::from_slice(take(&mut cursor, meta_len)?)?;
        let mut splits: [Vec<Quadruple>; 3] = Default::default();
        for (i, quads) in splits.iter_mut().enumerate() {
            let count = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
            if count != meta.split_sizes[i] {
                return Err(Error::Cache(format!(
                    "split {} count {count} disagrees with metadata {}",
                    Split::ALL[i].name(),
                    meta.split_sizes[i]
                )));
            }
            let payload = take(&mut cursor, count.checked_mul(16).ok_or_else(|| {
                Error::Cache("split count overflow".into())
            })?)?;
            quads.extend(payload.chunks_exact(16).map(|c| {
                let f = |k: usize| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
                Quadruple::new(f(0), f(1), f(2), f(3))
            }));
        }
        if !cursor.is_empty() {
            return Err(Error::Cache(format!("{} trailing bytes", cursor.len())));
        }
        if meta.entity_labels.len() != meta.num_entities
            || meta.relation_labels.len() != meta.num_relations
            || meta.raw_times.len() != meta.num_timestamps
        {
            return Err(Error::Cache("vocabulary sizes disagree with metadata".into()));
        }
        let [train, valid, test] = splits;
        Self::new(
            Vocab::from_labels(meta.entity_labels)?,
            Vocab::from_labels(meta.relation_labels)?,
            TimeVocab::new(meta.raw_times, meta.interval)?,
            train,
            valid,
            test,
        )
        .map_err(|e| match e {
            Error::Index { .. } => Error::Cache(e.to_string()),
            other => other,
        })
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let bytes = self.to_cache_bytes()?;
        let mut file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::file(path, e))?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::file(path, e))?;
        Self::from_cache_bytes(&bytes)
    }
}

fn check_index(what: &'static str, index: u32, size: usize) -> Result<()> {
    if (index as usize) < size {
        Ok(())
    } else {
        Err(Error::Index {
            what,
            index: index as usize,
            size,
        })
    }
}

fn take<'a>(cursor: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if cursor.len() < n {
        return Err(Error::Cache(format!(
            "truncated: needed {n} bytes, {} left",
            cursor.len()
        )));
    }
    let (head, tail) = cursor.split_at(n);
    *cursor = tail;
    Ok(head)
}

pub const CACHE_MAGIC: &[u8; 4] = b"TKGD";
pub const CACHE_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CacheMetadata {
    num_entities: usize,
    num_relations: usize,
    num_timestamps: usize,
    interval: Interval,
    split_sizes: [usize; 3],
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    raw_times: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub interval: String,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Entities\tRelation\tTime\tTraining\tValidation\tTest\tInterval")?;
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.entities,
            self.relations,
            self.timestamps,
            self.train,
            self.valid,
            self.test,
            self.interval
        )
    }
}

struct RawFact {
    subject: String,
    predicate: String,
    object: String,
    time: i64,
}

fn split_file(dir: &Path, split: Split) -> Option<PathBuf> {
    [format!("{}.txt", split.name()), split.name().to_string()]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

fn read_split(path: &Path, interval: &Interval) -> Result<Vec<RawFact>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut facts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 4 or 5 tab-separated columns, found {}", fields.len()),
            });
        }
        let time: i64 = fields[3].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("non-numeric timestamp `{}`", fields[3]),
        })?;
        if time.rem_euclid(interval.step as i64) != 0 {
            return Err(Error::Granularity {
                path: path.to_path_buf(),
                line: line_no,
                time,
                interval: interval.step,
            });
        }
        for (i, f) in fields[..3].iter().enumerate() {
            if f.trim().is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("empty field in column {}", i + 1),
                });
            }
        }
        facts.push(RawFact {
            subject: fields[0].trim().to_string(),
            predicate: fields[1].trim().to_string(),
            object: fields[2].trim().to_string(),
            time,
        });
    }
    Ok(facts)
}

/// Integer labels are ordered numerically; any non-integer label switches the
/// whole vocabulary to first-appearance order.
fn build_vocab<'a>(labels: impl Iterator<Item = &'a str>) -> Vocab {
    let mut seen = HashSet::new();
    let mut order: Vec<String> = Vec::new();
    for label in labels {
        if seen.insert(label) {
            order.push(label.to_string());
        }
    }
    let numeric: Option<Vec<i64>> = order.iter().map(|l| l.parse::<i64>().ok()).collect();
    if let Some(mut nums) = numeric {
        nums.sort_unstable();
        // re-render from the original strings so labels like "007" survive
        let mut by_value: HashMap<i64, &String> = HashMap::new();
        for l in &order {
            by_value.insert(l.parse().unwrap(), l);
        }
        let sorted: Vec<String> = nums.iter().map(|n| by_value[n].clone()).collect();
        if let Ok(v) = Vocab::from_labels(sorted) {
            return v;
        }
    }
    Vocab::from_labels(order).expect("labels deduplicated")
}

/// Reads `train.txt`, `valid.txt` and `test.txt` from `dir`. The train file
/// is required and must be nonempty; the others default to empty.
pub fn load_dataset(dir: &Path, interval: &Interval) -> Result<TkgDataset> {
    let train_path = split_file(dir, Split::Train).ok_or_else(|| {
        Error::file(
            dir.join("train.txt"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "train split not found"),
        )
    })?;
    let mut raw: [Vec<RawFact>; 3] = Default::default();
    raw[0] = read_split(&train_path, interval)?;
    if raw[0].is_empty() {
        return Err(Error::EmptyDataset(train_path));
    }
    for (i, split) in [Split::Valid, Split::Test].into_iter().enumerate() {
        if let Some(p) = split_file(dir, split) {
            raw[i + 1] = read_split(&p, interval)?;
        }
    }
    let all = || raw.iter().flatten();
    let entities = build_vocab(all().flat_map(|f| [f.subject.as_str(), f.object.as_str()]));
    let relations = build_vocab(all().map(|f| f.predicate.as_str()));
    let mut times: Vec<i64> = all().map(|f| f.time).collect();
    times.sort_unstable();
    times.dedup();
    let time_index: HashMap<i64, u32> =
        times.iter().enumerate().map(|(i, &t)| (t, i as u32)).collect();

    let convert = |facts: &[RawFact]| -> Vec<Quadruple> {
        facts
            .iter()
            .map(|f| Quadruple {
                subject: entities.index_of(&f.subject).unwrap(),
                predicate: relations.index_of(&f.predicate).unwrap(),
                object: entities.index_of(&f.object).unwrap(),
                time: time_index[&f.time],
            })
            .collect()
    };
    let train = convert(&raw[0]);
    let valid = convert(&raw[1]);
    let test = convert(&raw[2]);
    let times = TimeVocab::new(times, interval.clone())?;
    TkgDataset::new(entities, relations, times, train, valid, test)
}

/// Head/tail multiplicity of one relation over the train split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CardinalityEntry {
    pub facts: usize,
    /// Average number of tails per head.
    pub tails_per_head: f64,
    /// Average number of heads per tail.
    pub heads_per_tail: f64,
    pub p_replace_head: f64,
    pub p_replace_tail: f64,
}

/// Per-relation "bern" corruption probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationCardinality {
    entries: Vec<Option<CardinalityEntry>>,
}

impl RelationCardinality {
    pub fn from_dataset(dataset: &TkgDataset) -> Result<Self> {
        if dataset.train().is_empty() {
            return Err(Error::EmptyDataset(PathBuf::from("<train split>")));
        }
        Ok(Self::from_facts(dataset.train(), dataset.num_relations()))
    }

    pub fn from_facts(facts: &[Quadruple], num_relations: usize) -> Self {
        let mut facts_per_rel = vec![0usize; num_relations];
        let mut pairs: Vec<HashSet<(u32, u32)>> = vec![HashSet::new(); num_relations];
        for q in facts {
            facts_per_rel[q.predicate as usize] += 1;
            pairs[q.predicate as usize].insert((q.subject, q.object));
        }
        let entries = pairs
            .iter()
            .zip(&facts_per_rel)
            .map(|(pairs, &facts)| {
                if pairs.is_empty() {
                    return None;
                }
                let heads: HashSet<u32> = pairs.iter().map(|p| p.0).collect();
                let tails: HashSet<u32> = pairs.iter().map(|p| p.1).collect();
                let n = pairs.len() as f64;
                let tph = n / heads.len() as f64;
                let hpt = n / tails.len() as f64;
                let p_head = tph / (tph + hpt);
                Some(CardinalityEntry {
                    facts,
                    tails_per_head: tph,
                    heads_per_tail: hpt,
                    p_replace_head: p_head,
                    p_replace_tail: 1.0 - p_head,
                })
            })
            .collect();
        Self { entries }
    }

    /// Uniform 0.5/0.5 for every relation.
    pub fn uniform(num_relations: usize) -> Self {
        Self {
            entries: vec![None; num_relations],
        }
    }

    pub fn entry(&self, relation: u32) -> Option<&CardinalityEntry> {
        self.entries.get(relation as usize).and_then(Option::as_ref)
    }

    pub fn entries(&self) -> &[Option<CardinalityEntry>] {
        &self.entries
    }

    /// Probability of corrupting the head; 0.5 when the relation is undefined.
    pub fn p_replace_head(&self, relation: u32) -> f64 {
        self.entry(relation).map_or(0.5, |e| e.p_replace_head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dir(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in files {
            fs::write(dir.path().join(name), body).unwrap();
        }
        dir
    }

    #[test]
    fn interval_parsing() {
        assert_eq!("24 hours".parse::<Interval>().unwrap(), Interval::new(24, "hours"));
        assert_eq!("24h".parse::<Interval>().unwrap(), Interval::new(24, "hours"));
        assert_eq!("15 mins".parse::<Interval>().unwrap(), Interval::new(15, "mins"));
        assert_eq!("1 year".parse::<Interval>().unwrap(), Interval::new(1, "year"));
        assert_eq!("3".parse::<Interval>().unwrap(), Interval::new(3, "step"));
        assert!("0h".parse::<Interval>().is_err());
        assert!("hours".parse::<Interval>().is_err());
        assert!("5 fortnights".parse::<Interval>().is_err());
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let dir = write_dir(&[("train.txt", "0\t0\t1\t0\n0\t1\t2\n")]);
        match load_dataset(dir.path(), &Interval::unit_step()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_time_is_parse_error() {
        let dir = write_dir(&[("train.txt", "a\tr\tb\tyesterday\n")]);
        assert!(matches!(
            load_dataset(dir.path(), &Interval::unit_step()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn misaligned_time_is_granularity_error() {
        let dir = write_dir(&[("train.txt", "0\t0\t1\t0\n0\t0\t1\t30\n")]);
        assert!(matches!(
            load_dataset(dir.path(), &Interval::new(24, "hours")),
            Err(Error::Granularity { line: 2, time: 30, .. })
        ));
    }

    #[test]
    fn empty_train_is_rejected() {
        let dir = write_dir(&[("train.txt", ""), ("test.txt", "0\t0\t1\t0\n")]);
        assert!(matches!(
            load_dataset(dir.path(), &Interval::unit_step()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn missing_train_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path(), &Interval::unit_step()).unwrap_err();
        assert!(err.to_string().contains("train.txt"));
    }

    #[test]
    fn string_labels_use_first_appearance_and_fifth_column_is_ignored() {
        let dir = write_dir(&[(
            "train.txt",
            "Musk\tappeal\tTesla\t0\textra\nTesla\trespond\tMusk\t1\textra\nUK\tappeal\tMusk\t1\n",
        )]);
        let ds = load_dataset(dir.path(), &Interval::unit_step()).unwrap();
        assert_eq!(ds.entities().labels(), &["Musk", "Tesla", "UK"]);
        assert_eq!(ds.relations().labels(), &["appeal", "respond"]);
        assert_eq!(ds.train()[2], Quadruple::new(2, 0, 0, 1));
    }

    #[test]
    fn integer_labels_keep_numeric_order() {
        let dir = write_dir(&[("train.txt", "5\t1\t2\t10\n2\t0\t9\t0\n")]);
        let ds = load_dataset(dir.path(), &Interval::unit_step()).unwrap();
        assert_eq!(ds.entities().labels(), &["2", "5", "9"]);
        assert_eq!(ds.train()[0], Quadruple::new(1, 1, 0, 1));
    }

    #[test]
    fn snapshot_out_of_range() {
        let ds = TkgDataset::from_indexed(2, 1, 3, vec![Quadruple::new(0, 0, 1, 0)], vec![], vec![])
            .unwrap();
        assert!(matches!(
            ds.snapshot(3, &Split::ALL),
            Err(Error::Index { index: 3, .. })
        ));
        assert!(ds.snapshot(2, &Split::ALL).unwrap().is_empty());
    }

    #[test]
    fn dataset_rejects_out_of_vocab() {
        let err = TkgDataset::from_indexed(2, 1, 1, vec![Quadruple::new(0, 0, 2, 0)], vec![], vec![]);
        assert!(matches!(err, Err(Error::Index { what: "entity", .. })));
    }

    #[test]
    fn cardinality_one_to_one_is_even() {
        let facts = [Quadruple::new(0, 0, 1, 0), Quadruple::new(2, 0, 3, 0)];
        let card = RelationCardinality::from_facts(&facts, 2);
        let e = card.entry(0).unwrap();
        assert_eq!((e.tails_per_head, e.heads_per_tail), (1.0, 1.0));
        assert_eq!(e.p_replace_head, 0.5);
        assert!(card.entry(1).is_none());
        assert_eq!(card.p_replace_head(1), 0.5);
    }

    #[test]
    fn cardinality_ignores_timestamps() {
        let facts = [
            Quadruple::new(0, 0, 1, 0),
            Quadruple::new(0, 0, 1, 1),
            Quadruple::new(0, 0, 2, 0),
        ];
        let card = RelationCardinality::from_facts(&facts, 1);
        let e = card.entry(0).unwrap();
        assert_eq!(e.facts, 3);
        assert_eq!(e.tails_per_head, 2.0);
        assert_eq!(e.heads_per_tail, 1.0);
    }

    #[test]
    fn cache_rejects_bad_magic_and_truncation() {
        let ds = TkgDataset::from_indexed(2, 1, 1, vec![Quadruple::new(0, 0, 1, 0)], vec![], vec![])
            .unwrap();
        let mut bytes = ds.to_cache_bytes().unwrap();
        assert_eq!(TkgDataset::from_cache_bytes(&bytes).unwrap(), ds);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(TkgDataset::from_cache_bytes(truncated), Err(Error::Cache(_))));
        bytes[0] = b'X';
        assert!(matches!(TkgDataset::from_cache_bytes(&bytes), Err(Error::Cache(_))));
    }
}
