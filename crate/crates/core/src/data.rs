//! Datasets of `(context, x, y)` records and their JSONL persistence.
//!
//! File layout: one header object
//! `{"format":"min-dataset","version":1,"contextual":..,"context_dim":..,"records":N,"space":{..}}`
//! followed by `N` record objects `{"c":[..],"x":[..],"y":..}` (`c` only when
//! contextual). Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MinError, Result};
use crate::oracles::Oracle;
use crate::rng::MinRng;

pub const FORMAT_NAME: &str = "min-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpace {
    Continuous { lower: Vec<f64>, upper: Vec<f64> },
    Categorical { length: usize, alphabet: usize },
}

impl InputSpace {
    pub fn continuous(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let s = InputSpace::Continuous { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn categorical(length: usize, alphabet: usize) -> Result<Self> {
        let s = InputSpace::Categorical { length, alphabet };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputSpace::Continuous { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(MinError::invalid("continuous space needs matching, non-empty bounds"));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(MinError::invalid("continuous space needs finite lower < upper per coordinate"));
                }
            }
            InputSpace::Categorical { length, alphabet } => {
                if *length < 1 || *alphabet < 2 {
                    return Err(MinError::invalid("categorical space needs length >= 1 and alphabet >= 2"));
                }
            }
        }
        Ok(())
    }

    /// Number of coordinates (continuous) or positions (categorical).
    pub fn dim(&self) -> usize {
        match self {
            InputSpace::Continuous { lower, .. } => lower.len(),
            InputSpace::Categorical { length, .. } => *length,
        }
    }

    /// Width of the network-facing encoding: coordinates, or one-hot blocks.
    pub fn encoded_dim(&self) -> usize {
        match self {
            InputSpace::Continuous { lower, .. } => lower.len(),
            InputSpace::Categorical { length, alphabet } => length * alphabet,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, InputSpace::Categorical { .. })
    }

    pub fn contains(&self, x: &Input) -> Result<()> {
        match (self, x) {
            (InputSpace::Continuous { lower, upper }, Input::Continuous(v)) => {
                if v.len() != lower.len() {
                    return Err(MinError::OutOfSpace(format!("expected {} coordinates, got {}", lower.len(), v.len())));
                }
                for (i, ((xi, l), u)) in v.iter().zip(lower).zip(upper).enumerate() {
                    if !(xi >= l && xi <= u) {
                        return Err(MinError::OutOfSpace(format!("coordinate {i} = {xi} outside [{l}, {u}]")));
                    }
                }
                Ok(())
            }
            (InputSpace::Categorical { length, alphabet }, Input::Categorical(s)) => {
                if s.len() != *length {
                    return Err(MinError::OutOfSpace(format!("expected length {length}, got {}", s.len())));
                }
                if let Some(bad) = s.iter().find(|&&a| a >= *alphabet) {
                    return Err(MinError::OutOfSpace(format!("symbol {bad} outside alphabet of {alphabet}")));
                }
                Ok(())
            }
            _ => Err(MinError::OutOfSpace("input kind does not match space".into())),
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Input {
        match self {
            InputSpace::Continuous { lower, upper } => {
                Input::Continuous(lower.iter().zip(upper).map(|(&l, &u)| l + (u - l) * rng.random::<f64>()).collect())
            }
            InputSpace::Categorical { length, alphabet } => {
                Input::Categorical((0..*length).map(|_| rng.random_range(0..*alphabet)).collect())
            }
        }
    }

    /// Network encoding: continuous coordinates mapped affinely onto [-1, 1],
    /// categorical sequences as concatenated one-hot blocks.
    pub fn encode(&self, x: &Input) -> Vec<f64> {
        match (self, x) {
            (InputSpace::Continuous { lower, upper }, Input::Continuous(v)) => v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(xi, (l, u))| 2.0 * (xi - l) / (u - l) - 1.0)
                .collect(),
            (InputSpace::Categorical { length, alphabet }, Input::Categorical(s)) => {
                let mut out = vec![0.0; length * alphabet];
                for (p, &a) in s.iter().enumerate() {
                    out[p * alphabet + a] = 1.0;
                }
                out
            }
            _ => panic!("encode: input kind does not match space"),
        }
    }

    /// Inverse of [`InputSpace::encode`]; categorical blocks decode by argmax.
    pub fn decode(&self, enc: &[f64]) -> Input {
        match self {
            InputSpace::Continuous { lower, upper } => Input::Continuous(
                enc.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(e, (l, u))| (l + (e.clamp(-1.0, 1.0) + 1.0) * 0.5 * (u - l)).clamp(*l, *u))
                    .collect(),
            ),
            InputSpace::Categorical { alphabet, .. } => Input::Categorical(
                enc.chunks(*alphabet)
                    .map(|block| {
                        block
                            .iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                            .0
                    })
                    .collect(),
            ),
        }
    }

    /// Coordinate ranges `upper - lower` (continuous only).
    pub fn ranges(&self) -> Option<Vec<f64>> {
        match self {
            InputSpace::Continuous { lower, upper } => Some(upper.iter().zip(lower).map(|(u, l)| u - l).collect()),
            InputSpace::Categorical { .. } => None,
        }
    }

    pub fn clip(&self, x: &mut Input) {
        if let (InputSpace::Continuous { lower, upper }, Input::Continuous(v)) = (self, x) {
            for ((xi, l), u) in v.iter_mut().zip(lower).zip(upper) {
                *xi = xi.clamp(*l, *u);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Continuous(Vec<f64>),
    Categorical(Vec<usize>),
}

impl Input {
    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Input::Continuous(v) => Some(v),
            Input::Categorical(_) => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&[usize]> {
        match self {
            Input::Categorical(s) => Some(s),
            Input::Continuous(_) => None,
        }
    }
}

impl Serialize for Input {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Input::Continuous(v) => v.serialize(s),
            Input::Categorical(v) => v.serialize(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub context: Option<Vec<f64>>,
    pub x: Input,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    space: InputSpace,
    context_dim: Option<usize>,
    records: Vec<Record>,
}

impl Dataset {
    /// `context_dim = Some(d)` makes the dataset contextual.
    pub fn new(space: InputSpace, context_dim: Option<usize>) -> Result<Self> {
        space.validate()?;
        if context_dim == Some(0) {
            return Err(MinError::invalid("context dimension must be positive"));
        }
        Ok(Dataset { space, context_dim, records: Vec::new() })
    }

    pub fn space(&self) -> &InputSpace {
        &self.space
    }

    pub fn contextual(&self) -> bool {
        self.context_dim.is_some()
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.context_dim
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate_record(&self, r: &Record) -> Result<()> {
        self.space.contains(&r.x)?;
        if !r.y.is_finite() {
            return Err(MinError::invalid(format!("score must be finite, got {}", r.y)));
        }
        match (self.context_dim, &r.context) {
            (None, None) => Ok(()),
            (Some(d), Some(c)) if c.len() == d && c.iter().all(|v| v.is_finite()) => Ok(()),
            (Some(d), Some(c)) => Err(MinError::invalid(format!("context must have {d} finite entries, got {}", c.len()))),
            (Some(_), None) => Err(MinError::invalid("contextual dataset requires a context")),
            (None, Some(_)) => Err(MinError::invalid("non-contextual dataset cannot hold a context")),
        }
    }

    pub fn push(&mut self, r: Record) -> Result<()> {
        self.validate_record(&r)?;
        self.records.push(r);
        Ok(())
    }

    pub fn ys(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn y_max(&self) -> Option<f64> {
        self.records.iter().map(|r| r.y).fold(None, |m, y| Some(m.map_or(y, |m: f64| m.max(y))))
    }

    /// Index of the best record; ties resolve to the earliest.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.records.iter().enumerate() {
            if best.is_none_or(|(_, b)| r.y > b) {
                best = Some((i, r.y));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(MinError::invalid("dataset is empty"))
        } else {
            Ok(())
        }
    }
}

/// How inputs are drawn when synthesizing a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingPolicy {
    Uniform,
    ManifoldLatent,
    Logging { correct_rate: f64 },
}

pub fn generate_static_dataset(
    oracle: &dyn Oracle,
    n: usize,
    policy: SamplingPolicy,
    rng: &mut MinRng,
) -> Result<Dataset> {
    if n == 0 {
        return Err(MinError::invalid("dataset size must be at least 1"));
    }
    let mut ds = Dataset::new(oracle.space().clone(), oracle.context_dim())?;
    for _ in 0..n {
        let (context, x) = oracle.propose(policy, rng)?;
        let y = oracle.evaluate(&x, context.as_deref())?;
        ds.push(Record { context, x, y })?;
    }
    Ok(ds)
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn fmt_f64_list(out: &mut String, vs: &[f64]) {
    out.push('[');
    for (i, v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push(']');
}

fn header_line(ds: &Dataset) -> String {
    let mut s = String::new();
    write!(s, "{{\"format\":\"{FORMAT_NAME}\",\"version\":{FORMAT_VERSION},\"contextual\":{},", ds.contextual()).unwrap();
    match ds.context_dim {
        Some(d) => write!(s, "\"context_dim\":{d},").unwrap(),
        None => s.push_str("\"context_dim\":null,"),
    }
    write!(s, "\"records\":{},\"space\":", ds.len()).unwrap();
    match &ds.space {
        InputSpace::Continuous { lower, upper } => {
            s.push_str("{\"kind\":\"continuous\",\"lower\":");
            fmt_f64_list(&mut s, lower);
            s.push_str(",\"upper\":");
            fmt_f64_list(&mut s, upper);
            s.push('}');
        }
        InputSpace::Categorical { length, alphabet } => {
            write!(s, "{{\"kind\":\"categorical\",\"length\":{length},\"alphabet\":{alphabet}}}").unwrap();
        }
    }
    s.push('}');
    s
}

fn record_line(r: &Record) -> String {
    let mut s = String::from("{");
    if let Some(c) = &r.context {
        s.push_str("\"c\":");
        fmt_f64_list(&mut s, c);
        s.push(',');
    }
    s.push_str("\"x\":");
    match &r.x {
        Input::Continuous(v) => fmt_f64_list(&mut s, v),
        Input::Categorical(q) => {
            s.push('[');
            for (i, a) in q.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                write!(s, "{a}").unwrap();
            }
            s.push(']');
        }
    }
    write!(s, ",\"y\":{}}}", fmt_f64(r.y)).unwrap();
    s
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header_line(ds))?;
    for r in &ds.records {
        writeln!(w, "{}", record_line(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    contextual: bool,
    context_dim: Option<usize>,
    records: usize,
    space: InputSpace,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    #[serde(default)]
    c: Option<Vec<f64>>,
    x: Vec<serde_json::Value>,
    y: f64,
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bad = |detail: String| MinError::Malformed { path: path.to_path_buf(), detail };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header_text = lines.next().ok_or_else(|| bad("missing header".into()))??;
    let header: Header = serde_json::from_str(&header_text).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(bad(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(MinError::Version { found: header.version, expected: FORMAT_VERSION });
    }
    if header.contextual != header.context_dim.is_some() {
        return Err(bad("contextual flag disagrees with context_dim".into()));
    }
    let mut ds = Dataset::new(header.space, header.context_dim).map_err(|e| bad(e.to_string()))?;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| bad(format!("record {i}: {e}")))?;
        let x = match &ds.space {
            InputSpace::Continuous { .. } => Input::Continuous(
                raw.x.iter().map(|v| v.as_f64().ok_or_else(|| bad(format!("record {i}: non-numeric x")))).collect::<Result<_>>()?,
            ),
            InputSpace::Categorical { .. } => Input::Categorical(
                raw.x
                    .iter()
                    .map(|v| v.as_u64().map(|u| u as usize).ok_or_else(|| bad(format!("record {i}: non-integer symbol"))))
                    .collect::<Result<_>>()?,
            ),
        };
        ds.push(Record { context: raw.c, x, y: raw.y }).map_err(|e| bad(format!("record {i}: {e}")))?;
    }
    if ds.len() != header.records {
        return Err(bad(format!("header declares {} records, found {}", header.records, ds.len())));
    }
    Ok(ds)
}

/// Per-feature affine map to zero mean and unit variance. Features with no
/// spread keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(MinError::invalid("cannot fit a standardizer on no rows"));
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(MinError::shape("standardizer", "ragged rows"));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                let s = v.sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn fit_scalar(values: &[f64]) -> Result<Self> {
        Standardizer::fit(values.iter().map(std::slice::from_ref))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    pub fn apply_scalar(&self, v: f64) -> f64 {
        (v - self.mean[0]) / self.std[0]
    }

    pub fn invert_scalar(&self, v: f64) -> f64 {
        v * self.std[0] + self.mean[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn sample_ds() -> Dataset {
        let space = InputSpace::continuous(vec![-5.0, 0.0], vec![10.0, 15.0]).unwrap();
        let mut ds = Dataset::new(space, None).unwrap();
        let mut rng = seeded(3);
        for i in 0..20 {
            let x = ds.space().sample_uniform(&mut rng);
            ds.push(Record { context: None, x, y: (i as f64).sin() / 3.0 }).unwrap();
        }
        ds
    }

    #[test]
    fn standardizer_maps_to_unit_scale() {
        let s = Standardizer::fit_scalar(&[1.0, 3.0, 5.0]).unwrap();
        assert!((s.apply_scalar(3.0)).abs() < 1e-15);
        assert!((s.invert_scalar(s.apply_scalar(4.2)) - 4.2).abs() < 1e-12);
        assert_eq!(Standardizer::fit_scalar(&[2.0, 2.0]).unwrap().std, vec![1.0]);
        assert!(Standardizer::fit_scalar(&[]).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(InputSpace::continuous(vec![1.0], vec![1.0]).is_err());
        assert!(InputSpace::continuous(vec![], vec![]).is_err());
        assert!(InputSpace::categorical(0, 4).is_err());
        assert!(InputSpace::categorical(3, 1).is_err());
    }

    #[test]
    fn push_rejects_out_of_space_records() {
        let mut ds = sample_ds();
        assert!(ds.push(Record { context: None, x: Input::Continuous(vec![11.0, 1.0]), y: 0.0 }).is_err());
        assert!(ds.push(Record { context: None, x: Input::Continuous(vec![1.0, 1.0]), y: f64::NAN }).is_err());
        assert!(ds.push(Record { context: Some(vec![1.0]), x: Input::Continuous(vec![1.0, 1.0]), y: 0.0 }).is_err());
        let cat = InputSpace::categorical(3, 4).unwrap();
        let mut ds = Dataset::new(cat, Some(2)).unwrap();
        assert!(ds.push(Record { context: Some(vec![0.0, 1.0]), x: Input::Categorical(vec![0, 3, 4]), y: 1.0 }).is_err());
        assert!(ds.push(Record { context: None, x: Input::Categorical(vec![0, 3, 2]), y: 1.0 }).is_err());
        ds.push(Record { context: Some(vec![0.0, 1.0]), x: Input::Categorical(vec![0, 3, 2]), y: 1.0 }).unwrap();
    }

    #[test]
    fn encode_decode_round_trip() {
        let cat = InputSpace::categorical(3, 4).unwrap();
        let x = Input::Categorical(vec![2, 0, 3]);
        assert_eq!(cat.decode(&cat.encode(&x)), x);
        let cont = InputSpace::continuous(vec![-5.0, 0.0], vec![10.0, 15.0]).unwrap();
        let x = Input::Continuous(vec![-5.0, 7.5]);
        assert_eq!(cont.encode(&x), vec![-1.0, 0.0]);
        assert_eq!(cont.decode(&[-1.0, 0.0]), x);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = sample_ds();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);

        let cat = InputSpace::categorical(2, 5).unwrap();
        let mut ds = Dataset::new(cat, Some(1)).unwrap();
        ds.push(Record { context: Some(vec![0.1]), x: Input::Categorical(vec![4, 0]), y: 1.0 }).unwrap();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&sample_ds(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        // mid-record cut
        fs::write(&path, &text[..text.len() - 10]).unwrap();
        assert!(load_dataset(&path).is_err());
        // cut on a line boundary
        let lines: Vec<&str> = text.lines().collect();
        fs::write(&path, lines[..5].join("\n")).unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&sample_ds(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":9", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(load_dataset(&path), Err(MinError::Version { found: 9, .. })));
    }

    #[test]
    fn empty_dataset_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = Dataset::new(InputSpace::categorical(2, 2).unwrap(), None).unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.is_empty());
        assert!(back.require_nonempty().is_err());
    }

    #[test]
    fn floats_use_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }
}
