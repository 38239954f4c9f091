use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bag, Instance, Label, LabeledSample};
use crate::error::{Error, Result};

/// Rows of a time-series CSV file: one series and one integer class id per line.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    pub series: Vec<Vec<f64>>,
    pub classes: Vec<i64>,
}

/// Records of a MIL JSON-lines file.
#[derive(Debug, Clone, PartialEq)]
pub struct MilData {
    pub bags: Vec<Bag>,
    pub classes: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct MilRecord {
    label: i64,
    instances: Vec<Vec<f64>>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_class(field: &str) -> Option<i64> {
    let field = field.trim();
    field.parse::<i64>().ok().or_else(|| {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && v.fract() == 0.0)
            .map(|v| v as i64)
    })
}

/// Reads `label,v1,...,vL` records. All rows must have the same length.
pub fn load_timeseries_csv(path: impl AsRef<Path>) -> Result<TimeSeriesData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut series = Vec::new();
    let mut classes = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default();
        let class = parse_class(label)
            .ok_or_else(|| parse_err(path, lineno, format!("invalid class label `{label}`")))?;
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, lineno, format!("invalid value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(parse_err(path, lineno, "row has no values"));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("ragged row: {} values, expected {w}", values.len()),
                ))
            }
            _ => {}
        }
        series.push(values);
        classes.push(class);
    }
    if series.is_empty() {
        return Err(parse_err(path, 0, "file contains no records"));
    }
    Ok(TimeSeriesData { series, classes })
}

pub fn save_timeseries_csv(path: impl AsRef<Path>, data: &TimeSeriesData) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (s, c) in data.series.iter().zip(&data.classes) {
        write!(out, "{c}")?;
        for v in s {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `{"label": <int>, "instances": [[...], ...]}` records, keeping the
/// raw class ids.
pub fn load_mil_jsonl_classes(path: impl AsRef<Path>) -> Result<MilData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut bags = Vec::new();
    let mut classes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: MilRecord =
            serde_json::from_str(line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if record.instances.is_empty() {
            return Err(parse_err(path, lineno, "empty instance list"));
        }
        let instances = record
            .instances
            .into_iter()
            .map(Instance::new)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        bags.push(Bag::from_instances(instances)?);
        classes.push(record.label);
    }
    if bags.is_empty() {
        return Err(parse_err(path, 0, "file contains no records"));
    }
    Ok(MilData { bags, classes })
}

/// Reads a binary MIL JSON-lines file as a labeled sample.
pub fn load_mil_jsonl(path: impl AsRef<Path>) -> Result<LabeledSample> {
    let data = load_mil_jsonl_classes(path)?;
    let labels = binary_labels(&data.classes)?;
    LabeledSample::new(data.bags, labels)
}

pub fn save_mil_jsonl(path: impl AsRef<Path>, bags: &[Bag], classes: &[i64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (bag, &label) in bags.iter().zip(classes) {
        let record = MilRecord {
            label,
            instances: bag.instances().map(<[f64]>::to_vec).collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::InvalidInput(e.to_string()))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Maps at most two class ids onto ±1: class 1 is positive; with two classes
/// and neither equal to 1, the larger id is positive. Everything else is
/// negative.
pub fn binary_labels(classes: &[i64]) -> Result<Vec<Label>> {
    let mut distinct: Vec<i64> = classes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > 2 {
        return Err(Error::InvalidInput(format!(
            "{} classes present; use one-vs-rest",
            distinct.len()
        )));
    }
    let positive = if distinct.contains(&1) || distinct.len() < 2 {
        1
    } else {
        distinct[1]
    };
    Ok(classes
        .iter()
        .map(|&c| if c == positive { Label::Positive } else { Label::Negative })
        .collect())
}

/// Class `class` against all others.
pub fn one_vs_rest(classes: &[i64], class: i64) -> Vec<Label> {
    classes
        .iter()
        .map(|&c| if c == class { Label::Positive } else { Label::Negative })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_row() {
        let f = write_tmp("1,0.5,0.25\n");
        let d = load_timeseries_csv(f.path()).unwrap();
        assert_eq!(d.series, vec![vec![0.5, 0.25]]);
        assert_eq!(binary_labels(&d.classes).unwrap(), vec![Label::Positive]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let f = write_tmp("1,0.5,0.25\n2,0.1\n");
        match load_timeseries_csv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_tmp("1,0.5\n2,abc\n");
        assert!(matches!(load_timeseries_csv(f.path()), Err(Error::Parse { line: 2, .. })));
        let f = write_tmp("");
        assert!(matches!(load_timeseries_csv(f.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn jsonl_record() {
        let f = write_tmp("{\"label\":-1,\"instances\":[[1,2],[3,4]]}\n");
        let s = load_mil_jsonl(f.path()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.label(0), Label::Negative);
        let g = s.bag(0).group(2).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.get(1), &[3.0, 4.0]);
    }

    #[test]
    fn jsonl_errors() {
        let f = write_tmp("{\"label\":1,\"instances\":[[1]]}\n{\"label\":1,\"instances\":[]}\n");
        assert!(matches!(load_mil_jsonl(f.path()), Err(Error::Parse { line: 2, .. })));
        let f = write_tmp("");
        assert!(load_mil_jsonl(f.path()).is_err());
        let f = write_tmp("{\"label\":1,\"instances\":[[1, \"x\"]]}\n");
        assert!(matches!(load_mil_jsonl(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn label_mapping() {
        assert_eq!(
            binary_labels(&[1, 2, 2]).unwrap(),
            vec![Label::Positive, Label::Negative, Label::Negative]
        );
        assert_eq!(
            binary_labels(&[0, 1]).unwrap(),
            vec![Label::Negative, Label::Positive]
        );
        assert_eq!(
            binary_labels(&[3, 4]).unwrap(),
            vec![Label::Negative, Label::Positive]
        );
        assert!(binary_labels(&[1, 2, 3]).is_err());
        assert_eq!(
            one_vs_rest(&[1, 2, 3], 2),
            vec![Label::Negative, Label::Positive, Label::Negative]
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let f = write_tmp(
            "{\"label\":1,\"instances\":[[0.1,2.5],[3,4],[7]]}\n{\"label\":-1,\"instances\":[[1e-3,-2]]}\n",
        );
        let a = load_mil_jsonl_classes(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_mil_jsonl(out.path(), &a.bags, &a.classes).unwrap();
        let b = load_mil_jsonl_classes(out.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let f = write_tmp("1,0.1,0.2,0.30000000000000004\n2,-1e-7,5,6\n");
        let a = load_timeseries_csv(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_timeseries_csv(out.path(), &a).unwrap();
        assert_eq!(load_timeseries_csv(out.path()).unwrap(), a);
    }
}
