//! Trajectory datasets and the `traj_id,seq,x,y` CSV interchange format.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geom::{GeomError, Point, Rect, TrajId, Trajectory};

pub const CSV_HEADER: &str = "traj_id,seq,x,y";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate trajectory id {0}")]
    DuplicateId(TrajId),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: {source}")]
    Geometry { line: u64, source: GeomError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub source: String,
    trajectories: Vec<Trajectory>,
    /// Original textual ids for datasets ingested with non-numeric ids.
    labels: BTreeMap<TrajId, String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        source: impl Into<String>,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(trajectories.len());
        for t in &trajectories {
            if !seen.insert(t.id) {
                return Err(DatasetError::DuplicateId(t.id));
            }
        }
        Ok(Dataset {
            name: name.into(),
            source: source.into(),
            trajectories,
            labels: BTreeMap::new(),
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.points().len()).sum()
    }

    pub fn segment_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.segment_count()).sum()
    }

    /// MBR of every point in the dataset.
    pub fn extent(&self) -> Option<Rect> {
        Rect::from_points(self.trajectories.iter().flat_map(|t| t.points()))
    }

    pub fn max_id(&self) -> Option<TrajId> {
        self.trajectories.iter().map(|t| t.id).max()
    }

    pub fn get(&self, id: TrajId) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    pub fn label(&self, id: TrajId) -> String {
        self.labels
            .get(&id)
            .cloned()
            .unwrap_or_else(|| id.to_string())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        let file = File::open(path)?;
        let mut ds = read_trajectory_csv(file)?;
        ds.name = name;
        ds.source = path.display().to_string();
        Ok(ds)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut out = BufWriter::new(File::create(path)?);
        write_trajectory_csv(self, &mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Writes the dataset with LF line endings and shortest round-trip floats.
pub fn write_trajectory_csv<W: Write>(ds: &Dataset, out: &mut W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for t in ds.trajectories() {
        let label = ds.label(t.id);
        let label = if label.contains([',', '"', '\n', '\r']) {
            format!("\"{}\"", label.replace('"', "\"\""))
        } else {
            label
        };
        for (seq, p) in t.points().iter().enumerate() {
            writeln!(out, "{label},{seq},{},{}", p.x, p.y)?;
        }
    }
    Ok(())
}

/// Parses the trajectory CSV. Rows of one trajectory must be contiguous with
/// seq increasing by exactly one; every malformed row is reported with its
/// 1-based line number.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);

    struct Group {
        label: String,
        first_line: u64,
        last_seq: u64,
        points: Vec<Point>,
    }

    let mut groups: Vec<Group> = Vec::new();
    let mut closed: HashSet<String> = HashSet::new();
    let mut saw_header = false;

    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| DatasetError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if !saw_header {
            let fields: Vec<&str> = rec.iter().map(str::trim).collect();
            if fields != ["traj_id", "seq", "x", "y"] {
                return Err(DatasetError::Parse {
                    line,
                    msg: format!("expected header `{CSV_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        if rec.len() != 4 {
            return Err(DatasetError::Parse {
                line,
                msg: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let label = rec[0].to_string();
        if label.is_empty() {
            return Err(DatasetError::Parse {
                line,
                msg: "empty traj_id".into(),
            });
        }
        let seq: u64 = rec[1].trim().parse().map_err(|_| DatasetError::Parse {
            line,
            msg: format!("seq `{}` is not a non-negative integer", &rec[1]),
        })?;
        let x = parse_coord(&rec[2], "x", line)?;
        let y = parse_coord(&rec[3], "y", line)?;

        match groups.last_mut() {
            Some(g) if g.label == label => {
                if seq != g.last_seq + 1 {
                    return Err(DatasetError::Parse {
                        line,
                        msg: format!(
                            "seq {} of trajectory `{}` does not follow {}",
                            seq, label, g.last_seq
                        ),
                    });
                }
                g.last_seq = seq;
                g.points.push(Point::new(x, y));
            }
            _ => {
                if let Some(prev) = groups.last() {
                    closed.insert(prev.label.clone());
                }
                if closed.contains(&label) {
                    return Err(DatasetError::Parse {
                        line,
                        msg: format!("rows of trajectory `{label}` are not contiguous"),
                    });
                }
                groups.push(Group {
                    label,
                    first_line: line,
                    last_seq: seq,
                    points: vec![Point::new(x, y)],
                });
            }
        }
    }
    if !saw_header {
        return Err(DatasetError::Parse {
            line: 1,
            msg: format!("missing header `{CSV_HEADER}`"),
        });
    }

    // Numeric labels become ids directly; otherwise ids are dense in file order.
    let numeric: Option<Vec<u64>> = groups.iter().map(|g| g.label.parse().ok()).collect();
    let mut labels = BTreeMap::new();
    let mut trajectories = Vec::with_capacity(groups.len());
    for (i, g) in groups.into_iter().enumerate() {
        let id = match &numeric {
            Some(ids) => TrajId(ids[i]),
            None => {
                labels.insert(TrajId(i as u64), g.label.clone());
                TrajId(i as u64)
            }
        };
        let t = Trajectory::new(id, g.points).map_err(|source| DatasetError::Geometry {
            line: g.first_line,
            source,
        })?;
        trajectories.push(t);
    }
    let mut ds = Dataset::new("dataset", "csv", trajectories)?;
    ds.labels = labels;
    Ok(ds)
}

fn parse_coord(field: &str, name: &str, line: u64) -> Result<f64, DatasetError> {
    let v: f64 = field.trim().parse().map_err(|_| DatasetError::Parse {
        line,
        msg: format!("{name} `{field}` is not a decimal number"),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::Parse {
            line,
            msg: format!("{name} `{field}` is not finite"),
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset, DatasetError> {
        read_trajectory_csv(s.as_bytes())
    }

    fn line_of(err: DatasetError) -> u64 {
        match err {
            DatasetError::Parse { line, .. } | DatasetError::Geometry { line, .. } => line,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parses_and_writes_back_identically() {
        let text = "traj_id,seq,x,y\n7,0,0,0\n7,1,1.5,-2\n9,0,0.1,0.2\n9,1,3,4\n9,2,5,6\n";
        let ds = parse(text).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.trajectories()[0].id, TrajId(7));
        assert_eq!(ds.point_count(), 5);
        let mut out = Vec::new();
        write_trajectory_csv(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn text_ids_are_preserved() {
        let text = "traj_id,seq,x,y\nbike-a,0,0,0\nbike-a,1,1,1\n\"b,2\",0,2,2\n\"b,2\",1,3,3\n";
        let ds = parse(text).unwrap();
        assert_eq!(ds.trajectories()[1].id, TrajId(1));
        assert_eq!(ds.label(TrajId(1)), "b,2");
        let mut out = Vec::new();
        write_trajectory_csv(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        assert_eq!(
            line_of(parse("traj_id,seq,x,y\n1,0,0,0\n1,1,abc,0\n").unwrap_err()),
            3
        );
        assert_eq!(
            line_of(parse("traj_id,seq,x,y\n1,0,0,0\n1,2,1,0\n").unwrap_err()),
            3
        );
        assert_eq!(
            line_of(parse("traj_id,seq,x,y\n1,0,0,0\n2,0,0,0\n2,1,1,1\n").unwrap_err()),
            2
        );
        assert_eq!(
            line_of(
                parse("traj_id,seq,x,y\n1,0,0,0\n1,1,1,1\n2,0,0,0\n2,1,0,0\n1,0,5,5\n")
                    .unwrap_err()
            ),
            6
        );
        assert_eq!(
            line_of(parse("traj_id,seq,x,y\n1,0,0,0\n1,1,inf,0\n").unwrap_err()),
            3
        );
        assert_eq!(
            line_of(parse("traj_id,seq,x,y\n1,-1,0,0\n").unwrap_err()),
            2
        );
        assert_eq!(line_of(parse("id,seq,x,y\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("traj_id,seq,x,y\n1,0,0\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("").unwrap_err()), 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let t = Trajectory::new(TrajId(1), vec![Point::new(0., 0.), Point::new(1., 1.)]).unwrap();
        assert!(matches!(
            Dataset::new("d", "test", vec![t.clone(), t]),
            Err(DatasetError::DuplicateId(TrajId(1)))
        ));
    }
}
