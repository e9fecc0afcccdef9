use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::DataError;

/// A parsed record with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Numbered<T> {
    pub line: usize,
    pub value: T,
}

/// Parses one JSON object per line. Blank lines are skipped; each malformed
/// line yields its own [`DataError::Parse`] so callers can keep going.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<Result<Numbered<T>, DataError>>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map(|value| Numbered { line: i + 1, value })
                .map_err(|e| DataError::Parse { line: i + 1, msg: e.to_string() }),
        );
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<Result<Numbered<T>, DataError>>, DataError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<'a, T, W, I>(mut writer: W, records: I) -> Result<(), DataError>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_jsonl_file<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<(), DataError> {
    write_jsonl(BufWriter::new(File::create(path)?), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{label_to_cube, CubeLabel, HeadLabel, PosePrediction};
    use crate::rotation::EulerPose;

    #[test]
    fn cube_labels_round_trip_bit_exactly() {
        let labels: Vec<CubeLabel> = [(30.0, 20.0, 10.0), (-172.3, 41.9, 0.1), (0.1 + 0.2, -88.7, 179.99)]
            .iter()
            .enumerate()
            .map(|(i, &(y, p, r))| {
                label_to_cube(&HeadLabel {
                    image_id: format!("im{i}"),
                    bbox: [3.7, 11.1, 97.3, 101.9],
                    yaw: y,
                    pitch: p,
                    roll: r,
                    nose: Some([51.3, 60.2]),
                    l: None,
                })
                .unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &labels).unwrap();
        let back: Vec<CubeLabel> = read_jsonl(buf.as_slice())
            .unwrap()
            .into_iter()
            .map(|r| r.unwrap().value)
            .collect();
        assert_eq!(back.len(), labels.len());
        for (a, b) in labels.iter().zip(&back) {
            assert_eq!(a.image_id, b.image_id);
            for (x, y) in a.vertices.iter().flatten().zip(b.vertices.iter().flatten()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.dims.values().iter().zip(b.dims.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn malformed_lines_are_reported_per_line() {
        let text = "{\"image_id\":\"a\",\"yaw\":1,\"pitch\":2,\"roll\":3}\n\nnot json\n{\"image_id\":\"b\",\"yaw\":1}\n";
        let rows = read_jsonl::<PosePrediction, _>(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].as_ref().unwrap().value.pose(), EulerPose::new(1.0, 2.0, 3.0));
        assert!(matches!(rows[1], Err(DataError::Parse { line: 3, .. })));
        assert!(matches!(rows[2], Err(DataError::Parse { line: 4, .. })));
    }

    #[test]
    fn empty_input() {
        assert!(read_jsonl::<HeadLabel, _>(&b""[..]).unwrap().is_empty());
    }
}
