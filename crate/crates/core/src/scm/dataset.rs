use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which distribution a dataset was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataTag {
    Training,
    Transfer { mu: f64 },
    /// Loaded from a user-supplied file.
    External,
}

/// Paired samples of the two observed variables and the proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub tag: DataTag,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    w: f64,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, w: Vec<f64>, tag: DataTag, seed: u64) -> Result<Self> {
        if x.len() != y.len() || x.len() != w.len() {
            return Err(Error::config(format!(
                "dataset columns differ in length: x {}, y {}, w {}",
                x.len(),
                y.len(),
                w.len()
            )));
        }
        Ok(Self { x, y, w, tag, seed })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Rows at the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
            tag: self.tag,
            seed: self.seed,
        }
    }

    /// The same data with `x` and `y` exchanged.
    pub fn swapped(&self) -> Dataset {
        Dataset {
            x: self.y.clone(),
            y: self.x.clone(),
            w: self.w.clone(),
            tag: self.tag,
            seed: self.seed,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            wtr.serialize(Row {
                x: self.x[i],
                y: self.y[i],
                w: self.w[i],
            })
            .map_err(csv_err)?;
        }
        // header still required for an empty dataset
        if self.is_empty() {
            wtr.write_record(["x", "y", "w"]).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::run(format!("csv flush: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| match e {
            Error::Run(msg) => Error::io(path, std::io::Error::other(msg)),
            other => other,
        })
    }

    /// Reads a CSV with header `x,y,w`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["x", "y", "w"] {
            return Err(Error::config(format!(
                "dataset csv header must be 'x,y,w', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::config(format!("dataset csv row {}: {e}", line + 1)))?;
            if !(row.x.is_finite() && row.y.is_finite() && row.w.is_finite()) {
                return Err(Error::config(format!("dataset csv row {}: non-finite value", line + 1)));
            }
            x.push(row.x);
            y.push(row.y);
            w.push(row.w);
        }
        Dataset::new(x, y, w, DataTag::External, 0)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::config(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let d = Dataset::new(
            vec![0.1, -2.5e-7, 3.0],
            vec![1.0 / 3.0, 2.0, -0.0],
            vec![f64::MIN_POSITIVE, 1e300, -4.25],
            DataTag::Training,
            11,
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,w\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.y, d.y);
        assert_eq!(back.w, d.w);
        assert_eq!(back.tag, DataTag::External);
    }

    #[test]
    fn bad_header_and_lengths_rejected() {
        assert!(Dataset::read_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("x,y,w\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::new(vec![1.0], vec![], vec![1.0], DataTag::Training, 0).is_err());
    }

    #[test]
    fn empty_dataset_keeps_header() {
        let d = Dataset::new(vec![], vec![], vec![], DataTag::Training, 0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y,w\n");
    }
}
