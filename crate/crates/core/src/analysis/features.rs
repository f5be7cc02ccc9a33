//! Bottleneck feature dumps for external embedding tools.
//!
//! Two encodings share one header `{format, domain_id, n, d, checkpoint_hash, labelled}`:
//!
//! * CSV: the header as JSON on a first line starting with `#`, then a CSV table
//!   `sample_key,f0..f{d-1},label` (empty label when unlabelled). Floats use the
//!   shortest representation that parses back to the same bits.
//! * Binary: magic `SFDAFEAT`, `u32` header length, the JSON header, then per row a
//!   `u32` key length, the key bytes, `d` little-endian `f64`, and an `i64` label (`-1` for none).

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::pipeline::full_pass;

pub const FEATURE_FORMAT: &str = "sfda-features/1";
const MAGIC: &[u8; 8] = b"SFDAFEAT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FromStr for FeatureFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "bin" | "binary" => Ok(FeatureFormat::Binary),
            other => Err(Error::validation(format!(
                "unknown feature format `{other}` (csv, bin)"
            ))),
        }
    }
}

impl fmt::Display for FeatureFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureFormat::Csv => "csv",
            FeatureFormat::Binary => "bin",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    domain_id: String,
    n: usize,
    d: usize,
    checkpoint_hash: String,
    labelled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDump {
    pub domain_id: String,
    pub checkpoint_hash: String,
    pub keys: Vec<String>,
    pub features: Array2<f64>,
    /// Evaluation labels, when the dataset has them.
    pub labels: Option<Vec<usize>>,
}

fn parse_err(context: &str, message: impl ToString) -> Error {
    Error::Parse {
        context: context.to_string(),
        message: message.to_string(),
    }
}

/// Bottleneck features of every sample of `dataset` under the checkpoint, in inference mode.
pub fn export_features(ckpt: &Checkpoint, dataset: &DomainDataset) -> Result<FeatureDump> {
    if ckpt.meta.num_classes != dataset.num_classes() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint has {} classes, domain {} has {}",
            ckpt.meta.num_classes,
            dataset.domain_id(),
            dataset.num_classes()
        )));
    }
    if let Some((h, w, c)) = dataset.image_shape() {
        let a = &ckpt.arch;
        if (h, w, c) != (a.image_size, a.image_size, a.channels) {
            return Err(Error::CheckpointMismatch(format!(
                "backbone expects {}x{}x{} images, domain {} has {h}x{w}x{c}",
                a.image_size,
                a.image_size,
                a.channels,
                dataset.domain_id()
            )));
        }
    }
    let net = ckpt.to_network()?;
    let (features, _) = full_pass(&net, dataset.unlabeled())?;
    Ok(FeatureDump {
        domain_id: dataset.domain_id().to_string(),
        checkpoint_hash: ckpt.hash()?,
        keys: dataset.keys().to_vec(),
        features,
        labels: dataset.eval_labels().map(<[usize]>::to_vec),
    })
}

impl FeatureDump {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn header(&self) -> Header {
        Header {
            format: FEATURE_FORMAT.into(),
            domain_id: self.domain_id.clone(),
            n: self.len(),
            d: self.dim(),
            checkpoint_hash: self.checkpoint_hash.clone(),
            labelled: self.labels.is_some(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.features.nrows() != self.keys.len()
            || self
                .labels
                .as_ref()
                .is_some_and(|l| l.len() != self.keys.len())
        {
            return Err(Error::validation("feature dump rows disagree"));
        }
        Ok(())
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        self.check()?;
        writeln!(w, "#{}", serde_json::to_string(&self.header())?)
            .map_err(|e| Error::io("<feature stream>", e))?;
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["sample_key".to_string()];
        head.extend((0..self.dim()).map(|j| format!("f{j}")));
        head.push("label".into());
        out.write_record(&head)
            .map_err(|e| parse_err("feature csv", e))?;
        for (i, key) in self.keys.iter().enumerate() {
            let mut rec = vec![key.clone()];
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            rec.push(
                self.labels
                    .as_ref()
                    .map_or(String::new(), |l| l[i].to_string()),
            );
            out.write_record(&rec)
                .map_err(|e| parse_err("feature csv", e))?;
        }
        out.flush().map_err(|e| Error::io("<feature stream>", e))
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut r = r;
        let mut first = String::new();
        r.read_line(&mut first)
            .map_err(|e| Error::io("<feature stream>", e))?;
        let json = first
            .trim_end()
            .strip_prefix('#')
            .ok_or_else(|| parse_err("feature csv", "missing header line"))?;
        let header = parse_header(json)?;
        let mut rdr = csv::Reader::from_reader(r);
        let mut keys = Vec::with_capacity(header.n);
        let mut data = Vec::with_capacity(header.n * header.d);
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_err("feature csv", e))?;
            if rec.len() != header.d + 2 {
                return Err(parse_err(
                    "feature csv",
                    format!("row has {} fields, expected {}", rec.len(), header.d + 2),
                ));
            }
            keys.push(rec[0].to_string());
            for j in 0..header.d {
                data.push(
                    rec[j + 1]
                        .parse::<f64>()
                        .map_err(|e| parse_err("feature csv", e))?,
                );
            }
            if header.labelled {
                labels.push(
                    rec[header.d + 1]
                        .parse::<usize>()
                        .map_err(|e| parse_err("feature csv label", e))?,
                );
            }
        }
        finish(header, keys, data, labels)
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        self.check()?;
        let io = |e| Error::io("<feature stream>", e);
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(header.len() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(&header).map_err(io)?;
        for (i, key) in self.keys.iter().enumerate() {
            w.write_all(&(key.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(key.as_bytes()).map_err(io)?;
            for v in self.features.row(i) {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            let label = self.labels.as_ref().map_or(-1, |l| l[i] as i64);
            w.write_all(&label.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(parse_err("feature binary", "bad magic"));
        }
        let mut len = [0u8; 4];
        read_exact(&mut r, &mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        read_exact(&mut r, &mut json)?;
        let header = parse_header(
            std::str::from_utf8(&json).map_err(|e| parse_err("feature binary header", e))?,
        )?;
        let mut keys = Vec::with_capacity(header.n);
        let mut data = Vec::with_capacity(header.n * header.d);
        let mut labels = Vec::new();
        let mut word = [0u8; 8];
        for _ in 0..header.n {
            read_exact(&mut r, &mut len)?;
            let mut key = vec![0u8; u32::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut key)?;
            keys.push(String::from_utf8(key).map_err(|e| parse_err("feature binary key", e))?);
            for _ in 0..header.d {
                read_exact(&mut r, &mut word)?;
                data.push(f64::from_le_bytes(word));
            }
            read_exact(&mut r, &mut word)?;
            let label = i64::from_le_bytes(word);
            if header.labelled {
                labels.push(
                    usize::try_from(label)
                        .map_err(|_| parse_err("feature binary", "negative label"))?,
                );
            }
        }
        finish(header, keys, data, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: FeatureFormat) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut buf = Vec::new();
        match format {
            FeatureFormat::Csv => self.write_csv(&mut buf)?,
            FeatureFormat::Binary => self.write_binary(&mut buf)?,
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Reads either encoding, recognised by its first bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            Self::read_csv(BufReader::new(&bytes[..]))
        }
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::io("<feature stream>", e))
}

fn parse_header(json: &str) -> Result<Header> {
    let header: Header = serde_json::from_str(json)?;
    if header.format != FEATURE_FORMAT {
        return Err(parse_err(
            "feature header",
            format!("unknown format `{}`", header.format),
        ));
    }
    Ok(header)
}

fn finish(
    header: Header,
    keys: Vec<String>,
    data: Vec<f64>,
    labels: Vec<usize>,
) -> Result<FeatureDump> {
    if keys.len() != header.n {
        return Err(parse_err(
            "feature dump",
            format!("header declares {} rows, found {}", header.n, keys.len()),
        ));
    }
    let features = Array2::from_shape_vec((header.n, header.d), data)
        .map_err(|e| parse_err("feature dump", e))?;
    Ok(FeatureDump {
        domain_id: header.domain_id,
        checkpoint_hash: header.checkpoint_hash,
        keys,
        features,
        labels: header.labelled.then_some(labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump(labelled: bool) -> FeatureDump {
        FeatureDump {
            domain_id: "target1".into(),
            checkpoint_hash: "00ff".into(),
            keys: vec!["a/1".into(), "b,2".into(), "c\"3".into()],
            features: Array2::from_shape_fn((3, 2), |(i, j)| (i as f64 + 0.1) / (j as f64 + 3.0)),
            labels: labelled.then(|| vec![0, 2, 1]),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for labelled in [true, false] {
            let d = dump(labelled);
            let mut buf = Vec::new();
            d.write_csv(&mut buf).unwrap();
            assert_eq!(FeatureDump::read_csv(&buf[..]).unwrap(), d);
        }
    }

    #[test]
    fn binary_round_trip_is_exact() {
        for labelled in [true, false] {
            let d = dump(labelled);
            let mut buf = Vec::new();
            d.write_binary(&mut buf).unwrap();
            assert_eq!(FeatureDump::read_binary(&buf[..]).unwrap(), d);
        }
    }

    #[test]
    fn truncated_binary_fails() {
        let mut buf = Vec::new();
        dump(true).write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(FeatureDump::read_binary(&buf[..]).is_err());
    }
}
