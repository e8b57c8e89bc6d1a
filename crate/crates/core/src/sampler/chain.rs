use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::WeightedSample;
use crate::error::{Error, Result};
use crate::io::{read_header, read_lines, write_header_with};

/// Destination for retained samples.
pub trait SampleSink {
    fn push(&mut self, sample: WeightedSample) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    /// Bytes durably written so far, when the sink is a file.
    fn position(&self) -> Option<u64> {
        None
    }
}

impl SampleSink for Vec<WeightedSample> {
    fn push(&mut self, sample: WeightedSample) -> Result<()> {
        Vec::push(self, sample);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainHeader {
    pub config_hash: String,
    pub algorithm: String,
    pub multiset_size: usize,
    pub dim: usize,
    pub latent_columns: Vec<String>,
}

impl ChainHeader {
    fn columns(&self) -> String {
        let mut cols = vec!["iteration".to_string(), "leading".to_string()];
        cols.extend(self.latent_columns.iter().cloned());
        for m in 1..=self.multiset_size {
            for j in 1..=self.dim {
                cols.push(format!("theta_{m}_{j}"));
            }
            cols.push(format!("logf_{m}"));
            cols.push(format!("w_{m}"));
        }
        cols.join(",")
    }
}

/// A chain read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub header: ChainHeader,
    pub samples: Vec<WeightedSample>,
}

/// Appends retained samples as delimited text, one line per iteration.
pub struct ChainWriter {
    path: PathBuf,
    w: BufWriter<std::fs::File>,
    written: u64,
    header: ChainHeader,
}

fn format_sample(s: &WeightedSample) -> String {
    let mut line = format!("{},{}", s.iteration, s.leading);
    for v in &s.latent {
        line.push(',');
        line.push_str(&v.to_string());
    }
    for ((theta, lf), w) in s.thetas.iter().zip(&s.log_f).zip(&s.weights) {
        for t in theta {
            line.push(',');
            line.push_str(&t.to_string());
        }
        line.push(',');
        line.push_str(&lf.to_string());
        line.push(',');
        line.push_str(&w.to_string());
    }
    line.push('\n');
    line
}

impl ChainWriter {
    pub fn create(path: &Path, header: ChainHeader) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::new();
        write_header_with(
            &mut buf,
            "chain",
            &header.config_hash,
            &[
                ("algorithm", header.algorithm.clone()),
                ("multiset_size", header.multiset_size.to_string()),
                ("dim", header.dim.to_string()),
            ],
        )
        .expect("writing to memory");
        buf.extend_from_slice(header.columns().as_bytes());
        buf.push(b'\n');
        let mut w = BufWriter::new(file);
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            w,
            written: buf.len() as u64,
            header,
        })
    }

    /// Reopens an existing chain and drops everything after `offset`, the
    /// position recorded by the checkpoint being resumed.
    pub fn resume(path: &Path, header: ChainHeader, offset: u64) -> Result<Self> {
        let existing = read_chain(path)?;
        if existing.header != header {
            return Err(Error::Data(format!(
                "{} does not match the checkpointed run (different header)",
                path.display()
            )));
        }
        let mut file = std::fs::OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.set_len(offset).map_err(|e| Error::io(path, e))?;
        file.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            w: BufWriter::new(file),
            written: offset,
            header,
        })
    }

    pub fn header(&self) -> &ChainHeader {
        &self.header
    }
}

impl SampleSink for ChainWriter {
    fn push(&mut self, sample: WeightedSample) -> Result<()> {
        let line = format_sample(&sample);
        self.w.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.written += line.len() as u64;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn position(&self) -> Option<u64> {
        Some(self.written)
    }
}

pub fn read_chain(path: &Path) -> Result<Chain> {
    let lines = read_lines(path)?;
    let (h, start) = read_header(&lines, path, "chain")?;
    let field = |k: &str| -> Result<usize> {
        h.fields
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, 1, format!("header lacks a valid `{k}`")))
    };
    let multiset_size = field("multiset_size")?;
    let dim = field("dim")?;
    let cols_line = lines.get(start).ok_or_else(|| Error::format(path, start + 1, "missing column line"))?;
    let cols: Vec<&str> = cols_line.split(',').collect();
    let per = dim + 2;
    if cols.len() < 2 + multiset_size * per {
        return Err(Error::format(path, start + 1, "column line too short"));
    }
    let n_latent = cols.len() - 2 - multiset_size * per;
    let header = ChainHeader {
        config_hash: h.config_hash.clone(),
        algorithm: h.fields.get("algorithm").cloned().unwrap_or_default(),
        multiset_size,
        dim,
        latent_columns: cols[2..2 + n_latent].iter().map(|s| s.to_string()).collect(),
    };
    let mut samples = Vec::new();
    for (ln, line) in lines.iter().enumerate().skip(start + 1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::format(path, ln + 1, format!("expected {} fields, got {}", cols.len(), f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().map_err(|_| Error::format(path, ln + 1, format!("field {} is not a number", i + 1)))
        };
        let iteration = f[0].parse().map_err(|_| Error::format(path, ln + 1, "bad iteration"))?;
        let leading = f[1].parse().map_err(|_| Error::format(path, ln + 1, "bad leading index"))?;
        let latent = (2..2 + n_latent).map(num).collect::<Result<Vec<_>>>()?;
        let mut thetas = Vec::with_capacity(multiset_size);
        let mut log_f = Vec::with_capacity(multiset_size);
        let mut weights = Vec::with_capacity(multiset_size);
        for m in 0..multiset_size {
            let base = 2 + n_latent + m * per;
            thetas.push((base..base + dim).map(num).collect::<Result<Vec<_>>>()?);
            log_f.push(num(base + dim)?);
            weights.push(num(base + dim + 1)?);
        }
        samples.push(WeightedSample {
            iteration,
            leading,
            latent,
            thetas,
            log_f,
            weights,
        });
    }
    Ok(Chain { header, samples })
}
