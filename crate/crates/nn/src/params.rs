use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::tensor::Tensor;
use crate::{NnError, Result};

/// First line of every parameter checkpoint.
pub const CHECKPOINT_MAGIC: &str = "commsim-params v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Adds a `rows x cols` tensor drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Ids whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.names
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Writes the text checkpoint format:
    ///
    /// ```text
    /// commsim-params v1
    /// count <n>
    /// param <name> <rows> <cols>
    /// <rows*cols whitespace-separated values, one tensor row per line>
    /// ...
    /// ```
    ///
    /// Values use Rust's shortest round-trip float formatting, so a
    /// save/load cycle reproduces every parameter bit for bit.
    pub fn write_checkpoint(&self, mut out: impl Write) -> Result<()> {
        let mut text = String::new();
        writeln!(text, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(text, "count {}", self.tensors.len()).unwrap();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            writeln!(text, "param {name} {} {}", t.rows(), t.cols()).unwrap();
            for r in 0..t.rows() {
                let line: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
                writeln!(text, "{}", line.join(" ")).unwrap();
            }
        }
        out.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn read_checkpoint(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| NnError::Checkpoint(format!("unexpected end of file, expected {what}")))
        };
        let magic = next_line("header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint(format!(
                "bad header `{}`, expected `{CHECKPOINT_MAGIC}`",
                magic.trim()
            )));
        }
        let count_line = next_line("count")?;
        let count: usize = count_line
            .strip_prefix("count ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| NnError::Checkpoint(format!("bad count line `{count_line}`")))?;
        let mut set = ParamSet::new();
        for _ in 0..count {
            let header = next_line("param header")?;
            let fields: Vec<&str> = header.split_whitespace().collect();
            let (name, rows, cols) = match fields.as_slice() {
                ["param", name, rows, cols] => (
                    name.to_string(),
                    rows.parse::<usize>().map_err(|e| NnError::Checkpoint(e.to_string()))?,
                    cols.parse::<usize>().map_err(|e| NnError::Checkpoint(e.to_string()))?,
                ),
                _ => return Err(NnError::Checkpoint(format!("bad param header `{header}`"))),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = next_line("tensor row")?;
                for tok in line.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|e| {
                        NnError::Checkpoint(format!("param `{name}`: {e}"))
                    })?);
                }
            }
            if data.len() != rows * cols {
                return Err(NnError::Checkpoint(format!(
                    "param `{name}`: expected {} values, found {}",
                    rows * cols,
                    data.len()
                )));
            }
            set.add(name, Tensor::from_vec(rows, cols, data));
        }
        Ok(set)
    }

    /// Copies values from `other` into `self`, requiring identical names
    /// and shapes. Errors name the first offending layer.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let j = other.names.iter().position(|n| n == name).ok_or_else(|| {
                NnError::Checkpoint(format!("checkpoint is missing layer `{name}`"))
            })?;
            let (mine, theirs) = (&self.tensors[i], &other.tensors[j]);
            if mine.shape() != theirs.shape() {
                return Err(NnError::CheckpointShape {
                    name: name.clone(),
                    expected_rows: mine.rows(),
                    expected_cols: mine.cols(),
                    rows: theirs.rows(),
                    cols: theirs.cols(),
                });
            }
        }
        for (i, name) in self.names.clone().iter().enumerate() {
            let j = other.names.iter().position(|n| n == name).unwrap();
            self.tensors[i] = other.tensors[j].clone();
        }
        Ok(())
    }
}
