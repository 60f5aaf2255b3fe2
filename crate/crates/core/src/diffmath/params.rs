//! Named parameter tensors and their text checkpoint format.
//!
//! ```text
//! sgnn-checkpoint 1
//! meta <key> <value>
//! param <name> <rows> <cols>
//! <rows*cols whitespace-separated values>
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! save followed by load is bit-exact.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::diffmath::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &str = "sgnn-checkpoint 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

/// Parameters copied onto a tape for one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Per-parameter gradients, zero-filled where no gradient reached.
    pub fn collect(&self, params: &ParamSet, grads: &Gradients) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .zip(&params.tensors)
            .map(|(&v, t)| {
                grads
                    .get(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.data().len()])
            })
            .collect()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Weight `[fan_in x fan_out]` drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rows: usize, rng: &mut R) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        self.add(name, Matrix::from_vec(rows, fan_out, data).expect("shape"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// Records every parameter as a leaf; `trainable` controls whether the
    /// leaves receive gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        Bound { vars }
    }

    /// Copies values from `other`, which must have identical names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::arg("parameter names differ"));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::arg("parameter shapes differ"));
            }
            *a = b.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(params: ParamSet) -> Self {
        Self {
            meta: Vec::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            out.push_str(&format!("param {name} {} {}\n", t.rows(), t.cols()));
            let vals: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, file: &str) -> Result<Self> {
        let fmt_err = |line: usize, message: String| Error::Format {
            file: file.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(fmt_err(1, "missing checkpoint header".into())),
        }
        let mut ck = Checkpoint::default();
        while let Some((no, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("param ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(fmt_err(no, "expected 'param <name> <rows> <cols>'".into()));
                }
                let rows: usize = parts[1]
                    .parse()
                    .map_err(|_| fmt_err(no, format!("bad row count '{}'", parts[1])))?;
                let cols: usize = parts[2]
                    .parse()
                    .map_err(|_| fmt_err(no, format!("bad column count '{}'", parts[2])))?;
                let (vno, vline) = lines
                    .next()
                    .ok_or_else(|| fmt_err(no, "missing values line".into()))?;
                let vals = vline
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| fmt_err(vno, e.to_string()))?;
                let m = Matrix::from_vec(rows, cols, vals).map_err(|e| fmt_err(vno, e.to_string()))?;
                ck.params.add(parts[0], m);
            } else {
                return Err(fmt_err(no, format!("unexpected line '{line}'")));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_text_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::new();
        p.add_uniform("w", 7, 3, 7, &mut rng);
        p.add("b", Matrix::from_vec(1, 2, vec![1e-300, -0.1]).unwrap());
        let ck = Checkpoint::new(p).with_meta("policy", "ed").with_meta("note", "two words");
        let back = Checkpoint::from_text(&ck.to_text(), "mem").unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("note"), Some("two words"));
    }

    #[test]
    fn malformed_checkpoint_reports_line() {
        let text = "sgnn-checkpoint 1\nparam w 1 2\n1.0 zz\n";
        match Checkpoint::from_text(text, "x") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
