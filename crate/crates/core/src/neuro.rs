//! Fixed-topology feedforward controller.
//!
//! One hidden layer of tanh units plus a constant-one bias unit that feeds the
//! output layer. Outputs are tanh too, so every action lies in `(-1, 1)`.
//!
//! Genome layout: `W1` row-major (`n_in × n_hidden`), then `W2` row-major
//! (`(n_hidden + 1) × n_out`) where the last row holds the bias weights.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Computational hidden units; the bias unit makes twenty.
pub const DEFAULT_HIDDEN: usize = 19;

const GENOME_MAGIC: &[u8; 4] = b"GNOM";
const GENOME_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

impl ControllerSpec {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_hidden: DEFAULT_HIDDEN,
            n_out,
        }
    }

    pub fn with_hidden(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_hidden,
            n_out,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 || self.n_hidden == 0 {
            return Err(Error::InvalidInput(format!(
                "controller dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn genome_length(&self) -> usize {
        self.n_in * self.n_hidden + (self.n_hidden + 1) * self.n_out
    }

    fn w2_offset(&self) -> usize {
        self.n_in * self.n_hidden
    }

    /// Flat index of `W1[input, hidden]`.
    pub fn w1_index(&self, input: usize, hidden: usize) -> usize {
        input * self.n_hidden + hidden
    }

    /// Flat index of `W2[hidden, output]`; `hidden == n_hidden` is the bias row.
    pub fn w2_index(&self, hidden: usize, output: usize) -> usize {
        self.w2_offset() + hidden * self.n_out + output
    }
}

/// Flat weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome(pub Vec<f64>);

impl Genome {
    pub fn zeros(spec: &ControllerSpec) -> Self {
        Genome(vec![0.0; spec.genome_length()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Writes the little-endian binary form: magic, version, dims, weights.
    pub fn write_binary<W: Write>(&self, spec: &ControllerSpec, mut w: W) -> std::io::Result<()> {
        w.write_all(GENOME_MAGIC)?;
        w.write_all(&GENOME_VERSION.to_le_bytes())?;
        for d in [spec.n_in, spec.n_hidden, spec.n_out] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&(self.0.len() as u64).to_le_bytes())?;
        for v in &self.0 {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<(ControllerSpec, Genome)> {
        use std::io::{Error as IoError, ErrorKind};
        let bad = |m: &str| IoError::new(ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GENOME_MAGIC {
            return Err(bad("not a genome file"));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> std::io::Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = read_u32(&mut r)?;
        if version != GENOME_VERSION {
            return Err(bad("unsupported genome version"));
        }
        let n_in = read_u32(&mut r)? as usize;
        let n_hidden = read_u32(&mut r)? as usize;
        let n_out = read_u32(&mut r)? as usize;
        let spec = ControllerSpec::with_hidden(n_in, n_hidden, n_out);
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let len = u64::from_le_bytes(u64buf) as usize;
        if len != spec.genome_length() {
            return Err(bad("genome length does not match header dimensions"));
        }
        let mut weights = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut u64buf)?;
            weights.push(f64::from_le_bytes(u64buf));
        }
        Ok((spec, Genome(weights)))
    }

    pub fn save(&self, spec: &ControllerSpec, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(spec, std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(ControllerSpec, Genome)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Genome::read_binary(std::io::BufReader::new(file)).map_err(|e| Error::io(path, e))
    }

    /// `index,value` rows for inspection.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.0.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Weight matrices in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `n_in × n_hidden`.
    pub w1: Vec<f64>,
    /// `(n_hidden + 1) × n_out`.
    pub w2: Vec<f64>,
}

pub fn encode(spec: &ControllerSpec, weights: &Weights) -> Result<Genome> {
    let (l1, l2) = (spec.n_in * spec.n_hidden, (spec.n_hidden + 1) * spec.n_out);
    if weights.w1.len() != l1 {
        return Err(Error::Dimension {
            context: "W1",
            expected: l1,
            actual: weights.w1.len(),
        });
    }
    if weights.w2.len() != l2 {
        return Err(Error::Dimension {
            context: "W2",
            expected: l2,
            actual: weights.w2.len(),
        });
    }
    let mut flat = Vec::with_capacity(l1 + l2);
    flat.extend_from_slice(&weights.w1);
    flat.extend_from_slice(&weights.w2);
    Ok(Genome(flat))
}

pub fn decode(spec: &ControllerSpec, genome: &Genome) -> Result<Weights> {
    check_genome(spec, genome)?;
    let split = spec.w2_offset();
    Ok(Weights {
        w1: genome.0[..split].to_vec(),
        w2: genome.0[split..].to_vec(),
    })
}

fn check_genome(spec: &ControllerSpec, genome: &Genome) -> Result<()> {
    if genome.len() != spec.genome_length() {
        return Err(Error::Dimension {
            context: "genome",
            expected: spec.genome_length(),
            actual: genome.len(),
        });
    }
    Ok(())
}

/// A spec paired with its genome, with scratch space for the hidden layer.
#[derive(Debug, Clone)]
pub struct Controller {
    spec: ControllerSpec,
    genome: Genome,
    hidden: Vec<f64>,
}

impl Controller {
    pub fn new(spec: ControllerSpec, genome: Genome) -> Result<Self> {
        spec.validate()?;
        check_genome(&spec, &genome)?;
        Ok(Self {
            hidden: vec![0.0; spec.n_hidden + 1],
            spec,
            genome,
        })
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    /// Forward pass writing into `action`.
    pub fn forward_into(&mut self, observation: &[f64], action: &mut [f64]) -> Result<()> {
        let s = self.spec;
        if observation.len() != s.n_in {
            return Err(Error::Dimension {
                context: "observation",
                expected: s.n_in,
                actual: observation.len(),
            });
        }
        if action.len() != s.n_out {
            return Err(Error::Dimension {
                context: "action",
                expected: s.n_out,
                actual: action.len(),
            });
        }
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        let w = &self.genome.0;
        let h = &mut self.hidden;
        h[..s.n_hidden].fill(0.0);
        for (i, &o) in observation.iter().enumerate() {
            let row = &w[i * s.n_hidden..(i + 1) * s.n_hidden];
            for (hj, &wij) in h.iter_mut().zip(row) {
                *hj += wij * o;
            }
        }
        for hj in h[..s.n_hidden].iter_mut() {
            *hj = hj.tanh();
        }
        h[s.n_hidden] = 1.0;
        let w2 = &w[s.w2_offset()..];
        action.fill(0.0);
        for (j, &hj) in h.iter().enumerate() {
            let row = &w2[j * s.n_out..(j + 1) * s.n_out];
            for (a, &wjo) in action.iter_mut().zip(row) {
                *a += wjo * hj;
            }
        }
        for a in action.iter_mut() {
            *a = a.tanh();
        }
        Ok(())
    }

    pub fn forward(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut action = vec![0.0; self.spec.n_out];
        self.forward_into(observation, &mut action)?;
        Ok(action)
    }
}

/// Convenience wrapper around [`Controller::forward`].
pub fn forward(spec: &ControllerSpec, genome: &Genome, observation: &[f64]) -> Result<Vec<f64>> {
    Controller::new(*spec, genome.clone())?.forward(observation)
}
