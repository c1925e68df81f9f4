use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, Error, Result};

const DATA_MARKER: &str = "DATA";
const DTYPE: &str = "f32";

/// Ordered named tensors: trainable parameters plus normalization running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T: Scalar = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ModelWeights<T> {
    fn default() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }
}

/// Running statistics are updated from batches, not by the optimizer.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

impl<T: Scalar> ModelWeights<T> {
    /// Inserts or replaces a tensor, keeping first-insertion order.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    /// Looks up a tensor that the architecture requires.
    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| invalid!("weights are missing tensor {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

impl ModelWeights<f32> {
    /// Text header (`name f32 d0 d1 ...` per tensor, then `DATA`), then little-endian f32 payload
    /// in header order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(out, "{name} {DTYPE} {}", dims.join(" ")).expect("write to vec");
        }
        writeln!(out, "{DATA_MARKER}").expect("write to vec");
        for t in self.tensors.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::MalformedHeader {
            path: origin.to_path_buf(),
            reason,
        };
        let mut reader = BufReader::new(reader);
        let mut header = Vec::new();
        loop {
            let mut line = String::new();
            let n = reader.read_line(&mut line).map_err(|e| Error::io(origin, e))?;
            if n == 0 {
                return Err(bad("missing DATA marker".into()));
            }
            let line = line.trim_end_matches('\n');
            if line == DATA_MARKER {
                break;
            }
            let mut toks = line.split(' ');
            let name = toks.next().filter(|s| !s.is_empty()).ok_or_else(|| bad("empty tensor name".into()))?;
            match toks.next() {
                Some(DTYPE) => {}
                other => return Err(bad(format!("tensor {name:?} has dtype {other:?}, expected f32"))),
            }
            let shape = toks
                .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad extent {t:?} for {name:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if header.iter().any(|(n, _): &(String, Vec<usize>)| n == name) {
                return Err(bad(format!("duplicate tensor {name:?}")));
            }
            header.push((name.to_string(), shape));
        }
        let mut tensors = IndexMap::new();
        for (name, shape) in header {
            let n: usize = shape.iter().product();
            let mut buf = vec![0u8; n * 4];
            reader
                .read_exact(&mut buf)
                .map_err(|_| bad(format!("payload ends inside tensor {name:?}")))?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, Tensor::from_vec(&shape, data)?);
        }
        let mut rest = [0u8; 1];
        if reader.read(&mut rest).map_err(|e| Error::io(origin, e))? != 0 {
            return Err(bad("trailing bytes after payload".into()));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelWeights {
        let mut w = ModelWeights::default();
        w.insert("a.weight", Tensor::from_vec(&[2, 1, 1, 2], vec![1.5, -0.0, f32::MIN_POSITIVE, 3e-40]).unwrap());
        w.insert("a.bias", Tensor::from_vec(&[2], vec![0.25, -7.0]).unwrap());
        w.insert("bn.running_var", Tensor::filled(&[2], 1.0));
        w
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let w = sample();
        let bytes = w.to_bytes();
        let back = ModelWeights::from_reader(&bytes[..], Path::new("mem")).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let bits = |w: &ModelWeights| -> Vec<u32> { w.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&back), bits(&w));
        assert_eq!(back.names().collect::<Vec<_>>(), ["a.weight", "a.bias", "bn.running_var"]);
    }

    #[test]
    fn header_text() {
        let bytes = sample().to_bytes();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.starts_with("a.weight f32 2 1 1 2\na.bias f32 2\nbn.running_var f32 2\nDATA\n"));
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = sample().to_bytes();
        assert!(ModelWeights::from_reader(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelWeights::from_reader(&extra[..], Path::new("m")).is_err());
        assert!(ModelWeights::from_reader(&b"x f64 1\nDATA\n"[..], Path::new("m")).is_err());
    }

    #[test]
    fn parameter_count_skips_buffers() {
        assert_eq!(sample().parameter_count(), 6);
    }
}
