use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Clone> NamedTensor<T> {
    pub fn from_array(name: &str, a: &ArrayD<T>) -> Self {
        Self {
            name: name.to_string(),
            shape: a.shape().to_vec(),
            data: a.iter().cloned().collect(),
        }
    }
}

/// Named parameter tensors in module visit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDict<T> {
    pub tensors: Vec<NamedTensor<T>>,
}

pub fn write_state<S: Serialize, W: Write>(writer: W, value: &S) -> Result<()> {
    bincode::serialize_into(writer, value).map_err(|e| Error::Checkpoint {
        path: Default::default(),
        message: e.to_string(),
    })
}

pub fn read_state<S: DeserializeOwned, R: Read>(reader: R) -> Result<S> {
    bincode::deserialize_from(reader).map_err(|e| Error::Checkpoint {
        path: Default::default(),
        message: e.to_string(),
    })
}

pub fn save_state<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_state(&mut w, value).map_err(|e| with_path(e, path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_state<S: DeserializeOwned>(path: &Path) -> Result<S> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_state(BufReader::new(f)).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Checkpoint { message, .. } => Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let a = ArrayD::from_shape_vec(vec![2, 3], vec![1.0f32, 2., 3., 4., 5., 6.]).unwrap();
        let sd = StateDict { tensors: vec![NamedTensor::from_array("w", &a)] };
        save_state(&p, &sd).unwrap();
        let back: StateDict<f32> = load_state(&p).unwrap();
        assert_eq!(back, sd);
    }

    #[test]
    fn truncated_file_is_a_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        std::fs::write(&p, [1u8, 2]).unwrap();
        let r: Result<StateDict<f32>> = load_state(&p);
        assert!(matches!(r, Err(Error::Checkpoint { .. })));
    }
}

/// Write to a sibling temp file, then rename over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
