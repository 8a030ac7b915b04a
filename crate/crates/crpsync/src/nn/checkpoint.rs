//! Model checkpoints on disk.
//!
//! Layout (integers little-endian): `"CRPM"` | version `u8` | six
//! architecture fields `u32` (conv1 filters, conv1 kernel, pool1, conv2
//! filters, conv2 kernel, pool2) | input side `u32` | the six parameter
//! blocks as raw `f64` (conv1 weights, conv1 bias, conv2 weights, conv2
//! bias, dense weights, dense bias). Block lengths follow from the
//! architecture, so none are stored. Writing the same model twice produces
//! identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{Architecture, Model};
use super::NnError;

const MAGIC: &[u8; 4] = b"CRPM";
const VERSION: u8 = 1;

pub fn write_checkpoint(path: &Path, model: &Model) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let a = model.arch;
    for field in [
        a.conv1_filters,
        a.conv1_kernel,
        a.pool1,
        a.conv2_filters,
        a.conv2_kernel,
        a.pool2,
        model.input_side,
    ] {
        w.write_all(&(field as u32).to_le_bytes())?;
    }
    for block in [
        model.conv1_w.data(),
        &model.conv1_b,
        model.conv2_w.data(),
        &model.conv2_b,
        model.dense_w.data(),
        &model.dense_b,
    ] {
        for v in block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Model, NnError> {
    let bad = |reason: String| NnError::BadCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(bad("not a checkpoint".into()));
    }
    if head[4] != VERSION {
        return Err(bad(format!("unsupported version {}", head[4])));
    }
    let mut fields = [0usize; 7];
    for f in &mut fields {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *f = u32::from_le_bytes(b) as usize;
    }
    if fields[..6].iter().any(|f| *f == 0) {
        return Err(bad("zero architecture field".into()));
    }
    let arch = Architecture {
        conv1_filters: fields[0],
        conv1_kernel: fields[1],
        pool1: fields[2],
        conv2_filters: fields[3],
        conv2_kernel: fields[4],
        pool2: fields[5],
    };
    // Building a throwaway model re-derives every block shape and rejects
    // an input side the architecture cannot process.
    let mut model = Model::new(fields[6], arch, 0).map_err(|e| bad(e.to_string()))?;
    for slice in model.param_slices_mut() {
        for v in slice.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after parameters".into()));
    }
    if !model
        .param_slices_mut()
        .iter()
        .all(|s| s.iter().all(|v| v.is_finite()))
    {
        return Err(bad("non-finite parameter".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_every_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.crpm");
        let model = Model::new(10, Architecture::default(), 123).unwrap();
        write_checkpoint(&path, &model).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn writes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(12, Architecture::default(), 5).unwrap();
        let p1 = dir.path().join("a.crpm");
        let p2 = dir.path().join("b.crpm");
        write_checkpoint(&p1, &model).unwrap();
        write_checkpoint(&p2, &model).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bogus = dir.path().join("bogus.crpm");
        std::fs::write(&bogus, b"WHAT\x01aaaaaaaaaaaaaaaaaaaaaaaaaaaa").unwrap();
        assert!(matches!(
            read_checkpoint(&bogus),
            Err(NnError::BadCheckpoint { .. })
        ));

        let model = Model::new(10, Architecture::default(), 1).unwrap();
        let path = dir.path().join("model.crpm");
        write_checkpoint(&path, &model).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let truncated = dir.path().join("short.crpm");
        std::fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        assert!(read_checkpoint(&truncated).is_err());
        let padded = dir.path().join("long.crpm");
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&padded, &extra).unwrap();
        assert!(matches!(
            read_checkpoint(&padded),
            Err(NnError::BadCheckpoint { .. })
        ));
    }
}
