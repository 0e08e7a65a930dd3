//! CNN checkpoint serialization (binary, magic `CNN1`) and the training-log
//! CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::model::CnnModel;
use super::train::EpochLog;
use super::{CnnConfig, Head};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CNN1";
const VERSION: u32 = 1;

fn write_array2(w: &mut impl Write, a: &Array2<f64>) -> Result<()> {
    w.write_u32::<LittleEndian>(a.nrows() as u32)?;
    w.write_u32::<LittleEndian>(a.ncols() as u32)?;
    for v in a.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_array2(r: &mut impl Read) -> Result<Array2<f64>> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(r.read_f64::<LittleEndian>()?);
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

fn write_array1(w: &mut impl Write, a: &Array1<f64>) -> Result<()> {
    w.write_u32::<LittleEndian>(a.len() as u32)?;
    for v in a.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_array1(r: &mut impl Read) -> Result<Array1<f64>> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        values.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(Array1::from_vec(values))
}

pub fn save_checkpoint(path: &Path, model: &CnnModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let c = &model.config;
    w.write_u32::<LittleEndian>(c.embed_dim as u32)?;
    w.write_u32::<LittleEndian>(c.conv_window as u32)?;
    w.write_u32::<LittleEndian>(c.conv_units as u32)?;
    w.write_u32::<LittleEndian>(c.hidden_units as u32)?;
    w.write_f64::<LittleEndian>(c.dropout)?;
    w.write_u32::<LittleEndian>(c.batch_size as u32)?;
    w.write_u32::<LittleEndian>(c.max_epochs as u32)?;
    w.write_u8(match c.head {
        Head::Softmax => 0,
        Head::Sigmoid => 1,
    })?;
    w.write_u32::<LittleEndian>(c.num_classes as u32)?;
    w.write_f64::<LittleEndian>(c.rho)?;
    w.write_f64::<LittleEndian>(c.epsilon)?;
    w.write_u64::<LittleEndian>(c.rng_seed)?;
    w.write_u32::<LittleEndian>(model.vocab_size as u32)?;
    write_array2(&mut w, &model.embedding)?;
    write_array2(&mut w, &model.conv_w)?;
    write_array1(&mut w, &model.conv_b)?;
    write_array2(&mut w, &model.hidden_w)?;
    write_array1(&mut w, &model.hidden_b)?;
    write_array2(&mut w, &model.out_w)?;
    write_array1(&mut w, &model.out_b)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CnnModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad checkpoint magic {magic:?}, expected CNN1"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = CnnConfig {
        embed_dim: r.read_u32::<LittleEndian>()? as usize,
        conv_window: r.read_u32::<LittleEndian>()? as usize,
        conv_units: r.read_u32::<LittleEndian>()? as usize,
        hidden_units: r.read_u32::<LittleEndian>()? as usize,
        dropout: r.read_f64::<LittleEndian>()?,
        batch_size: r.read_u32::<LittleEndian>()? as usize,
        max_epochs: r.read_u32::<LittleEndian>()? as usize,
        head: match r.read_u8()? {
            0 => Head::Softmax,
            1 => Head::Sigmoid,
            other => {
                return Err(Error::MalformedHeader(format!("unknown head tag {other}")))
            }
        },
        num_classes: r.read_u32::<LittleEndian>()? as usize,
        rho: r.read_f64::<LittleEndian>()?,
        epsilon: r.read_f64::<LittleEndian>()?,
        rng_seed: r.read_u64::<LittleEndian>()?,
    };
    config.validate()?;
    let vocab_size = r.read_u32::<LittleEndian>()? as usize;
    let model = CnnModel {
        embedding: read_array2(&mut r)?,
        conv_w: read_array2(&mut r)?,
        conv_b: read_array1(&mut r)?,
        hidden_w: read_array2(&mut r)?,
        hidden_b: read_array1(&mut r)?,
        out_w: read_array2(&mut r)?,
        out_b: read_array1(&mut r)?,
        config,
        vocab_size,
    };
    if model.embedding.nrows() != vocab_size + 1 {
        return Err(Error::ShapeMismatch(format!(
            "embedding rows {} do not match vocab {vocab_size}+1",
            model.embedding.nrows()
        )));
    }
    Ok(model)
}

/// Training log as CSV: epoch, train loss, validation metric (empty when not
/// tracked).
pub fn save_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,train_loss,validation_metric")?;
    for entry in log {
        match entry.val_metric {
            Some(v) => writeln!(w, "{},{},{}", entry.epoch, entry.train_loss, v)?,
            None => writeln!(w, "{},{},", entry.epoch, entry.train_loss)?,
        }
    }
    w.flush()?;
    Ok(())
}
