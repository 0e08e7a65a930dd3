//! Phone-loop model and tokenization serialization.
//!
//! Model files are binary: magic `AUD1`, a u32 format version, the config and
//! dimensionality, then every parameter array as little-endian f64.
//! Tokenizations are JSON lines, one utterance per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model::{PhoneLoopModel, Priors};
use super::{AudConfig, UnitSequence};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AUD1";
const VERSION: u32 = 1;

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(out)
}

pub fn save_model(path: &Path, model: &PhoneLoopModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let c = &model.config;
    w.write_u32::<LittleEndian>(c.truncation as u32)?;
    w.write_u32::<LittleEndian>(c.states_per_unit as u32)?;
    w.write_u32::<LittleEndian>(c.gaussians_per_state as u32)?;
    w.write_f64::<LittleEndian>(c.concentration)?;
    w.write_u32::<LittleEndian>(c.training_iterations as u32)?;
    w.write_u64::<LittleEndian>(c.rng_seed)?;
    w.write_u32::<LittleEndian>(model.dim as u32)?;

    let p = &model.prior;
    write_f64s(&mut w, &p.mean)?;
    w.write_f64::<LittleEndian>(p.kappa)?;
    w.write_f64::<LittleEndian>(p.shape)?;
    write_f64s(&mut w, &p.rate)?;
    w.write_f64::<LittleEndian>(p.dirichlet)?;
    w.write_f64::<LittleEndian>(p.stick_a)?;
    w.write_f64::<LittleEndian>(p.stick_b)?;
    write_f64s(&mut w, &p.var_floor)?;

    write_f64s(&mut w, &model.stick_a)?;
    write_f64s(&mut w, &model.stick_b)?;
    write_f64s(&mut w, &model.trans_stay)?;
    write_f64s(&mut w, &model.trans_adv)?;
    write_f64s(&mut w, &model.weight_alpha)?;
    write_f64s(&mut w, &model.ng_loc)?;
    write_f64s(&mut w, &model.ng_rate)?;
    write_f64s(&mut w, &model.ng_kappa)?;
    write_f64s(&mut w, &model.ng_shape)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PhoneLoopModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad model magic {magic:?}, expected AUD1"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported model version {version}"
        )));
    }
    let config = AudConfig {
        truncation: r.read_u32::<LittleEndian>()? as usize,
        states_per_unit: r.read_u32::<LittleEndian>()? as usize,
        gaussians_per_state: r.read_u32::<LittleEndian>()? as usize,
        concentration: r.read_f64::<LittleEndian>()?,
        training_iterations: r.read_u32::<LittleEndian>()? as usize,
        rng_seed: r.read_u64::<LittleEndian>()?,
    };
    config.validate()?;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    if dim == 0 {
        return Err(Error::MalformedHeader("zero dimensionality".into()));
    }

    let mean = read_f64s(&mut r, dim)?;
    let kappa = r.read_f64::<LittleEndian>()?;
    let shape = r.read_f64::<LittleEndian>()?;
    let rate = read_f64s(&mut r, dim)?;
    let dirichlet = r.read_f64::<LittleEndian>()?;
    let stick_a_prior = r.read_f64::<LittleEndian>()?;
    let stick_b_prior = r.read_f64::<LittleEndian>()?;
    let var_floor = read_f64s(&mut r, dim)?;
    let prior = Priors {
        mean,
        kappa,
        shape,
        rate,
        dirichlet,
        stick_a: stick_a_prior,
        stick_b: stick_b_prior,
        var_floor,
    };

    let t = config.truncation;
    let n_states = config.num_states();
    let n_comps = config.num_components();
    let model = PhoneLoopModel {
        stick_a: read_f64s(&mut r, t)?,
        stick_b: read_f64s(&mut r, t)?,
        trans_stay: read_f64s(&mut r, n_states)?,
        trans_adv: read_f64s(&mut r, n_states)?,
        weight_alpha: read_f64s(&mut r, n_comps)?,
        ng_loc: read_f64s(&mut r, n_comps * dim)?,
        ng_rate: read_f64s(&mut r, n_comps * dim)?,
        ng_kappa: read_f64s(&mut r, n_comps)?,
        ng_shape: read_f64s(&mut r, n_comps)?,
        config,
        dim,
        prior,
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::ShapeMismatch("trailing bytes in model file".into()));
    }
    Ok(model)
}

pub fn save_unit_sequences(path: &Path, sequences: &[UnitSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for seq in sequences {
        serde_json::to_writer(&mut w, seq)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_unit_sequences(path: &Path) -> Result<Vec<UnitSequence>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
