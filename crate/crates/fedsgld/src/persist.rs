//! On-disk artifacts: the posterior-sample binary format and the CSV
//! exports for curves and reliability bins.
//!
//! Posterior files carry a self-describing header (magic, version, shape,
//! day, strategy, seed) followed by row-major little-endian f64s, so a
//! later process can chain priors from them exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::federation::Strategy;
use crate::prior::PosteriorSamples;
use crate::report::ExperimentReport;

const MAGIC: &[u8; 8] = b"FSGLDPS\0";
const VERSION: u32 = 1;

pub fn posterior_file_name(strategy: Strategy, day: usize) -> String {
    format!("posterior_{}_day{}.bin", strategy.tag(), day)
}

pub fn save_posterior(path: &Path, samples: &PosteriorSamples, strategy: Strategy) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(samples.param_count() as u64).to_le_bytes())?;
    w.write_all(&(samples.retained() as u64).to_le_bytes())?;
    w.write_all(&(samples.day as u64).to_le_bytes())?;
    w.write_all(&(samples.total_iters as u64).to_le_bytes())?;
    w.write_all(&(samples.burn_in as u64).to_le_bytes())?;
    w.write_all(&samples.seed.to_le_bytes())?;
    let tag = strategy.tag().as_bytes();
    w.write_all(&(tag.len() as u32).to_le_bytes())?;
    w.write_all(tag)?;
    for &v in samples.samples.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_posterior(path: &Path) -> Result<(PosteriorSamples, Strategy)> {
    let corrupt = |msg: &str| Error::CorruptArtifact {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let n_params = read_u64(&mut r)? as usize;
    let retained = read_u64(&mut r)? as usize;
    let day = read_u64(&mut r)? as usize;
    let total_iters = read_u64(&mut r)? as usize;
    let burn_in = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    if total_iters.saturating_sub(burn_in) != retained {
        return Err(corrupt("retained row count disagrees with T - T_b"));
    }

    let mut lenbuf = [0u8; 4];
    r.read_exact(&mut lenbuf)?;
    let tag_len = u32::from_le_bytes(lenbuf) as usize;
    if tag_len > 64 {
        return Err(corrupt("implausible strategy tag length"));
    }
    let mut tag = vec![0u8; tag_len];
    r.read_exact(&mut tag)?;
    let strategy = Strategy::parse(
        std::str::from_utf8(&tag).map_err(|_| corrupt("strategy tag is not utf-8"))?,
    )
    .map_err(|_| corrupt("unknown strategy tag"))?;

    let mut data = vec![0.0f64; n_params * retained];
    let mut f64buf = [0u8; 8];
    for slot in &mut data {
        r.read_exact(&mut f64buf)
            .map_err(|_| corrupt("truncated sample data"))?;
        *slot = f64::from_le_bytes(f64buf);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(corrupt("trailing bytes after sample data"));
    }
    let samples = PosteriorSamples::new(
        Array2::from_shape_vec((retained, n_params), data)
            .map_err(|_| corrupt("shape mismatch"))?,
        day,
        total_iters,
        burn_in,
        seed,
    )?;
    Ok((samples, strategy))
}

/// `day,strategy,iteration,train_loss,val_accuracy`, one row per round.
pub fn write_curves_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut out = String::from("day,strategy,iteration,train_loss,val_accuracy\n");
    for p in &report.curves {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.day,
            p.strategy.tag(),
            p.iteration,
            p.train_loss,
            p.val_accuracy
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-bin reliability export, enough to redraw confidence histograms and
/// gap bars.
pub fn write_reliability_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut out = String::from("strategy,day,bin,lower,upper,count,accuracy,confidence,gap\n");
    for cell in &report.cells {
        for (j, b) in cell.bins.bins.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                cell.strategy.tag(),
                cell.day,
                j + 1,
                b.lower,
                b.upper,
                b.count,
                b.accuracy,
                b.confidence,
                b.gap()
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
