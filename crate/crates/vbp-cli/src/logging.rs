//! Training-log CSV emission and checkpointing hooks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use vbp_core::net::{NetworkSpec, Parameters};
use vbp_core::train::{EpochRecord, TrainHooks};

use crate::formats::{save_checkpoint, Checkpoint};

/// Append-only CSV log with per-epoch wall time, optionally writing an
/// intermediate checkpoint every N epochs.
pub struct CsvLogHooks {
    writer: BufWriter<File>,
    last: Instant,
    checkpoint_every: usize,
    checkpoint_stem: Option<(PathBuf, NetworkSpec, u64, f64, f64, usize)>,
    pub error: Option<anyhow::Error>,
}

impl CsvLogHooks {
    pub fn create(path: &Path) -> Result<Self> {
        let file =
            File::create(path).with_context(|| format!("creating log {}", path.display()))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "epoch,L,L_z,L_x,mean_sigma,seconds")?;
        Ok(CsvLogHooks {
            writer,
            last: Instant::now(),
            checkpoint_every: 0,
            checkpoint_stem: None,
            error: None,
        })
    }

    /// Write `<stem>_epoch<k>.vbpckpt` every `every` epochs.
    pub fn with_checkpoints(
        mut self,
        every: usize,
        stem: PathBuf,
        spec: NetworkSpec,
        seed: u64,
        meta_prior_w: f64,
        alpha: f64,
        train_len: usize,
    ) -> Self {
        self.checkpoint_every = every;
        self.checkpoint_stem = Some((stem, spec, seed, meta_prior_w, alpha, train_len));
        self
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        match self.error.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl TrainHooks for CsvLogHooks {
    fn on_epoch(&mut self, params: &Parameters, record: &EpochRecord) {
        let seconds = self.last.elapsed().as_secs_f64();
        self.last = Instant::now();
        if let Err(e) = writeln!(
            self.writer,
            "{},{},{},{},{},{:.6}",
            record.epoch, record.total, record.l_z, record.l_x, record.mean_sigma, seconds
        ) {
            self.error.get_or_insert(e.into());
        }
        if self.checkpoint_every > 0 && record.epoch % self.checkpoint_every == 0 {
            if let Some((stem, spec, seed, w, alpha, train_len)) = &self.checkpoint_stem {
                let path = stem.with_file_name(format!(
                    "{}_epoch{}.vbpckpt",
                    stem.file_name().and_then(|s| s.to_str()).unwrap_or("ckpt"),
                    record.epoch
                ));
                let ck = Checkpoint {
                    spec: spec.clone(),
                    params: params.clone(),
                    seed: *seed,
                    meta_prior_w: *w,
                    alpha: *alpha,
                    epochs_trained: record.epoch,
                    train_len: *train_len,
                    provenance: format!("intermediate checkpoint at epoch {}", record.epoch),
                };
                if let Err(e) = save_checkpoint(&ck, &path) {
                    self.error.get_or_insert(e);
                }
            }
        }
    }
}

/// Write any table as CSV: a header row plus stringified cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
