//! On-disk formats: datasets, parameter checkpoints, label sequences, and
//! pFSM definitions.
//!
//! Datasets store only raw 2-D coordinates (shortest round-trip decimal, so
//! reloading returns bit-identical values); encoded frames are always
//! recomputed from the codec. Checkpoints store every f64 as its raw bit
//! pattern in hex, so a reloaded checkpoint resumes bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use vbp_core::mat::Mat;
use vbp_core::net::{NetworkSpec, Parameters};
use vbp_core::pipeline::{Label, LabelSequence, Pfsm, Transition};
use vbp_core::seqdata::{Dataset, DatasetMeta, GridCodec, Trajectory2D};

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

/// Write a dataset: header line, then per sequence a `SEQ <id> <len>` line
/// followed by `<len>` lines of `x y`.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let codec = dataset.codec();
    let mut out = String::new();
    writeln!(
        out,
        "VBPDATA v1 rows={} cols={} sharpness={} seed={}",
        codec.rows(),
        codec.cols(),
        codec.sharpness(),
        dataset.meta().seed
    )?;
    for (id, traj) in dataset.raw().iter().enumerate() {
        writeln!(out, "SEQ {} {}", id, traj.step_count())?;
        for p in traj.points() {
            writeln!(out, "{} {}", p[0], p[1])?;
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Load a dataset, recomputing encoded frames from the stored codec.
/// Errors carry the offending line number and record.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| anyhow!("empty dataset file"))?;
    let mut rows = None;
    let mut cols = None;
    let mut sharpness = None;
    let mut seed = None;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("VBPDATA") || fields.next() != Some("v1") {
        bail!("line 1: expected header `VBPDATA v1 ...`");
    }
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| anyhow!("line 1: malformed header field `{}`", field))?;
        match key {
            "rows" => rows = Some(value.parse::<usize>().context("header rows")?),
            "cols" => cols = Some(value.parse::<usize>().context("header cols")?),
            "sharpness" => sharpness = Some(value.parse::<f64>().context("header sharpness")?),
            "seed" => seed = Some(value.parse::<u64>().context("header seed")?),
            other => bail!("line 1: unknown header key `{}`", other),
        }
    }
    let codec = GridCodec::new(
        rows.ok_or_else(|| anyhow!("header missing rows"))?,
        cols.ok_or_else(|| anyhow!("header missing cols"))?,
        sharpness.ok_or_else(|| anyhow!("header missing sharpness"))?,
    )
    .map_err(|e| anyhow!("header codec: {}", e))?;
    let seed = seed.ok_or_else(|| anyhow!("header missing seed"))?;

    let mut raw = Vec::new();
    let mut record = 0usize;
    loop {
        let Some((line_no, line)) = lines.next() else {
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("SEQ") {
            bail!("line {}: expected `SEQ <id> <len>`", line_no + 1);
        }
        let id: usize = parts
            .next()
            .ok_or_else(|| anyhow!("line {}: SEQ missing id", line_no + 1))?
            .parse()
            .with_context(|| format!("line {}: SEQ id", line_no + 1))?;
        if id != record {
            bail!(
                "line {}: sequence record {} out of order (expected {})",
                line_no + 1,
                id,
                record
            );
        }
        let len: usize = parts
            .next()
            .ok_or_else(|| anyhow!("line {}: SEQ missing length", line_no + 1))?
            .parse()
            .with_context(|| format!("line {}: SEQ length", line_no + 1))?;
        let mut points = Vec::with_capacity(len);
        for step in 0..len {
            let (pline_no, pline) = lines.next().ok_or_else(|| {
                anyhow!(
                    "record {} truncated: expected {} points, found {}",
                    record,
                    len,
                    step
                )
            })?;
            let mut coords = pline.split_whitespace();
            let x: f64 = coords
                .next()
                .ok_or_else(|| anyhow!("line {}: record {} missing x", pline_no + 1, record))?
                .parse()
                .with_context(|| format!("line {}: record {} x", pline_no + 1, record))?;
            let y: f64 = coords
                .next()
                .ok_or_else(|| anyhow!("line {}: record {} missing y", pline_no + 1, record))?
                .parse()
                .with_context(|| format!("line {}: record {} y", pline_no + 1, record))?;
            points.push([x, y]);
        }
        raw.push(
            Trajectory2D::new(points)
                .map_err(|e| anyhow!("record {}: {}", record, e))?,
        );
        record += 1;
    }
    if raw.is_empty() {
        bail!("dataset contains no sequences");
    }
    Dataset::from_trajectories(
        raw,
        codec,
        DatasetMeta {
            seed,
            provenance: format!("loaded from {}", path.display()),
        },
    )
    .map_err(|e| anyhow!("rebuilding dataset: {}", e))
}

// ---------------------------------------------------------------------------
// checkpoint files
// ---------------------------------------------------------------------------

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_hex(s: &str, line: usize) -> Result<f64> {
    let bits = u64::from_str_radix(s, 16)
        .with_context(|| format!("line {}: bad hex value `{}`", line, s))?;
    Ok(f64::from_bits(bits))
}

/// Everything needed to resume or reuse a trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Parameters,
    pub seed: u64,
    pub meta_prior_w: f64,
    pub alpha: f64,
    pub epochs_trained: usize,
    /// Step length of the training sequences (generation default).
    pub train_len: usize,
    pub provenance: String,
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "VBPCKPT v1")?;
    writeln!(out, "seed {}", ck.seed)?;
    writeln!(out, "meta_prior_w {}", hex(ck.meta_prior_w))?;
    writeln!(out, "alpha {}", hex(ck.alpha))?;
    writeln!(out, "epochs_trained {}", ck.epochs_trained)?;
    writeln!(out, "train_len {}", ck.train_len)?;
    writeln!(out, "provenance {}", ck.provenance.replace('\n', " "))?;
    let layers: Vec<String> = ck.spec.layer_sizes().iter().map(|n| n.to_string()).collect();
    let taus: Vec<String> = ck.spec.time_constants().iter().map(|&t| hex(t)).collect();
    writeln!(
        out,
        "spec layers={} taus={} input={} output={}",
        layers.join(","),
        taus.join(","),
        ck.spec.input_dim(),
        ck.spec.output_dim()
    )?;
    let p = &ck.params;
    let mat_rows = |m: &'_ Mat| -> Vec<Vec<f64>> { (0..m.rows()).map(|r| m.row(r).to_vec()).collect() };
    let blocks: Vec<(&str, usize, Vec<Vec<f64>>)> = vec![
        ("w_mu_c", p.w_mu_c.cols(), mat_rows(&p.w_mu_c)),
        ("w_mu_x", p.w_mu_x.cols(), mat_rows(&p.w_mu_x)),
        ("w_sigma_c", p.w_sigma_c.cols(), mat_rows(&p.w_sigma_c)),
        ("w_x_c", p.w_x_c.cols(), mat_rows(&p.w_x_c)),
        ("b_mu", p.b_mu.len(), vec![p.b_mu.clone()]),
        ("b_sigma", p.b_sigma.len(), vec![p.b_sigma.clone()]),
        ("b_x", p.b_x.len(), vec![p.b_x.clone()]),
        (
            "init_latents",
            p.init_latents.first().map(|z| z.len()).unwrap_or(0),
            p.init_latents.clone(),
        ),
    ];
    for (name, cols, data) in blocks {
        writeln!(out, "block {} {} {}", name, data.len(), cols)?;
        for row in data {
            let cells: Vec<String> = row.iter().map(|&v| hex(v)).collect();
            writeln!(out, "{}", cells.join(" "))?;
        }
    }
    writeln!(out, "end")?;
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let mut lines = text.lines().enumerate().peekable();
    let mut expect = |what: &str| -> Result<(usize, String)> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| anyhow!("checkpoint truncated, expected {}", what))?;
        Ok((n + 1, line.to_string()))
    };

    let (_, magic) = expect("header")?;
    if magic.trim() != "VBPCKPT v1" {
        bail!("line 1: expected `VBPCKPT v1`");
    }
    let mut field = |name: &str| -> Result<String> {
        let (n, line) = expect(name)?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| anyhow!("line {}: expected `{} <value>`", n, name))?;
        if key != name {
            bail!("line {}: expected field `{}`, found `{}`", n, name, key);
        }
        Ok(value.to_string())
    };
    let seed: u64 = field("seed")?.parse().context("seed")?;
    let meta_prior_w = parse_hex(&field("meta_prior_w")?, 3)?;
    let alpha = parse_hex(&field("alpha")?, 4)?;
    let epochs_trained: usize = field("epochs_trained")?.parse().context("epochs_trained")?;
    let train_len: usize = field("train_len")?.parse().context("train_len")?;
    let provenance = field("provenance")?;

    let spec_line = field("spec")?;
    let mut layers = None;
    let mut taus = None;
    let mut input = None;
    let mut output = None;
    for part in spec_line.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("malformed spec field `{}`", part))?;
        match key {
            "layers" => {
                layers = Some(
                    value
                        .split(',')
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .context("spec layers")?,
                )
            }
            "taus" => {
                taus = Some(
                    value
                        .split(',')
                        .map(|s| parse_hex(s, 8))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "input" => input = Some(value.parse::<usize>().context("spec input")?),
            "output" => output = Some(value.parse::<usize>().context("spec output")?),
            other => bail!("unknown spec field `{}`", other),
        }
    }
    let spec = NetworkSpec::new(
        layers.ok_or_else(|| anyhow!("spec missing layers"))?,
        taus.ok_or_else(|| anyhow!("spec missing taus"))?,
        input.ok_or_else(|| anyhow!("spec missing input"))?,
        output.ok_or_else(|| anyhow!("spec missing output"))?,
    )
    .map_err(|e| anyhow!("checkpoint spec: {}", e))?;

    let mut blocks: Vec<(String, usize, usize, Vec<Vec<f64>>)> = Vec::new();
    loop {
        let (n, line) = lines
            .next()
            .map(|(n, l)| (n + 1, l.to_string()))
            .ok_or_else(|| anyhow!("checkpoint truncated before `end`"))?;
        if line.trim() == "end" {
            break;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("block") {
            bail!("line {}: expected `block <name> <rows> <cols>`", n);
        }
        let name = parts
            .next()
            .ok_or_else(|| anyhow!("line {}: block missing name", n))?
            .to_string();
        let rows: usize = parts
            .next()
            .ok_or_else(|| anyhow!("line {}: block missing rows", n))?
            .parse()
            .with_context(|| format!("line {}: block rows", n))?;
        let cols: usize = parts
            .next()
            .ok_or_else(|| anyhow!("line {}: block missing cols", n))?
            .parse()
            .with_context(|| format!("line {}: block cols", n))?;
        let mut data = Vec::with_capacity(rows);
        for r in 0..rows {
            let (rn, row_line) = lines
                .next()
                .map(|(n, l)| (n + 1, l.to_string()))
                .ok_or_else(|| anyhow!("block {} truncated at row {}", name, r))?;
            let row = row_line
                .split_whitespace()
                .map(|s| parse_hex(s, rn))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != cols {
                bail!(
                    "line {}: block {} row {} has {} values, expected {}",
                    rn,
                    name,
                    r,
                    row.len(),
                    cols
                );
            }
            data.push(row);
        }
        blocks.push((name, rows, cols, data));
    }

    let take = |name: &str| -> Result<(usize, usize, Vec<Vec<f64>>)> {
        blocks
            .iter()
            .find(|(n, ..)| n == name)
            .map(|(_, r, c, d)| (*r, *c, d.clone()))
            .ok_or_else(|| anyhow!("checkpoint missing block `{}`", name))
    };
    let mat = |name: &str| -> Result<Mat> {
        let (rows, cols, data) = take(name)?;
        let mut m = Mat::zeros(rows, cols);
        for (r, row) in data.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        Ok(m)
    };
    let vec1 = |name: &str| -> Result<Vec<f64>> {
        let (rows, _, data) = take(name)?;
        if rows != 1 {
            bail!("block {} should have one row", name);
        }
        Ok(data.into_iter().next().unwrap())
    };

    let params = Parameters {
        w_mu_c: mat("w_mu_c")?,
        w_mu_x: mat("w_mu_x")?,
        w_sigma_c: mat("w_sigma_c")?,
        w_x_c: mat("w_x_c")?,
        b_mu: vec1("b_mu")?,
        b_sigma: vec1("b_sigma")?,
        b_x: vec1("b_x")?,
        init_latents: take("init_latents")?.2,
    };
    params
        .validate(&spec)
        .map_err(|e| anyhow!("checkpoint parameters: {}", e))?;
    Ok(Checkpoint {
        spec,
        params,
        seed,
        meta_prior_w,
        alpha,
        epochs_trained,
        train_len,
        provenance,
    })
}

// ---------------------------------------------------------------------------
// label sequence files
// ---------------------------------------------------------------------------

/// One line per step label, then a trailer line with the compressed string.
pub fn save_labels(labels: &LabelSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    for l in labels.per_step() {
        writeln!(out, "{}", l.as_char())?;
    }
    writeln!(out, "{}", labels.compressed_string())?;
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<LabelSequence> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels {}", path.display()))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        bail!("label file is empty");
    }
    let (steps, trailer) = lines.split_at(lines.len() - 1);
    let per_step = steps
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let mut chars = line.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                bail!("line {}: expected a single label character", i + 1);
            };
            Label::from_char(c).ok_or_else(|| anyhow!("line {}: unknown label `{}`", i + 1, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let compressed = trailer[0]
        .chars()
        .map(|c| Label::from_char(c).ok_or_else(|| anyhow!("trailer: unknown label `{}`", c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSequence::new(per_step, compressed))
}

// ---------------------------------------------------------------------------
// pFSM definition files
// ---------------------------------------------------------------------------

/// Header `PFSM v1 start=<s>`, then `state label next probability` rows.
pub fn save_pfsm(fsm: &Pfsm, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "PFSM v1 start={}", fsm.start())?;
    for (state, edges) in fsm.states().iter().enumerate() {
        for t in edges {
            writeln!(out, "{} {} {} {}", state, t.label.as_char(), t.next, t.probability)?;
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_pfsm(path: &Path) -> Result<Pfsm> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading pFSM {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| anyhow!("empty pFSM file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("PFSM") || parts.next() != Some("v1") {
        bail!("line 1: expected `PFSM v1 start=<s>`");
    }
    let start: usize = parts
        .next()
        .and_then(|f| f.strip_prefix("start="))
        .ok_or_else(|| anyhow!("line 1: missing start=<s>"))?
        .parse()
        .context("pFSM start")?;
    let mut rows: Vec<(usize, Transition)> = Vec::new();
    let mut max_state = start;
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            bail!("line {}: expected `state label next probability`", n + 1);
        }
        let state: usize = fields[0].parse().with_context(|| format!("line {}", n + 1))?;
        let label = Label::from_char(fields[1].chars().next().unwrap_or('?'))
            .ok_or_else(|| anyhow!("line {}: unknown label `{}`", n + 1, fields[1]))?;
        let next: usize = fields[2].parse().with_context(|| format!("line {}", n + 1))?;
        let probability: f64 = fields[3].parse().with_context(|| format!("line {}", n + 1))?;
        max_state = max_state.max(state).max(next);
        rows.push((
            state,
            Transition {
                label,
                next,
                probability,
            },
        ));
    }
    let mut transitions = vec![Vec::new(); max_state + 1];
    for (state, t) in rows {
        transitions[state].push(t);
    }
    Pfsm::new(transitions, start).map_err(|e| anyhow!("pFSM definition: {}", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vbp_core::net::init_parameters;
    use vbp_core::pipeline::default_pfsm;
    use vbp_core::rng::Stream;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("vbp_fmt_{}_{}", std::process::id(), name));
        p
    }

    #[test]
    fn dataset_round_trip_is_bit_identical() {
        let codec = GridCodec::new(5, 7, 123.456789).unwrap();
        let mut rng = Stream::new(5);
        let raw: Vec<Trajectory2D> = (0..128)
            .map(|_| {
                Trajectory2D::new(
                    (0..10)
                        .map(|_| [rng.next_f64(), rng.next_f64()])
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let dataset = Dataset::from_trajectories(
            raw,
            codec,
            DatasetMeta {
                seed: 777,
                provenance: "round trip".into(),
            },
        )
        .unwrap();
        let path = temp_path("roundtrip.vbpdata");
        save_dataset(&dataset, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.len(), dataset.len());
        assert_eq!(loaded.meta().seed, 777);
        assert_eq!(loaded.codec(), dataset.codec());
        for (a, b) in dataset.raw().iter().zip(loaded.raw()) {
            assert_eq!(a.points(), b.points());
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_dataset_names_the_record() {
        let codec = GridCodec::new(3, 3, 60.0).unwrap();
        let traj = Trajectory2D::new(vec![[0.5, 0.5]; 4]).unwrap();
        let dataset = Dataset::from_trajectories(
            vec![traj],
            codec,
            DatasetMeta {
                seed: 0,
                provenance: String::new(),
            },
        )
        .unwrap();
        let path = temp_path("truncated.vbpdata");
        save_dataset(&dataset, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("record 0"), "error was: {}", err);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let spec = NetworkSpec::new(vec![4, 3], vec![2.0, 8.0], 9, 9).unwrap();
        let params = init_parameters(&spec, 3, 99).unwrap();
        let ck = Checkpoint {
            spec,
            params,
            seed: 42,
            meta_prior_w: 0.01,
            alpha: 1e-3,
            epochs_trained: 123,
            train_len: 400,
            provenance: "unit test".into(),
        };
        let path = temp_path("ck.vbpckpt");
        save_checkpoint(&ck, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ck);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn labels_round_trip() {
        use Label::*;
        let labels = LabelSequence::new(vec![A, A, B, B, B, C], vec![A, B, C]);
        let path = temp_path("labels.txt");
        save_labels(&labels, &path).unwrap();
        let loaded = load_labels(&path).unwrap();
        assert_eq!(loaded, labels);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn pfsm_round_trip() {
        let fsm = default_pfsm();
        let path = temp_path("fsm.txt");
        save_pfsm(&fsm, &path).unwrap();
        let loaded = load_pfsm(&path).unwrap();
        assert_eq!(loaded, fsm);
        std::fs::remove_file(&path).ok();
    }
}
