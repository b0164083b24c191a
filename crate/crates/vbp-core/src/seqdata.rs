//! 2-D temporal patterns and the softmax grid codec.
//!
//! Raw patterns are sequences of points in the unit square. The network
//! consumes and produces probability distributions over an `rows x cols`
//! grid instead: a point is encoded as a softmax over negative squared
//! distances to the grid-cell centers, and a distribution is decoded back
//! to a point as the probability-weighted mean of the centers.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::{domain_err, shape_err};

/// Tolerance on per-frame probability mass.
pub const FRAME_SUM_TOL: f64 = 1e-9;

/// A time series of 2-D points in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory2D {
    points: Vec<[f64; 2]>,
}

impl Trajectory2D {
    /// Every coordinate must lie in [0, 1].
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            for (axis, &v) in p.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(domain_err!(
                        "trajectory point {} axis {} is {} (outside [0,1])",
                        i,
                        axis,
                        v
                    ));
                }
            }
        }
        Ok(Trajectory2D { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn step_count(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Maps 2-D points to softmax codes over a grid of cell centers.
///
/// `sharpness` is the inverse width of the squared-distance kernel; larger
/// values concentrate the code on fewer cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCodec {
    rows: usize,
    cols: usize,
    sharpness: f64,
}

impl GridCodec {
    pub fn new(rows: usize, cols: usize, sharpness: f64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(domain_err!("grid must be at least 2x2, got {}x{}", rows, cols));
        }
        if !(sharpness > 0.0) || !sharpness.is_finite() {
            return Err(domain_err!("sharpness must be positive, got {}", sharpness));
        }
        Ok(GridCodec {
            rows,
            cols,
            sharpness,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    /// Softmax dimension M = rows * cols.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Center of cell (row r, col c); cells tile [0,1]^2 with centers on a
    /// uniform lattice from 0 to 1 inclusive.
    pub fn cell_center(&self, r: usize, c: usize) -> [f64; 2] {
        [
            c as f64 / (self.cols - 1) as f64,
            r as f64 / (self.rows - 1) as f64,
        ]
    }

    /// Half the spacing between adjacent cell centers (the worst axis).
    pub fn half_pitch(&self) -> f64 {
        let px = 1.0 / (self.cols - 1) as f64;
        let py = 1.0 / (self.rows - 1) as f64;
        0.5 * if px > py { px } else { py }
    }
}

impl Default for GridCodec {
    fn default() -> Self {
        GridCodec {
            rows: 11,
            cols: 11,
            sharpness: 150.0,
        }
    }
}

/// Per-step probability distributions over the codec grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    frames: Vec<Vec<f64>>,
    dim: usize,
}

impl EncodedSequence {
    /// Each frame must be a probability vector of the same length.
    pub fn new(frames: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match frames.first() {
            Some(f) => f.len(),
            None => return Err(domain_err!("encoded sequence must have at least one frame")),
        };
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != dim {
                return Err(shape_err!(
                    "frame {} has length {}, expected {}",
                    t,
                    frame.len(),
                    dim
                ));
            }
            validate_frame(frame, t)?;
        }
        Ok(EncodedSequence { frames, dim })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    pub fn step_count(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn validate_frame(frame: &[f64], t: usize) -> Result<()> {
    let mut sum = 0.0;
    for &v in frame {
        if v < -FRAME_SUM_TOL || !v.is_finite() {
            return Err(domain_err!("frame {} has negative entry {}", t, v));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(domain_err!("frame {} sums to {}, expected 1", t, sum));
    }
    Ok(())
}

/// Provenance carried with a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub provenance: String,
}

/// Index-aligned raw and encoded views of a set of training sequences.
///
/// Only raw coordinates are ever stored on disk; encoded frames are
/// recomputed from the codec, so the two views cannot drift apart.
#[derive(Debug, Clone)]
pub struct Dataset {
    raw: Vec<Trajectory2D>,
    sequences: Vec<EncodedSequence>,
    codec: GridCodec,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn from_trajectories(
        raw: Vec<Trajectory2D>,
        codec: GridCodec,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(domain_err!("dataset must contain at least one sequence"));
        }
        let sequences = raw
            .iter()
            .map(|t| encode_trajectory(t, &codec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            raw,
            sequences,
            codec,
            meta,
        })
    }

    pub fn raw(&self) -> &[Trajectory2D] {
        &self.raw
    }

    pub fn sequences(&self) -> &[EncodedSequence] {
        &self.sequences
    }

    pub fn codec(&self) -> &GridCodec {
        &self.codec
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Encode one point as a softmax over negative squared distances to the
/// grid-cell centers, scaled by the codec sharpness.
pub fn encode_point(p: [f64; 2], codec: &GridCodec) -> Result<Vec<f64>> {
    for (axis, &v) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(domain_err!("point axis {} is {} (outside [0,1])", axis, v));
        }
    }
    let m = codec.dim();
    let mut logits = Vec::with_capacity(m);
    for r in 0..codec.rows() {
        for c in 0..codec.cols() {
            let center = codec.cell_center(r, c);
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            logits.push(-codec.sharpness() * (dx * dx + dy * dy));
        }
    }
    Ok(softmax(&logits))
}

/// Numerically stable softmax (shift by the max logit).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| libm::exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Decode a distribution to the probability-weighted mean of cell centers.
pub fn decode_frame(frame: &[f64], codec: &GridCodec) -> Result<[f64; 2]> {
    if frame.len() != codec.dim() {
        return Err(shape_err!(
            "frame length {} does not match codec dim {}",
            frame.len(),
            codec.dim()
        ));
    }
    validate_frame(frame, 0).map_err(|_| {
        CoreError::Domain(alloc::format!(
            "frame is not a probability vector (sum {})",
            frame.iter().sum::<f64>()
        ))
    })?;
    let mut x = 0.0;
    let mut y = 0.0;
    let mut idx = 0;
    for r in 0..codec.rows() {
        for c in 0..codec.cols() {
            let center = codec.cell_center(r, c);
            x += frame[idx] * center[0];
            y += frame[idx] * center[1];
            idx += 1;
        }
    }
    Ok([x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)])
}

/// Per-step application of [`encode_point`].
pub fn encode_trajectory(traj: &Trajectory2D, codec: &GridCodec) -> Result<EncodedSequence> {
    if traj.is_empty() {
        return Err(domain_err!("cannot encode an empty trajectory"));
    }
    let frames = traj
        .points()
        .iter()
        .map(|&p| encode_point(p, codec))
        .collect::<Result<Vec<_>>>()?;
    EncodedSequence::new(frames)
}

/// Per-step application of [`decode_frame`].
pub fn decode_sequence(seq: &EncodedSequence, codec: &GridCodec) -> Result<Trajectory2D> {
    let points = seq
        .frames()
        .iter()
        .map(|f| decode_frame(f, codec))
        .collect::<Result<Vec<_>>>()?;
    Trajectory2D::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn encode_center_is_symmetric_with_central_argmax() {
        let codec = GridCodec::default();
        let frame = encode_point([0.5, 0.5], &codec).unwrap();
        let argmax = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // center cell: row 5, col 5 on an 11x11 grid
        assert_eq!(argmax, 5 * 11 + 5);
        // symmetric about the center: reversing the frame leaves it unchanged
        for (a, b) in frame.iter().zip(frame.iter().rev()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_at_corner_center_has_corner_argmax() {
        let codec = GridCodec::default();
        let frame = encode_point([0.0, 0.0], &codec).unwrap();
        let argmax = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let codec = GridCodec::default();
        assert!(encode_point([1.2, 0.5], &codec).is_err());
        assert!(encode_point([0.5, -0.1], &codec).is_err());
    }

    #[test]
    fn decode_uniform_is_center() {
        let codec = GridCodec::default();
        let m = codec.dim();
        let frame = alloc::vec![1.0 / m as f64; m];
        let p = decode_frame(&frame, &codec).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decode_one_hot_is_cell_center() {
        let codec = GridCodec::default();
        let mut frame = alloc::vec![0.0; codec.dim()];
        frame[0] = 1.0; // cell (0,0)
        let p = decode_frame(&frame, &codec).unwrap();
        assert_eq!(p, [0.0, 0.0]);
    }

    #[test]
    fn decode_rejects_unnormalized() {
        let codec = GridCodec::default();
        let frame = alloc::vec![0.5; codec.dim()];
        assert!(decode_frame(&frame, &codec).is_err());
    }

    #[test]
    fn round_trip_within_half_pitch() {
        // independent oracle: quantization error of expectation decoding is
        // bounded by half a cell pitch for interior points
        let codec = GridCodec::default();
        let mut rng = Stream::new(99);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = [rng.next_range(0.05, 0.95), rng.next_range(0.05, 0.95)];
            let frame = encode_point(p, &codec).unwrap();
            let q = decode_frame(&frame, &codec).unwrap();
            worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
        }
        let bound = 1.0 / (2.0 * (codec.rows() - 1) as f64);
        assert!(worst <= bound, "worst {} > bound {}", worst, bound);
    }

    #[test]
    fn encode_trajectory_rejects_empty() {
        let codec = GridCodec::default();
        let traj = Trajectory2D::new(alloc::vec![]).unwrap();
        assert!(encode_trajectory(&traj, &codec).is_err());
    }

    #[test]
    fn encode_trajectory_preserves_length_and_dim() {
        let codec = GridCodec::default();
        let points: Vec<[f64; 2]> = (0..400)
            .map(|i| {
                let u = i as f64 / 400.0;
                [0.5 + 0.4 * libm::sin(6.28 * u), 0.5 + 0.4 * libm::cos(6.28 * u)]
            })
            .collect();
        let traj = Trajectory2D::new(points).unwrap();
        let seq = encode_trajectory(&traj, &codec).unwrap();
        assert_eq!(seq.step_count(), 400);
        assert_eq!(seq.dim(), 121);
    }

    #[test]
    fn codec_is_deterministic() {
        let codec = GridCodec::default();
        let a = encode_point([0.3, 0.7], &codec).unwrap();
        let b = encode_point([0.3, 0.7], &codec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_rejects_out_of_unit_square() {
        assert!(Trajectory2D::new(alloc::vec![[0.5, 1.5]]).is_err());
    }
}
