//! Binary checkpoint of a [`Trainer`]. Little-endian throughout:
//!
//! ```text
//! magic     8 bytes  "LOCOCKPT"
//! version   u32      1
//! epoch     u64      caller-supplied resume point
//! seed, samples_seen, updates                         u64 ×3
//! rule      u8 kind (0 np, 1 loco, 2 rank), u64 k, f64 eta, f64 sigma,
//!           u8 variant, u8 loss, u8 scope, u8 rate source, u64 batch size
//! projector u64 capacity, u64 clusters, u64 refresh period
//! lif       f64 tau, f64 threshold, f64 reset, u64 steps
//! sizes     u64 count, then u64 per layer
//! weights   f64 row-major payload per weight layer
//! projector state: u64 count, then per layer
//!           u64 dim, seen, skipped, refreshes; vector list buffer; vector list centres
//! bases     per weight layer: u8 present, then u64 rows, u64 cols, f64 payload
//! batch     u8 present, then u64 count, f64 td sum, f64 per layer pre-norm, matrices
//! ```
//!
//! A vector list is a u64 count, a u64 length, then the f64 payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::learning::{NpVariant, RuleKind, UpdateRule};
use crate::numerics::Matrix;
use crate::projector::{LayerProjector, ProjectorParams};
use crate::snn::{LifParams, LossKind, Network, PerturbScope};

use super::trainer::{BatchAccumulator, RateSource, TrainSettings, Trainer};

const MAGIC: &[u8; 8] = b"LOCOCKPT";
const VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.f64(*x));
    }
    fn matrix(&mut self, m: &Matrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        self.f64s(m.as_slice());
    }
    fn vectors(&mut self, vs: &[Vec<f64>], len: usize) {
        self.usize(vs.len());
        self.usize(len);
        vs.iter().for_each(|v| self.f64s(v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::format("checkpoint", msg)
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("size overflows"))
    }
    /// Bounded count: at most `remaining bytes / unit`.
    fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit.max(1)) > self.bytes.len() - self.pos {
            return Err(corrupt("length field exceeds file size"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(corrupt("payload exceeds file size"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let data = self.f64s(rows.checked_mul(cols).ok_or_else(|| corrupt("matrix too large"))?)?;
        Matrix::from_vec(rows, cols, data)
    }
    fn vectors(&mut self) -> Result<Vec<Vec<f64>>> {
        let n = self.count(8)?;
        let len = self.usize()?;
        (0..n).map(|_| self.f64s(len)).collect()
    }
}

fn code<T: PartialEq>(value: T, table: &[T]) -> u8 {
    table.iter().position(|t| *t == value).unwrap() as u8
}

fn decode<T: Copy>(byte: u8, table: &[T], what: &str) -> Result<T> {
    table
        .get(byte as usize)
        .copied()
        .ok_or_else(|| corrupt(format!("unknown {what} tag {byte}")))
}

const VARIANTS: [NpVariant; 2] = [NpVariant::Paper, NpVariant::Classic];
const LOSSES: [LossKind; 2] = [LossKind::Mse, LossKind::SoftmaxCrossEntropy];
const SCOPES: [PerturbScope; 2] = [PerturbScope::AllLayers, PerturbScope::HiddenOnly];
const SOURCES: [RateSource; 2] = [RateSource::Clean, RateSource::Perturbed];

pub fn encode(trainer: &Trainer, epoch: u64) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u64(epoch);
    let s = &trainer.settings;
    w.u64(s.seed);
    w.u64(trainer.samples_seen);
    w.u64(trainer.updates);

    let (kind, k) = match s.rule.kind {
        RuleKind::Np => (0, 0),
        RuleKind::Loco => (1, 0),
        RuleKind::RankConstrained { k } => (2, k),
    };
    w.u8(kind);
    w.usize(k);
    w.f64(s.rule.eta);
    w.f64(s.rule.sigma);
    w.u8(code(s.rule.variant, &VARIANTS));
    w.u8(code(s.loss, &LOSSES));
    w.u8(code(s.scope, &SCOPES));
    w.u8(code(s.rate_source, &SOURCES));
    w.usize(s.batch_size);
    w.usize(s.projector.capacity);
    w.usize(s.projector.clusters);
    w.usize(s.projector.refresh_period);

    let net = &trainer.net;
    let lif = net.lif();
    w.f64(lif.tau_mem);
    w.f64(lif.v_threshold);
    w.f64(lif.v_reset);
    w.usize(lif.t_steps);
    w.usize(net.layer_sizes().len());
    net.layer_sizes().iter().for_each(|&n| w.usize(n));
    net.weights().iter().for_each(|m| w.f64s(m.as_slice()));

    w.usize(trainer.projectors.len());
    for p in &trainer.projectors {
        w.usize(p.dim());
        w.u64(p.seen());
        w.u64(p.skipped_zero());
        w.u64(p.refreshes());
        w.vectors(p.buffer(), p.dim());
        w.vectors(p.centers(), p.dim());
    }

    for basis in &trainer.bases {
        match basis {
            Some(m) => {
                w.u8(1);
                w.matrix(m);
            }
            None => w.u8(0),
        }
    }

    match &trainer.batch {
        Some(b) => {
            w.u8(1);
            w.usize(b.count);
            w.f64(b.td_sum);
            w.f64s(&b.pre_norms);
            b.sums.iter().for_each(|m| w.matrix(m));
        }
        None => w.u8(0),
    }
    w.0
}

/// Restores a trainer and the epoch it was saved at.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Trainer, u64)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let epoch = r.u64()?;
    let seed = r.u64()?;
    let samples_seen = r.u64()?;
    let updates = r.u64()?;

    let kind_tag = r.u8()?;
    let k = r.usize()?;
    let kind = match kind_tag {
        0 => RuleKind::Np,
        1 => RuleKind::Loco,
        2 => RuleKind::RankConstrained { k },
        t => return Err(corrupt(format!("unknown rule tag {t}"))),
    };
    let eta = r.f64()?;
    let sigma = r.f64()?;
    let variant = decode(r.u8()?, &VARIANTS, "variant")?;
    let loss = decode(r.u8()?, &LOSSES, "loss")?;
    let scope = decode(r.u8()?, &SCOPES, "scope")?;
    let rate_source = decode(r.u8()?, &SOURCES, "rate source")?;
    let batch_size = r.usize()?;
    let projector = ProjectorParams {
        capacity: r.usize()?,
        clusters: r.usize()?,
        refresh_period: r.usize()?,
    };
    let settings = TrainSettings {
        rule: UpdateRule { kind, eta, sigma, variant },
        loss,
        scope,
        rate_source,
        batch_size,
        projector,
        seed,
    };

    let lif = LifParams {
        tau_mem: r.f64()?,
        v_threshold: r.f64()?,
        v_reset: r.f64()?,
        t_steps: r.usize()?,
    };
    let n_sizes = r.count(8)?;
    let sizes = (0..n_sizes).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 {
        return Err(corrupt("fewer than two layers"));
    }
    let weights = sizes
        .windows(2)
        .map(|w| {
            let len = w[0].checked_mul(w[1]).ok_or_else(|| corrupt("layer too large"))?;
            Matrix::from_vec(w[1], w[0], r.f64s(len)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network::new(sizes, weights, lif).map_err(|e| corrupt(e.to_string()))?;
    let depth = net.depth();

    let n_proj = r.count(32)?;
    let mut projectors = Vec::with_capacity(n_proj);
    for _ in 0..n_proj {
        let dim = r.usize()?;
        let seen = r.u64()?;
        let skipped = r.u64()?;
        let refreshes = r.u64()?;
        let buffer = r.vectors()?;
        let centers = r.vectors()?;
        projectors.push(LayerProjector::restore(dim, projector, buffer, seen, skipped, refreshes, centers)?);
    }

    let mut bases = Vec::with_capacity(depth);
    for _ in 0..depth {
        bases.push(match r.u8()? {
            0 => None,
            1 => Some(r.matrix()?),
            t => return Err(corrupt(format!("bad basis flag {t}"))),
        });
    }

    let batch = match r.u8()? {
        0 => None,
        1 => {
            let count = r.usize()?;
            let td_sum = r.f64()?;
            let pre_norms = r.f64s(depth)?;
            let sums = (0..depth).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
            Some(BatchAccumulator { sums, pre_norms, td_sum, count })
        }
        t => return Err(corrupt(format!("bad batch flag {t}"))),
    };
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }

    let mut trainer = Trainer::new(net, settings).map_err(|e| corrupt(e.to_string()))?;
    if projectors.len() != trainer.projectors.len() {
        return Err(corrupt("projector count does not match the rule"));
    }
    if projectors.iter().zip(&trainer.projectors).any(|(a, b)| a.dim() != b.dim()) {
        return Err(corrupt("projector dimensions do not match the network"));
    }
    trainer.projectors = projectors;
    trainer.bases = bases;
    trainer.samples_seen = samples_seen;
    trainer.updates = updates;
    trainer.batch = batch;
    Ok((trainer, epoch))
}

pub fn save(path: &Path, trainer: &Trainer, epoch: u64) -> Result<()> {
    std::fs::write(path, encode(trainer, epoch)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Trainer, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Readout, Sample, Split};
    use crate::numerics::Rng;

    fn toy_data() -> Dataset {
        let mut rng = Rng::new(3);
        let samples = (0..60)
            .map(|i| Sample {
                rates: (0..12).map(|_| rng.uniform()).collect(),
                label: i % 3,
                task_id: 0,
            })
            .collect();
        Dataset {
            samples,
            num_classes: 3,
            input_dim: 12,
            split: Split::Train,
            readout: Readout::OneHot { classes: 3 },
        }
    }

    fn trainer(kind: RuleKind, batch_size: usize) -> Trainer {
        let lif = LifParams::default();
        let net = Trainer::init_network(vec![12, 8, 3], lif, 1.5, 7).unwrap();
        let settings = TrainSettings {
            rule: UpdateRule { kind, eta: 0.1, sigma: 0.5, variant: NpVariant::Paper },
            loss: LossKind::Mse,
            scope: PerturbScope::AllLayers,
            rate_source: RateSource::Clean,
            batch_size,
            projector: ProjectorParams { capacity: 16, clusters: 3, refresh_period: 5 },
            seed: 7,
        };
        Trainer::new(net, settings).unwrap()
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let data = toy_data();
        for (kind, batch) in [
            (RuleKind::Np, 1),
            (RuleKind::Loco, 1),
            (RuleKind::RankConstrained { k: 2 }, 1),
            (RuleKind::Loco, 4),
        ] {
            let mut a = trainer(kind, batch);
            for s in &data.samples[..33] {
                a.step(s, &data.readout).unwrap();
            }
            let (mut b, epoch) = decode_checkpoint(&encode(&a, 2)).unwrap();
            assert_eq!(epoch, 2);
            assert_eq!(a, b, "{kind:?}");
            for s in &data.samples[33..] {
                a.step(s, &data.readout).unwrap();
                b.step(s, &data.readout).unwrap();
            }
            assert_eq!(a.network().weights(), b.network().weights(), "{kind:?}");
        }
    }

    #[test]
    fn truncated_or_corrupted_files_are_format_errors() {
        let data = toy_data();
        let mut t = trainer(RuleKind::Loco, 1);
        for s in &data.samples[..10] {
            t.step(s, &data.readout).unwrap();
        }
        let bytes = encode(&t, 0);
        for cut in [0, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            assert_eq!(decode_checkpoint(&bytes[..cut]).unwrap_err().exit_code(), 4, "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_checkpoint(&bad).unwrap_err().exit_code(), 4);
        let mut extra = bytes;
        extra.push(0);
        assert_eq!(decode_checkpoint(&extra).unwrap_err().exit_code(), 4);
    }
}
