//! The simulation bank: one batch of subordinator paths and unit-noise
//! stochastic convolutions `Z0_t = int_0^t e^{(t-r)A} dW_{L_r}`, generated once
//! and queried for any starting point, noise strength or drift.
//!
//! # File format
//!
//! Little-endian throughout.
//!
//! ```text
//! magic          4 bytes   "LVIB"
//! version        u32       currently 1
//! spec hash      32 bytes  ProblemSpec::hash()
//! delta_fine     f64
//! delta_coarse   f64
//! m_sub          u64
//! m_ou           u64
//! base_seed      u64
//! precision      u8        0 = f64 checkpoints, 1 = f32 checkpoints
//! m_sub x        seed u64, L at the fine grid points (f64)
//! m_ou x         seed u64, L at the fine grid points (f64),
//!                Z0 at the coarse grid points, row-major (time, mode)
//! trailer        32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! The grids are `[0, T]` with the spec's horizon, so their sizes follow from
//! the header and the spec.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{config, domain, Error, Result};
use crate::flow::{forcing_convolution, TimeShift};
use crate::model::{DiagonalOperator, ProblemSpec, SpecHash, TimeGrid};
use crate::rng::{derive_seed, stream_rng, StreamKind};
use crate::stable::{sample_subordinator_path, StableIncrementSampler, SubordinatorPath};

pub const BANK_MAGIC: [u8; 4] = *b"LVIB";
pub const BANK_VERSION: u32 = 1;

static BANK_LOADS: AtomicUsize = AtomicUsize::new(0);
static PATHS_GENERATED: AtomicUsize = AtomicUsize::new(0);

/// Number of successful [`load_bank`] calls in this process.
pub fn bank_load_count() -> usize {
    BANK_LOADS.load(Ordering::Relaxed)
}

/// Number of bank paths and records simulated in this process.
pub fn generated_path_count() -> usize {
    PATHS_GENERATED.load(Ordering::Relaxed)
}

/// Storage precision of the convolution checkpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F64,
    /// Checkpoints are rounded to `f32` at generation, so a saved bank
    /// round-trips exactly.
    F32,
}

impl Precision {
    fn flag(self) -> u8 {
        match self {
            Self::F64 => 0,
            Self::F32 => 1,
        }
    }

    fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            0 => Ok(Self::F64),
            1 => Ok(Self::F32),
            _ => Err(Error::Format(format!("unknown precision flag {flag}"))),
        }
    }

    fn round(self, v: f64) -> f64 {
        match self {
            Self::F64 => v,
            Self::F32 => v as f32 as f64,
        }
    }
}

/// Where the clock increments of the convolution records come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClockSource {
    #[default]
    Stable,
    /// `L_r = r`; turns the records into plain OU convolutions with a
    /// closed-form law, used as a test oracle.
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BankConfig {
    pub delta_fine: f64,
    pub delta_coarse: f64,
    pub m_sub: usize,
    pub m_ou: usize,
    pub base_seed: u64,
    pub precision: Precision,
    pub clock: ClockSource,
}

impl BankConfig {
    pub fn new(delta_fine: f64, delta_coarse: f64, m_sub: usize, m_ou: usize, base_seed: u64) -> Self {
        Self {
            delta_fine,
            delta_coarse,
            m_sub,
            m_ou,
            base_seed,
            precision: Precision::F64,
            clock: ClockSource::Stable,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BankHeader {
    pub version: u32,
    pub spec_hash: SpecHash,
    pub delta_fine: f64,
    pub delta_coarse: f64,
    pub m_sub: usize,
    pub m_ou: usize,
    pub base_seed: u64,
    pub precision: Precision,
}

/// One clock path together with the unit-noise convolution driven by it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionRecord {
    pub sub: SubordinatorPath,
    /// `Z0` at the coarse grid points, row-major `(time, mode)`; row 0 is zero.
    pub checkpoints: Vec<f64>,
    pub seed: u64,
}

impl ConvolutionRecord {
    /// `Z0` at coarse index `j`.
    pub fn checkpoint(&self, j: usize, dim: usize) -> &[f64] {
        &self.checkpoints[j * dim..(j + 1) * dim]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationBank {
    pub header: BankHeader,
    pub fine_grid: TimeGrid,
    pub coarse_grid: TimeGrid,
    pub dim: usize,
    /// Clock-only paths, independent of the records.
    pub sub_paths: Vec<SubordinatorPath>,
    pub records: Vec<ConvolutionRecord>,
}

fn bank_grids(spec: &ProblemSpec, delta_fine: f64, delta_coarse: f64) -> Result<(TimeGrid, TimeGrid, usize)> {
    let fine = TimeGrid::new(0.0, spec.horizon, delta_fine)?;
    let coarse = TimeGrid::new(0.0, spec.horizon, delta_coarse)?;
    let ratio = fine.refinement_ratio(&coarse).ok_or_else(|| {
        config(format!(
            "coarse step {delta_coarse} is not a whole multiple of fine step {delta_fine}"
        ))
    })?;
    Ok((fine, coarse, ratio))
}

/// `(1 - e^{-2 lambda delta}) / (2 lambda delta)`: the within-bin average of
/// `e^{-2 lambda (r_{i+1} - r)}` when `L` is linear inside the bin.
fn bin_averages(lambdas: &[f64], delta: f64) -> Vec<f64> {
    lambdas
        .iter()
        .map(|l| {
            let z = 2.0 * l * delta;
            if z == 0.0 {
                1.0
            } else {
                -(-z).exp_m1() / z
            }
        })
        .collect()
}

fn generate_record(
    spec: &ProblemSpec,
    fine: TimeGrid,
    ratio: usize,
    cfg: &BankConfig,
    index: u64,
) -> Result<ConvolutionRecord> {
    let n = spec.dim;
    let clock_seed = derive_seed(cfg.base_seed, StreamKind::RecordSubordinator, index);
    let noise_seed = derive_seed(cfg.base_seed, StreamKind::RecordGaussian, index);
    let sub = match cfg.clock {
        ClockSource::Stable => sample_subordinator_path(spec, fine, clock_seed)?,
        ClockSource::Deterministic => SubordinatorPath::deterministic(fine),
    };
    let decay: Vec<f64> = spec.lambdas.iter().map(|l| (-l * fine.step()).exp()).collect();
    let root_avg: Vec<f64> = bin_averages(&spec.lambdas, fine.step())
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let coarse_steps = fine.steps() / ratio;
    let mut checkpoints = Vec::with_capacity((coarse_steps + 1) * n);
    checkpoints.extend(std::iter::repeat_n(0.0, n));
    let mut z = vec![0.0; n];
    let mut rng = stream_rng(noise_seed);
    for (i, dl) in sub.increments().enumerate() {
        let root = dl.sqrt();
        for k in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            z[k] = decay[k] * z[k] + root * root_avg[k] * xi;
        }
        if (i + 1) % ratio == 0 {
            checkpoints.extend(z.iter().map(|&v| cfg.precision.round(v)));
        }
    }
    PATHS_GENERATED.fetch_add(1, Ordering::Relaxed);
    Ok(ConvolutionRecord {
        sub,
        checkpoints,
        seed: clock_seed,
    })
}

/// Simulates the bank. Every path and record owns an independent stream
/// derived from `cfg.base_seed`, so the result does not depend on the
/// thread schedule.
pub fn generate_bank(spec: &ProblemSpec, cfg: &BankConfig) -> Result<SimulationBank> {
    spec.validate()?;
    let (fine, coarse, ratio) = bank_grids(spec, cfg.delta_fine, cfg.delta_coarse)?;
    if cfg.m_sub < 1 {
        return Err(config("a bank needs at least one subordinator path"));
    }
    // validates the sampler parameters once up front
    StableIncrementSampler::new(spec.alpha, spec.gamma_bar, fine.step())?;
    let sub_paths = (0..cfg.m_sub as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.base_seed, StreamKind::BankSubordinator, i);
            let path = sample_subordinator_path(spec, fine, seed);
            PATHS_GENERATED.fetch_add(1, Ordering::Relaxed);
            path
        })
        .collect::<Result<Vec<_>>>()?;
    let records = (0..cfg.m_ou as u64)
        .into_par_iter()
        .map(|i| generate_record(spec, fine, ratio, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationBank {
        header: BankHeader {
            version: BANK_VERSION,
            spec_hash: spec.hash(),
            delta_fine: cfg.delta_fine,
            delta_coarse: cfg.delta_coarse,
            m_sub: cfg.m_sub,
            m_ou: cfg.m_ou,
            base_seed: cfg.base_seed,
            precision: cfg.precision,
        },
        fine_grid: fine,
        coarse_grid: coarse,
        dim: spec.dim,
        sub_paths,
        records,
    })
}

impl SimulationBank {
    /// Rejects a bank generated for a different problem.
    pub fn check_spec(&self, spec: &ProblemSpec) -> Result<()> {
        let hash = spec.hash();
        if hash != self.header.spec_hash {
            return Err(Error::Format(format!(
                "bank was generated for spec {}, queried with spec {hash}",
                self.header.spec_hash
            )));
        }
        Ok(())
    }

    fn coarse_index(&self, t: f64) -> Result<usize> {
        self.coarse_grid
            .index_of(t)
            .ok_or_else(|| domain(format!("time {t} is not a bank checkpoint")))
    }
}

/// `I^L_{u,t} = int_u^t e^{2(t-r)A} Q dL_r`, scaled by `sigma_scale^2`.
///
/// `u` and `t` are snapped inward to the path's grid (`u` up, `t` down, near
/// hits count as hits). Within each bin `L` is taken to be linear, which
/// makes the rule exact for the deterministic clock.
pub fn covariance_integral(
    path: &SubordinatorPath,
    spec: &ProblemSpec,
    sigma_scale: f64,
    u: f64,
    t: f64,
) -> Result<DiagonalOperator> {
    if !(u < t) {
        return Err(domain(format!("covariance needs u < t, got u = {u}, t = {t}")));
    }
    let grid = &path.grid;
    let (iu, it) = (grid.snap_up(u), grid.snap_down(t));
    if iu >= it {
        return Err(domain(format!("[{u}, {t}] contains no bin of the clock grid")));
    }
    let d2: Vec<f64> = spec.lambdas.iter().map(|l| (-2.0 * l * grid.step()).exp()).collect();
    let avg = bin_averages(&spec.lambdas, grid.step());
    let mut acc = vec![0.0; spec.dim];
    for i in iu..it {
        let dl = path.values[i + 1] - path.values[i];
        for k in 0..spec.dim {
            acc[k] = acc[k] * d2[k] + avg[k] * dl;
        }
    }
    let s2 = sigma_scale * sigma_scale;
    for (a, s) in acc.iter_mut().zip(&spec.sigmas) {
        *a *= s2 * s * s;
    }
    Ok(DiagonalOperator::new(acc))
}

/// Per-bin covariances of one clock path on a coarse grid, from which every
/// `I^L_{c_i, c_j}` follows by a positive (cancellation-free) recursion.
#[derive(Clone, Debug)]
pub struct CovarianceTable {
    pub grid: TimeGrid,
    dim: usize,
    /// `I^L_{c_j, c_{j+1}}` at unit noise scale, row-major `(bin, mode)`.
    bins: Vec<f64>,
    /// `e^{-2 lambda_k (c_{j+1} - c_j)}`.
    decay: Vec<f64>,
}

impl CovarianceTable {
    pub fn new(path: &SubordinatorPath, spec: &ProblemSpec, grid: TimeGrid) -> Result<Self> {
        let ratio = path
            .grid
            .refinement_ratio(&grid)
            .ok_or_else(|| config("covariance grid is not aligned with the clock grid"))?;
        let first = path.grid.index_of(grid.start()).expect("aligned");
        let n = spec.dim;
        let d2: Vec<f64> = spec.lambdas.iter().map(|l| (-2.0 * l * path.grid.step()).exp()).collect();
        let avg = bin_averages(&spec.lambdas, path.grid.step());
        let q: Vec<f64> = spec.sigmas.iter().map(|s| s * s).collect();
        let mut bins = vec![0.0; grid.steps() * n];
        for j in 0..grid.steps() {
            let row = &mut bins[j * n..(j + 1) * n];
            for i in first + j * ratio..first + (j + 1) * ratio {
                let dl = path.values[i + 1] - path.values[i];
                for k in 0..n {
                    row[k] = row[k] * d2[k] + avg[k] * dl;
                }
            }
            for k in 0..n {
                row[k] *= q[k];
            }
        }
        let decay = spec.lambdas.iter().map(|l| (-2.0 * l * grid.step()).exp()).collect();
        Ok(Self { grid, dim: n, bins, decay })
    }

    /// `I^L_{c_i, c_j}` at unit noise scale, for `i < j`.
    pub fn interval_into(&self, i: usize, j: usize, out: &mut [f64]) {
        assert!(i < j && j <= self.grid.steps(), "covariance interval must be non-empty");
        let n = self.dim;
        out.fill(0.0);
        let mut weight = vec![1.0; n];
        for l in (i..j).rev() {
            let row = &self.bins[l * n..(l + 1) * n];
            for k in 0..n {
                out[k] += weight[k] * row[k];
                weight[k] *= self.decay[k];
            }
        }
    }

    /// `I^L_{c_i, c_j}` for every `i < j`, as rows indexed by `i`.
    pub fn all_to(&self, j: usize) -> Vec<Vec<f64>> {
        let n = self.dim;
        let mut flat = vec![0.0; j * n];
        self.all_to_into(0, j, &mut flat);
        flat.chunks_exact(n).map(<[f64]>::to_vec).collect()
    }

    /// Writes `I^L_{c_i, c_j}` for `i = lo..j` into consecutive rows of `out`.
    pub fn all_to_into(&self, lo: usize, j: usize, out: &mut [f64]) {
        assert!(lo < j && j <= self.grid.steps(), "covariance interval must be non-empty");
        let n = self.dim;
        let mut acc = vec![0.0; n];
        let mut weight = vec![1.0; n];
        for i in (lo..j).rev() {
            let row = &self.bins[i * n..(i + 1) * n];
            for k in 0..n {
                acc[k] += weight[k] * row[k];
                weight[k] *= self.decay[k];
            }
            out[(i - lo) * n..(i - lo + 1) * n].copy_from_slice(&acc);
        }
    }
}

/// `sigma_scale sqrt(Q) (Z0_t - e^{(t-s)A} Z0_s)`: the stochastic integral
/// `int_s^t e^{(t-r)A} sqrt(Q) dW_{L_r}` of this record. `s` and `t` must be
/// checkpoints.
pub fn convolution_segment(
    bank: &SimulationBank,
    record: &ConvolutionRecord,
    spec: &ProblemSpec,
    sigma_scale: f64,
    s: f64,
    t: f64,
) -> Result<Vec<f64>> {
    if s > t {
        return Err(domain(format!("segment needs s <= t, got s = {s}, t = {t}")));
    }
    let (i, j) = (bank.coarse_index(s)?, bank.coarse_index(t)?);
    let mut out = vec![0.0; spec.dim];
    if i == j {
        return Ok(out);
    }
    segment_into(record, spec, sigma_scale, bank.coarse_grid, i, j, &mut out);
    Ok(out)
}

/// [`convolution_segment`] by coarse indices, without checks.
pub(crate) fn segment_into(
    record: &ConvolutionRecord,
    spec: &ProblemSpec,
    sigma_scale: f64,
    coarse: TimeGrid,
    i: usize,
    j: usize,
    out: &mut [f64],
) {
    let n = spec.dim;
    let tau = coarse.point(j) - coarse.point(i);
    let (zs, zt) = (record.checkpoint(i, n), record.checkpoint(j, n));
    for k in 0..n {
        let decay = (-spec.lambdas[k] * tau).exp();
        out[k] = sigma_scale * spec.sigmas[k] * (zt[k] - decay * zs[k]);
    }
}

/// `Z^{s,x}_t = e^{(t-s)A} x + F_{s,t} + sigma_scale sqrt(Q)(Z0_t - e^{(t-s)A} Z0_s)`.
pub fn ou_endpoint(
    bank: &SimulationBank,
    record: &ConvolutionRecord,
    spec: &ProblemSpec,
    sigma_scale: f64,
    shift: &TimeShift,
    s: f64,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if !(s < t) {
        return Err(domain(format!("OU endpoint needs s < t, got s = {s}, t = {t}")));
    }
    let mut out = convolution_segment(bank, record, spec, sigma_scale, s, t)?;
    let f = forcing_convolution(spec, shift, s, t)?;
    for k in 0..spec.dim {
        out[k] += (-spec.lambdas[k] * (t - s)).exp() * x[k] + f[k];
    }
    Ok(out)
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the bank in the documented binary format.
pub fn save_bank(bank: &SimulationBank, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = HashingWriter {
        inner: BufWriter::new(file),
        hasher: Sha256::new(),
    };
    let h = &bank.header;
    w.write_all(&BANK_MAGIC)?;
    w.write_all(&h.version.to_le_bytes())?;
    w.write_all(&h.spec_hash.0)?;
    w.write_all(&h.delta_fine.to_le_bytes())?;
    w.write_all(&h.delta_coarse.to_le_bytes())?;
    w.write_all(&(h.m_sub as u64).to_le_bytes())?;
    w.write_all(&(h.m_ou as u64).to_le_bytes())?;
    w.write_all(&h.base_seed.to_le_bytes())?;
    w.write_all(&[h.precision.flag()])?;
    for p in &bank.sub_paths {
        w.write_all(&p.seed.to_le_bytes())?;
        write_f64s(&mut w, &p.values)?;
    }
    for r in &bank.records {
        w.write_all(&r.seed.to_le_bytes())?;
        write_f64s(&mut w, &r.sub.values)?;
        match h.precision {
            Precision::F64 => write_f64s(&mut w, &r.checkpoints)?,
            Precision::F32 => {
                for v in &r.checkpoints {
                    w.write_all(&(*v as f32).to_le_bytes())?;
                }
            }
        }
    }
    let digest = w.hasher.finalize_reset();
    let mut inner = w.inner;
    inner.write_all(&digest)?;
    inner.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format("bank file is truncated".into()),
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Reads a bank and validates it against `spec`: magic, version, spec hash,
/// grid compatibility and the SHA-256 trailer.
pub fn load_bank(path: &Path, spec: &ProblemSpec) -> Result<SimulationBank> {
    let file = File::open(path)?;
    let mut r = HashingReader {
        inner: BufReader::new(file),
        hasher: Sha256::new(),
    };
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if magic != BANK_MAGIC {
        return Err(Error::Format("not a bank file (bad magic bytes)".into()));
    }
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != BANK_VERSION {
        return Err(Error::Format(format!(
            "bank format version {version} is not supported (expected {BANK_VERSION})"
        )));
    }
    let mut hash = [0u8; 32];
    read_exact(&mut r, &mut hash)?;
    let spec_hash = SpecHash(hash);
    if spec_hash != spec.hash() {
        return Err(Error::Format(format!(
            "bank was generated for spec {spec_hash}, loaded with spec {}",
            spec.hash()
        )));
    }
    let delta_fine = f64::from_bits(read_u64(&mut r)?);
    let delta_coarse = f64::from_bits(read_u64(&mut r)?);
    let m_sub = read_u64(&mut r)? as usize;
    let m_ou = read_u64(&mut r)? as usize;
    let base_seed = read_u64(&mut r)?;
    let mut flag = [0u8; 1];
    read_exact(&mut r, &mut flag)?;
    let precision = Precision::from_flag(flag[0])?;
    let (fine, coarse, _) = bank_grids(spec, delta_fine, delta_coarse)
        .map_err(|e| Error::Format(format!("bank grids are invalid: {e}")))?;
    let n = spec.dim;

    let mut sub_paths = Vec::with_capacity(m_sub.min(1 << 20));
    for _ in 0..m_sub {
        let seed = read_u64(&mut r)?;
        let values = read_f64s(&mut r, fine.steps() + 1)?;
        sub_paths.push(SubordinatorPath { grid: fine, values, seed });
    }
    let mut records = Vec::with_capacity(m_ou.min(1 << 20));
    let cp_len = (coarse.steps() + 1) * n;
    for _ in 0..m_ou {
        let seed = read_u64(&mut r)?;
        let values = read_f64s(&mut r, fine.steps() + 1)?;
        let checkpoints = match precision {
            Precision::F64 => read_f64s(&mut r, cp_len)?,
            Precision::F32 => {
                let mut bytes = vec![0u8; cp_len * 4];
                read_exact(&mut r, &mut bytes)?;
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                    .collect()
            }
        };
        records.push(ConvolutionRecord {
            sub: SubordinatorPath { grid: fine, values, seed },
            checkpoints,
            seed,
        });
    }
    let digest = r.hasher.finalize_reset();
    let mut trailer = [0u8; 32];
    read_exact(&mut r.inner, &mut trailer)?;
    if trailer[..] != digest[..] {
        return Err(Error::Format("bank file checksum mismatch (corrupted file)".into()));
    }
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after bank checksum".into()));
    }
    BANK_LOADS.fetch_add(1, Ordering::Relaxed);
    Ok(SimulationBank {
        header: BankHeader {
            version,
            spec_hash,
            delta_fine,
            delta_coarse,
            m_sub,
            m_ou,
            base_seed,
            precision,
        },
        fine_grid: fine,
        coarse_grid: coarse,
        dim: n,
        sub_paths,
        records,
    })
}
