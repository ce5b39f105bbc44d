//! Seeded random instances for the non-negative recovery experiments.
//!
//! Two matrix models are supported: `Rect` draws entries uniformly from
//! `[0, √12]` (mean `√3`, variance 1) and `Gaussian` from `N(5, 1)`. Columns
//! are scaled to unit norm after drawing. The ground truth has `s` non-zero
//! entries, uniform on `[0, √12]`, on a support drawn uniformly without
//! replacement. Noise is uniform on `[−γ, γ]` (`Rect`) or Gaussian, with the
//! variance chosen so the expected input SNR `E[y₀ᵀy₀] / E[ηᵀη]` hits the
//! requested value.
//!
//! Every instance is generated from its own ChaCha20 stream, selected by
//! `(master_seed, index)`, so instances can be produced in any order or in
//! parallel with identical results.

use std::io::Write;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::numerics::{self, RealMatrix, RealVector};

const SQRT_12: f64 = 3.464_101_615_137_754_6;

/// Mean of the non-zero ground-truth entries.
pub const MU_X: f64 = 1.732_050_807_568_877_2;
/// Variance of the non-zero ground-truth entries.
pub const VAR_X: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Rect,
    Gaussian,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rect => "rect",
            ModelKind::Gaussian => "gaussian",
        }
    }

    /// Mean and variance of the matrix entries before normalization.
    pub fn matrix_moments(self) -> (f64, f64) {
        match self {
            ModelKind::Rect => (MU_X, 1.0),
            ModelKind::Gaussian => (5.0, 1.0),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rect" => Ok(ModelKind::Rect),
            "gaussian" | "gauss" => Ok(ModelKind::Gaussian),
            other => Err(Error::Config(format!("unknown data model '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataModelSpec {
    kind: ModelKind,
    m: usize,
    n: usize,
    s: usize,
    input_snr_db: f64,
}

impl DataModelSpec {
    pub fn new(kind: ModelKind, m: usize, n: usize, s: usize, input_snr_db: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("empty model dimensions {m}×{n}")));
        }
        if s == 0 || s > n {
            return Err(Error::InvalidArgument(format!("sparsity {s} outside 1..={n}")));
        }
        if input_snr_db.is_nan() {
            return Err(Error::InvalidArgument("input SNR is NaN".into()));
        }
        Ok(Self {
            kind,
            m,
            n,
            s,
            input_snr_db,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn input_snr_db(&self) -> f64 {
        self.input_snr_db
    }

    pub fn with_snr_db(self, input_snr_db: f64) -> Result<Self> {
        Self::new(self.kind, self.m, self.n, self.s, input_snr_db)
    }

    pub fn with_sparsity(self, s: usize) -> Result<Self> {
        Self::new(self.kind, self.m, self.n, s, self.input_snr_db)
    }

    pub fn with_rows(self, m: usize) -> Result<Self> {
        Self::new(self.kind, m, self.n, self.s, self.input_snr_db)
    }

    pub fn with_kind(self, kind: ModelKind) -> Self {
        Self { kind, ..self }
    }

    /// `E[y₀ᵀy₀] / M`, the expected signal power per measurement.
    fn signal_power_per_row(&self) -> f64 {
        let (mu_a, var_a) = self.kind.matrix_moments();
        let s = self.s as f64;
        let mu2 = mu_a * mu_a;
        s * (VAR_X + MU_X * MU_X * (s * mu2 + var_a) / (mu2 + var_a)) / self.m as f64
    }
}

/// Expected input SNR (linear) for the given noise variance.
pub fn input_snr_theoretical(spec: &DataModelSpec, noise_var: f64) -> Result<f64> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")));
    }
    Ok(spec.signal_power_per_row() / noise_var)
}

/// Noise variance giving the spec's input SNR. Infinite SNR yields zero.
pub fn noise_var_for_snr(spec: &DataModelSpec) -> f64 {
    spec.signal_power_per_row() / db_to_linear(spec.input_snr_db)
}

/// Half-width `γ = √3·σ` of the uniform noise with variance `noise_var`.
pub fn uniform_noise_bound(noise_var: f64) -> f64 {
    (3.0 * noise_var).sqrt()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Identifies the random stream of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstanceSeed {
    pub master: u64,
    pub index: u64,
}

impl InstanceSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    /// Column-normalized system matrix.
    pub a: RealMatrix,
    pub x0: RealVector,
    /// Ascending indices of the non-zero entries of `x0`.
    pub support: Vec<usize>,
    pub y0: RealVector,
    pub eta: RealVector,
    pub y: RealVector,
    pub seed: InstanceSeed,
    /// Number of negative matrix entries drawn (Gaussian model only).
    pub negative_entries: usize,
}

/// Unnormalized `m × n` matrix with i.i.d. entries of the given model.
pub fn raw_matrix<R: Rng + ?Sized>(kind: ModelKind, m: usize, n: usize, rng: &mut R) -> RealMatrix {
    let data: Vec<f64> = match kind {
        ModelKind::Rect => (0..m * n).map(|_| SQRT_12 * rng.random::<f64>()).collect(),
        ModelKind::Gaussian => {
            let (mu, var) = kind.matrix_moments();
            let dist = Normal::new(mu, var.sqrt()).expect("valid normal parameters");
            (0..m * n).map(|_| dist.sample(rng)).collect()
        }
    };
    RealMatrix::new(m, n, data).expect("finite draws")
}

/// Draws the instance `seed` of `spec`: matrix first, then support and
/// amplitudes, then noise, all from the instance's own stream.
pub fn generate(spec: &DataModelSpec, seed: InstanceSeed) -> Instance {
    let mut rng = seed.rng();
    let (m, n) = (spec.m, spec.n);
    let raw = raw_matrix(spec.kind, m, n, &mut rng);
    let negative_entries = raw.as_slice().iter().filter(|&&v| v < 0.0).count();
    if negative_entries > 0 {
        debug!("instance {seed:?}: {negative_entries} negative matrix entries kept");
    }
    // a zero column has probability zero under both models
    let a = numerics::normalize_columns(&raw).expect("non-zero columns");

    let mut support = rand::seq::index::sample(&mut rng, n, spec.s).into_vec();
    support.sort_unstable();
    let mut x0 = vec![0.0; n];
    for &j in &support {
        // a draw of exactly zero would break the support count
        let mut v = 0.0;
        while v == 0.0 {
            v = SQRT_12 * rng.random::<f64>();
        }
        x0[j] = v;
    }

    let noise_var = noise_var_for_snr(spec);
    let eta: Vec<f64> = if noise_var == 0.0 {
        vec![0.0; m]
    } else {
        match spec.kind {
            ModelKind::Rect => {
                let g = uniform_noise_bound(noise_var);
                let dist = Uniform::new_inclusive(-g, g).expect("valid bound");
                (0..m).map(|_| dist.sample(&mut rng)).collect()
            }
            ModelKind::Gaussian => {
                let dist = Normal::new(0.0, noise_var.sqrt()).expect("valid normal parameters");
                (0..m).map(|_| dist.sample(&mut rng)).collect()
            }
        }
    };

    let y0 = numerics::matvec(&a, &x0).expect("matching dimensions");
    let y: Vec<f64> = y0.iter().zip(&eta).map(|(u, v)| u + v).collect();
    Instance {
        a,
        x0: RealVector::from_vec_unchecked(x0),
        support,
        y0,
        eta: RealVector::from_vec_unchecked(eta),
        y: RealVector::from_vec_unchecked(y),
        seed,
        negative_entries,
    }
}

/// Zeroes the `⌊ratio·M·N⌋` smallest entries of `a`, ties broken by
/// row-major index. The result is not re-normalized.
pub fn prune(a: &RealMatrix, ratio: f64) -> Result<RealMatrix> {
    if !(0.0..=0.9).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("pruning ratio {ratio} outside [0, 0.9]")));
    }
    let total = a.rows() * a.cols();
    // the guard keeps products like 0.29·100 from flooring to 28
    let k = ((ratio * total as f64) * (1.0 + 1e-12)).floor() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    let data = a.as_slice();
    order.sort_by(|&i, &j| data[i].total_cmp(&data[j]).then(i.cmp(&j)));
    let mut out = a.clone();
    let dm = out.data_mut();
    for &idx in &order[..k.min(total)] {
        dm[idx] = 0.0;
    }
    Ok(out)
}

impl Instance {
    /// Long-format CSV dump: `field,i,j,value` with fields `A` (row, column),
    /// `x0` (index, 0), `y` (index, 0) and `support` (position, index).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["field", "i", "j", "value"])?;
        for i in 0..self.a.rows() {
            for j in 0..self.a.cols() {
                w.write_record(["A".to_string(), i.to_string(), j.to_string(), self.a[(i, j)].to_string()])?;
            }
        }
        for (i, v) in self.x0.iter().enumerate() {
            w.write_record(["x0".to_string(), i.to_string(), "0".into(), v.to_string()])?;
        }
        for (i, v) in self.y.iter().enumerate() {
            w.write_record(["y".to_string(), i.to_string(), "0".into(), v.to_string()])?;
        }
        for (k, j) in self.support.iter().enumerate() {
            w.write_record(["support".to_string(), k.to_string(), j.to_string(), "1".into()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(m: usize, n: usize, s: usize, snr: f64) -> DataModelSpec {
        DataModelSpec::new(ModelKind::Rect, m, n, s, snr).unwrap()
    }

    #[test]
    fn snr_hand_value() {
        let spec = rect(50, 100, 5, 40.0);
        // factor 1 + 3·16/4 = 13
        let snr = input_snr_theoretical(&spec, 1.3e-4).unwrap();
        assert!((snr - 1e4).abs() < 1e-8);
        assert!((noise_var_for_snr(&spec) - 1.3e-4).abs() < 1e-18);
        let g = uniform_noise_bound(noise_var_for_snr(&spec));
        assert!((g - 3f64.sqrt() * 1.3e-4f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn snr_structure() {
        let spec = rect(50, 100, 5, 40.0);
        let a = input_snr_theoretical(&spec, 1e-3).unwrap();
        let b = input_snr_theoretical(&spec, 2e-3).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        let s10 = input_snr_theoretical(&spec.with_sparsity(10).unwrap(), 1e-3).unwrap();
        assert!(s10 > 2.0 * a);
        assert!(input_snr_theoretical(&spec, 0.0).is_err());
    }

    #[test]
    fn round_trip_snr() {
        for kind in [ModelKind::Rect, ModelKind::Gaussian] {
            for db in [-10.0, 0.0, 17.5, 40.0, 60.0] {
                let spec = DataModelSpec::new(kind, 30, 60, 4, db).unwrap();
                let back = input_snr_theoretical(&spec, noise_var_for_snr(&spec)).unwrap();
                assert!((back / db_to_linear(db) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(DataModelSpec::new(ModelKind::Rect, 10, 5, 0, 40.0).is_err());
        assert!(DataModelSpec::new(ModelKind::Rect, 10, 5, 6, 40.0).is_err());
        assert!(DataModelSpec::new(ModelKind::Rect, 0, 5, 1, 40.0).is_err());
    }

    #[test]
    fn instance_structure() {
        let spec = rect(20, 30, 4, 30.0);
        let inst = generate(&spec, InstanceSeed::new(3, 9));
        for j in 0..30 {
            assert!((numerics::norm2(&inst.a.column(j)) - 1.0).abs() < 1e-14);
        }
        assert!(inst.a.as_slice().iter().all(|&v| v >= 0.0));
        assert_eq!(inst.support.len(), 4);
        assert_eq!(inst.x0.iter().filter(|&&v| v > 0.0).count(), 4);
        assert!(inst.support.iter().all(|&j| inst.x0[j] > 0.0));
        assert!(inst.x0.iter().all(|&v| (0.0..=SQRT_12).contains(&v)));
        let g = uniform_noise_bound(noise_var_for_snr(&spec));
        assert!(inst.eta.iter().all(|v| v.abs() <= g));
        for i in 0..20 {
            assert_eq!(inst.y[i], inst.y0[i] + inst.eta[i]);
        }
    }

    #[test]
    fn deterministic_and_stream_separated() {
        let spec = DataModelSpec::new(ModelKind::Gaussian, 10, 12, 3, 20.0).unwrap();
        let a = generate(&spec, InstanceSeed::new(1, 0));
        let b = generate(&spec, InstanceSeed::new(1, 0));
        let c = generate(&spec, InstanceSeed::new(1, 1));
        assert_eq!(a.a.as_slice(), b.a.as_slice());
        assert_eq!(a.y.as_slice(), b.y.as_slice());
        assert_eq!(a.support, b.support);
        assert_ne!(a.a.as_slice(), c.a.as_slice());
    }

    #[test]
    fn raw_moments() {
        let mut rng = InstanceSeed::new(11, 0).rng();
        for kind in [ModelKind::Rect, ModelKind::Gaussian] {
            let draws = raw_matrix(kind, 1000, 1000, &mut rng);
            let d = draws.as_slice();
            let nf = d.len() as f64;
            let mean = d.iter().sum::<f64>() / nf;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            let (mu, sigma2) = kind.matrix_moments();
            // standard errors: σ/√n for the mean, roughly σ²·√(2/n) for the variance
            assert!((mean - mu).abs() < 3.0 * (sigma2 / nf).sqrt(), "{kind}: mean {mean}");
            let kurt_term = if kind == ModelKind::Rect { 0.8 } else { 2.0 };
            assert!((var - sigma2).abs() < 3.0 * sigma2 * (kurt_term / nf).sqrt(), "{kind}: var {var}");
        }
    }

    #[test]
    fn prune_examples() {
        let a = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(prune(&a, 0.0).unwrap().as_slice(), a.as_slice());
        assert_eq!(prune(&a, 0.5).unwrap().as_slice(), &[0.0, 0.0, 3.0, 4.0]);
        let ties = RealMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(prune(&ties, 0.5).unwrap().as_slice(), &[0.0, 0.0, 1.0, 2.0]);
        assert!(prune(&a, 0.95).is_err());
        let inst = generate(&rect(7, 11, 2, 30.0), InstanceSeed::new(0, 0));
        let p = prune(&inst.a, 0.9).unwrap();
        assert_eq!(p.count_nonzero(), (0.1f64 * 77.0).ceil() as usize);
        let p = prune(&RealMatrix::new(10, 10, (1..=100).map(f64::from).collect()).unwrap(), 0.29).unwrap();
        assert_eq!(p.count_nonzero(), 71);
    }

    #[test]
    fn csv_dump_lists_every_entry() {
        let inst = generate(&rect(3, 4, 2, 30.0), InstanceSeed::new(5, 5));
        let mut buf = Vec::new();
        inst.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 12 + 4 + 3 + 2);
        assert!(text.starts_with("field,i,j,value\nA,0,0,"));
    }

    proptest! {
        #[test]
        fn pruning_is_monotone(seed in 0u64..1000, r1 in 0.0f64..0.9, r2 in 0.0f64..0.9) {
            let inst = generate(&rect(6, 8, 2, 20.0), InstanceSeed::new(seed, 0));
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let a = prune(&inst.a, lo).unwrap();
            let b = prune(&inst.a, hi).unwrap();
            prop_assert!(b.count_nonzero() <= a.count_nonzero());
        }
    }
}
