use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{DetectionVector, EventRecord};
use crate::ingest::FEATURE_COUNT;
use crate::scalar::Scalar;

/// Rows whose standardized std falls below this are left out of the average.
pub const EPS_VAR: f64 = 1e-9;

/// Which rows take part in the per-step average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFilter {
    /// Only rows that are (numerically) constant on either side are dropped.
    Variance,
    /// Additionally drop rows that neither event's detection vector flags.
    #[default]
    Flagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MccConfig {
    pub eps_var: f64,
    pub rows: RowFilter,
    /// Per-feature scale that maps raw units to standardized units for the
    /// variance test; usually the training normalization std.
    pub scale: [f64; FEATURE_COUNT],
}

impl Default for MccConfig {
    fn default() -> Self {
        Self {
            eps_var: EPS_VAR,
            rows: RowFilter::default(),
            scale: [1.0; FEATURE_COUNT],
        }
    }
}

/// Nine feature rows over `len` samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMatrix<T> {
    pub len: usize,
    pub data: Vec<T>,
    /// Detection vector used by [`RowFilter::Flagged`]; `None` keeps every row.
    pub vector: Option<DetectionVector>,
}

impl<T: Scalar> EventMatrix<T> {
    pub fn new(len: usize, data: Vec<T>) -> Result<Self> {
        if len == 0 || data.len() != FEATURE_COUNT * len {
            return Err(Error::Shape {
                expected: format!("{FEATURE_COUNT} x {len} with len > 0"),
                got: data.len().to_string(),
            });
        }
        Ok(Self {
            len,
            data,
            vector: None,
        })
    }

    pub fn from_record(e: &EventRecord) -> Result<Self> {
        let mut m = Self::new(e.len, e.p.iter().map(|&v| T::of(v)).collect())?;
        m.vector = Some(e.vector);
        Ok(m)
    }

    pub fn row(&self, f: usize) -> &[T] {
        &self.data[f * self.len..(f + 1) * self.len]
    }

    /// Circular shift of the columns by `k`: each step moves the last
    /// column to the front.
    pub fn roll(&self, k: usize) -> Result<Self> {
        if k > self.len {
            return Err(Error::InvalidArgument(format!(
                "roll by {k} on {} columns",
                self.len
            )));
        }
        let tau = self.len;
        let mut data = Vec::with_capacity(self.data.len());
        for f in 0..FEATURE_COUNT {
            let row = self.row(f);
            data.extend((0..tau).map(|t| row[(t + tau - k) % tau]));
        }
        Ok(Self {
            len: tau,
            data,
            vector: self.vector,
        })
    }

    /// Right-pads every row to `tau` columns with its last value.
    pub fn padded(&self, tau: usize) -> Self {
        if tau <= self.len {
            return self.clone();
        }
        let mut data = Vec::with_capacity(FEATURE_COUNT * tau);
        for f in 0..FEATURE_COUNT {
            let row = self.row(f);
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(row[self.len - 1], tau - self.len));
        }
        Self {
            len: tau,
            data,
            vector: self.vector,
        }
    }
}

/// Row statistics that do not change under rolling.
#[derive(Debug, Clone)]
struct Centered<T> {
    len: usize,
    /// Mean-removed rows.
    rows: Vec<T>,
    norms: [T; FEATURE_COUNT],
    std: [T; FEATURE_COUNT],
}

impl<T: Scalar> Centered<T> {
    fn of(m: &EventMatrix<T>) -> Self {
        let n = T::of(m.len as f64);
        let mut rows = Vec::with_capacity(m.data.len());
        let mut norms = [T::zero(); FEATURE_COUNT];
        let mut std = [T::zero(); FEATURE_COUNT];
        for f in 0..FEATURE_COUNT {
            let row = m.row(f);
            let mean = row.iter().copied().sum::<T>() / n;
            let ss = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            rows.extend(row.iter().map(|&v| v - mean));
            norms[f] = ss.sqrt();
            std[f] = (ss / n).sqrt();
        }
        Self {
            len: m.len,
            rows,
            norms,
            std,
        }
    }

    fn row(&self, f: usize) -> &[T] {
        &self.rows[f * self.len..(f + 1) * self.len]
    }
}

/// Two events brought to a common length `tau` by edge padding, with the
/// set of rows that enter the average.
#[derive(Debug, Clone)]
pub struct AlignedPair<T> {
    pub a: EventMatrix<T>,
    pub b: EventMatrix<T>,
    pub rows: [bool; FEATURE_COUNT],
    ca: Centered<T>,
    cb: Centered<T>,
}

fn included_rows<T: Scalar>(
    ca: &Centered<T>,
    cb: &Centered<T>,
    va: Option<DetectionVector>,
    vb: Option<DetectionVector>,
    cfg: &MccConfig,
) -> [bool; FEATURE_COUNT] {
    std::array::from_fn(|f| {
        let eps = T::of(cfg.eps_var * cfg.scale[f]);
        let varying = ca.std[f] >= eps
            && cb.std[f] >= eps
            && ca.norms[f] > T::zero()
            && cb.norms[f] > T::zero();
        let flagged = match (cfg.rows, va, vb) {
            (RowFilter::Flagged, Some(x), Some(y)) => x.get(f) || y.get(f),
            _ => true,
        };
        varying && flagged
    })
}

impl<T: Scalar> AlignedPair<T> {
    pub fn new(a: &EventMatrix<T>, b: &EventMatrix<T>, cfg: &MccConfig) -> Self {
        let tau = a.len.max(b.len);
        let (a, b) = (a.padded(tau), b.padded(tau));
        let (ca, cb) = (Centered::of(&a), Centered::of(&b));
        let rows = included_rows(&ca, &cb, a.vector, b.vector, cfg);
        Self { a, b, rows, ca, cb }
    }

    pub fn tau(&self) -> usize {
        self.a.len
    }

    pub fn included(&self) -> usize {
        self.rows.iter().filter(|&&r| r).count()
    }
}

fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

/// Mean Pearson correlation between the included rows of `a` and of `b`
/// rolled by `k`; 0 when no row is included.
pub fn step_correlation<T: Scalar>(pair: &AlignedPair<T>, k: usize) -> Result<T> {
    let tau = pair.tau();
    if k > tau {
        return Err(Error::InvalidArgument(format!(
            "roll by {k} on {tau} columns"
        )));
    }
    Ok(step_unchecked(pair, k % tau))
}

fn step_unchecked<T: Scalar>(pair: &AlignedPair<T>, k: usize) -> T {
    step_rows(&pair.ca, &pair.cb, &pair.rows, k)
}

fn step_rows<T: Scalar>(
    ca: &Centered<T>,
    cb: &Centered<T>,
    rows: &[bool; FEATURE_COUNT],
    k: usize,
) -> T {
    let tau = ca.len;
    let mut total = T::zero();
    let mut n = 0usize;
    for f in (0..FEATURE_COUNT).filter(|&f| rows[f]) {
        let (x, y) = (ca.row(f), cb.row(f));
        // roll(y, k)[t] = y[t - k]: split the sum at the wrap point.
        let mut s = T::zero();
        for t in 0..k {
            s += x[t] * y[t + tau - k];
        }
        for t in k..tau {
            s += x[t] * y[t - k];
        }
        total += clamp_unit(s / (ca.norms[f] * cb.norms[f]));
        n += 1;
    }
    if n == 0 {
        T::zero()
    } else {
        clamp_unit(total / T::of(n as f64))
    }
}

/// The pair's two sides in a fixed order independent of argument order.
/// The maximum over rolls is symmetric, so evaluating in this order makes
/// `mcc(a, b)` and `mcc(b, a)` agree to the last bit.
fn ordered<T: Scalar>(pair: &AlignedPair<T>) -> (&Centered<T>, &Centered<T>) {
    let swap = pair
        .ca
        .rows
        .iter()
        .zip(&pair.cb.rows)
        .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_gt());
    if swap {
        (&pair.cb, &pair.ca)
    } else {
        (&pair.ca, &pair.cb)
    }
}

/// Maximum step correlation over every roll, by direct evaluation.
pub fn mcc_naive<T: Scalar>(pair: &AlignedPair<T>) -> T {
    if pair.included() == 0 {
        return T::zero();
    }
    let (x, y) = ordered(pair);
    (1..=pair.tau())
        .map(|k| step_rows(x, y, &pair.rows, k % pair.tau()))
        .fold(-T::one(), T::max)
}

/// Reusable FFT plans for the fast path.
pub struct Correlator<T: FftNum> {
    planner: FftPlanner<T>,
}

impl<T: Scalar + FftNum> Default for Correlator<T> {
    fn default() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }
}

impl<T: Scalar + FftNum> Correlator<T> {
    fn plans(&mut self, tau: usize) -> (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>) {
        (
            self.planner.plan_fft_forward(tau),
            self.planner.plan_fft_inverse(tau),
        )
    }

    /// All roll correlations at once. The per-row circular cross-correlations
    /// are linear in the spectra, so the weighted spectra are summed first and
    /// a single inverse transform yields the averaged curve.
    pub fn mcc(&mut self, pair: &AlignedPair<T>) -> T {
        let count = pair.included();
        if count == 0 {
            return T::zero();
        }
        let tau = pair.tau();
        let (fwd, inv) = self.plans(tau);
        let mut acc = vec![Complex::new(T::zero(), T::zero()); tau];
        let mut xa = vec![Complex::new(T::zero(), T::zero()); tau];
        let mut xb = xa.clone();
        let (ca, cb) = ordered(pair);
        for f in (0..FEATURE_COUNT).filter(|&f| pair.rows[f]) {
            for (dst, &v) in xa.iter_mut().zip(ca.row(f)) {
                *dst = Complex::new(v, T::zero());
            }
            for (dst, &v) in xb.iter_mut().zip(cb.row(f)) {
                *dst = Complex::new(v, T::zero());
            }
            fwd.process(&mut xa);
            fwd.process(&mut xb);
            let w = T::one() / (ca.norms[f] * cb.norms[f]);
            for ((s, a), b) in acc.iter_mut().zip(&xa).zip(&xb) {
                *s += a * b.conj() * w;
            }
        }
        inv.process(&mut acc);
        let scale = T::one() / T::of((tau * count) as f64);
        acc.iter()
            .map(|c| clamp_unit(c.re * scale))
            .fold(-T::one(), T::max)
    }
}

/// Maximum correlation coefficient between two events (fast path).
pub fn mcc<T: Scalar + FftNum>(a: &EventMatrix<T>, b: &EventMatrix<T>, cfg: &MccConfig) -> T {
    Correlator::default().mcc(&AlignedPair::new(a, b, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> EventMatrix<f64> {
        let len = rows[0].len();
        let mut data = vec![0.0; FEATURE_COUNT * len];
        for (f, r) in rows.iter().enumerate() {
            data[f * len..(f + 1) * len].copy_from_slice(r);
        }
        EventMatrix::new(len, data).unwrap()
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn roll_rules() {
        let m = matrix(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(m.roll(1).unwrap().row(0), &[3.0, 1.0, 2.0]);
        assert_eq!(m.roll(3).unwrap(), m);
        assert_eq!(m.roll(1).unwrap().roll(1).unwrap(), m.roll(2).unwrap());
        assert!(m.roll(4).is_err());
    }

    #[test]
    fn edge_padding() {
        let m = matrix(&[&[1.0, 2.0]]).padded(4);
        assert_eq!(m.row(0), &[1.0, 2.0, 2.0, 2.0]);
        assert_eq!(m.row(4), &[0.0; 4]);
    }

    #[test]
    fn anticorrelated_single_row() {
        let cfg = MccConfig::default();
        let pair = AlignedPair::new(
            &matrix(&[&[1.0, 2.0, 3.0]]),
            &matrix(&[&[3.0, 2.0, 1.0]]),
            &cfg,
        );
        assert_eq!(pair.included(), 1);
        assert!((step_correlation(&pair, 3).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_built_pair_averages_two_rows() {
        // Row 0: target Pearson 0.5, row 4: target 0.9; others constant.
        let x0 = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x4 = [2.0, -1.0, 0.5, 3.0, 1.0];
        // y = r * x + sqrt(1 - r^2) * z with z centered and orthogonal to x.
        let build = |x: &[f64; 5], r: f64| -> [f64; 5] {
            let n = 5.0;
            let mx = x.iter().sum::<f64>() / n;
            let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
            let nx = xc.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut z = [1.0, -2.0, 0.0, 2.0, -1.0];
            let dot: f64 = z.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>() / (nx * nx);
            for (zi, xi) in z.iter_mut().zip(&xc) {
                *zi -= dot * xi;
            }
            let mz = z.iter().sum::<f64>() / n;
            let nz = z.iter().map(|v| (v - mz).powi(2)).sum::<f64>().sqrt();
            std::array::from_fn(|t| r * xc[t] / nx + (1.0 - r * r).sqrt() * (z[t] - mz) / nz)
        };
        let y0 = build(&x0, 0.5);
        let y4 = build(&x4, 0.9);
        assert!((pearson(&x0, &y0) - 0.5).abs() < 1e-12);
        assert!((pearson(&x4, &y4) - 0.9).abs() < 1e-12);
        let c = [7.0; 5];
        let a = matrix(&[&x0, &c, &c, &c, &x4, &c, &c, &c, &c]);
        let b = matrix(&[&y0, &c, &c, &c, &y4, &c, &c, &c, &c]);
        let pair = AlignedPair::new(&a, &b, &MccConfig::default());
        assert_eq!(pair.included(), 2);
        assert!((step_correlation(&pair, 5).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn all_rows_flat_gives_zero() {
        let c = [1.0; 4];
        let m = matrix(&[&c]);
        let pair = AlignedPair::new(&m, &m, &MccConfig::default());
        assert_eq!(step_correlation(&pair, 1).unwrap(), 0.0);
        assert_eq!(mcc_naive(&pair), 0.0);
        assert_eq!(mcc(&m, &m, &MccConfig::default()), 0.0);
    }

    #[test]
    fn shift_recovered_by_rolling() {
        let x: Vec<f64> = (0..50)
            .map(|t| ((t as f64) * 0.37).sin() + 0.01 * t as f64)
            .collect();
        let y: Vec<f64> = (0..50).map(|t| ((t as f64) * 0.11).cos()).collect();
        let m = matrix(&[&x, &y]);
        let shifted = m.roll(7).unwrap();
        let cfg = MccConfig::default();
        assert!((mcc(&m, &shifted, &cfg) - 1.0).abs() < 1e-12);
        assert!((mcc_naive(&AlignedPair::new(&m, &shifted, &cfg)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flagged_filter_drops_unflagged_rows() {
        let x: Vec<f64> = (0..20).map(|t| t as f64).collect();
        let noise: Vec<f64> = (0..20).map(|t| ((t * 7919) % 13) as f64).collect();
        let mut a = matrix(&[&x, &noise]);
        let mut b = matrix(&[&x, &x]);
        let cfg = MccConfig::default();
        assert_eq!(AlignedPair::new(&a, &b, &cfg).included(), 2);
        a.vector = Some("100 000 000".parse().unwrap());
        b.vector = Some("100 000 000".parse().unwrap());
        let pair = AlignedPair::new(&a, &b, &cfg);
        assert_eq!(pair.rows.iter().position(|&r| r), Some(0));
        assert_eq!(pair.included(), 1);
        let loose = MccConfig {
            rows: RowFilter::Variance,
            ..cfg
        };
        assert_eq!(AlignedPair::new(&a, &b, &loose).included(), 2);
    }
}
