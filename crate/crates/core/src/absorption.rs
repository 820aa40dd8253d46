//! Molecular absorption: tabulated coefficients, the exponential surrogate
//! `K̂(f) = exp(σ1 + σ2·f) + σ3`, slope-region detection and LoS path gain.
//!
//! Frequencies are in Hz, absorption coefficients in 1/m and distances in m.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::spreading_constant;

const BUNDLED_TABLE: &str = include_str!("../data/k_abs_0p98_1p10_thz.csv");

/// Smallest exponential amplitude kept by a degenerate fit (`exp(σ1)` floor).
pub const AMPLITUDE_FLOOR: f64 = 1e-300;

/// Default transmission-window threshold on K, 1/m.
pub const DEFAULT_TW_THRESHOLD: f64 = 1.0;

/// Ordered `(frequency, coefficient)` samples of K(f).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionTable {
    freqs: Vec<f64>,
    coeffs: Vec<f64>,
}

impl AbsorptionTable {
    /// Builds a table, checking that frequencies are strictly increasing,
    /// coefficients are non-negative and at least three samples exist.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "absorption table needs at least 3 samples, got {}",
                samples.len()
            )));
        }
        let mut freqs = Vec::with_capacity(samples.len());
        let mut coeffs = Vec::with_capacity(samples.len());
        for (k, &(f, c)) in samples.iter().enumerate() {
            if !f.is_finite() || !c.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite sample at row {k}")));
            }
            if c < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "negative absorption coefficient {c} at {f} Hz"
                )));
            }
            if let Some(&prev) = freqs.last() {
                if f <= prev {
                    return Err(Error::InvalidInput(format!(
                        "frequencies must be strictly increasing ({prev} then {f})"
                    )));
                }
            }
            freqs.push(f);
            coeffs.push(c);
        }
        Ok(Self { freqs, coeffs })
    }

    /// Parses the `f_hz,k_per_m` CSV format.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == "f_hz,k_per_m" => {}
            Some((_, header)) => {
                return Err(Error::InvalidInput(format!(
                    "expected header `f_hz,k_per_m`, found `{}`",
                    header.trim()
                )))
            }
            None => return Err(Error::InsufficientData("empty absorption table".into())),
        }
        let mut samples = Vec::new();
        for (n, line) in lines {
            let mut cols = line.split(',');
            let (Some(f), Some(k), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::InvalidInput(format!("line {}: expected two columns", n + 1)));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))
            };
            samples.push((parse(f)?, parse(k)?));
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("f_hz,k_per_m\n");
        for (f, k) in self.samples() {
            let _ = writeln!(out, "{f},{k:e}");
        }
        out
    }

    /// Table shipped with the crate: 0.98–1.10 THz at 0.25 GHz spacing. The
    /// 1.025–1.075 THz segment follows the reference exponential fit exactly;
    /// the flanks are synthetic so that the window edges (K = 1 1/m) sit at
    /// 0.9905 THz and 1.087 THz with the absorption minimum at 1.025 THz.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_TABLE).expect("bundled absorption table is valid")
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.freqs[0], *self.freqs.last().unwrap())
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.freqs.iter().copied().zip(self.coeffs.iter().copied())
    }

    /// Samples whose frequency lies in `[lo, hi]` (a relative slack of 1e-12
    /// absorbs decimal round-off in band edges).
    pub fn samples_in(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let slack = 1e-12 * hi.abs().max(lo.abs());
        self.samples()
            .filter(|&(f, _)| f >= lo - slack && f <= hi + slack)
            .collect()
    }

    /// Linear interpolation of K at `f`.
    pub fn coefficient(&self, f: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * hi;
        if !(f >= lo - slack && f <= hi + slack) {
            return Err(Error::Extrapolation(format!(
                "{f} Hz outside table range [{lo}, {hi}] Hz"
            )));
        }
        let f = f.clamp(lo, hi);
        let idx = self.freqs.partition_point(|&x| x <= f);
        if idx == 0 {
            return Ok(self.coeffs[0]);
        }
        if idx >= self.freqs.len() {
            return Ok(*self.coeffs.last().unwrap());
        }
        let (f0, f1) = (self.freqs[idx - 1], self.freqs[idx]);
        let (k0, k1) = (self.coeffs[idx - 1], self.coeffs[idx]);
        Ok(k0 + (k1 - k0) * (f - f0) / (f1 - f0))
    }
}

/// Direction in which the surrogate grows along the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeDirection {
    /// K increasing in f (positive absorption coefficient slope region).
    Increasing,
    /// K decreasing in f; fitted on the reflected axis `mirror − f`.
    Decreasing,
}

/// Fitted exponential surrogate of K(f).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionFit {
    pub sigma1: f64,
    /// 1/Hz along the fit axis; positive for a non-degenerate fit.
    pub sigma2: f64,
    /// 1/m
    pub sigma3: f64,
    pub fit_band: (f64, f64),
    /// RMS residual of the fit over the samples, 1/m.
    pub residual: f64,
    pub direction: SlopeDirection,
    /// Reflection point used when `direction` is `Decreasing`; the fit axis is
    /// `mirror_hz − f`.
    pub mirror_hz: f64,
    /// Set when a constant model explains the samples at least as well as the
    /// exponential one.
    pub degenerate: bool,
}

impl AbsorptionFit {
    /// Reference surrogate for 1.025–1.075 THz (standard atmosphere, 10 % humidity).
    pub fn reference_1thz() -> Self {
        Self {
            sigma1: -90.996,
            sigma2: 8.326e-11,
            sigma3: 0.0452,
            fit_band: (1.025e12, 1.075e12),
            residual: 0.0,
            direction: SlopeDirection::Increasing,
            mirror_hz: 0.0,
            degenerate: false,
        }
    }

    /// Coordinate along which the exponential grows.
    pub fn axis(&self, f: f64) -> f64 {
        match self.direction {
            SlopeDirection::Increasing => f,
            SlopeDirection::Decreasing => self.mirror_hz - f,
        }
    }

    /// d(axis)/df: +1 or −1.
    pub fn axis_sign(&self) -> f64 {
        match self.direction {
            SlopeDirection::Increasing => 1.0,
            SlopeDirection::Decreasing => -1.0,
        }
    }

    /// Exponential part `exp(σ1 + σ2·axis(f))`.
    pub fn exp_term(&self, f: f64) -> f64 {
        (self.sigma1 + self.sigma2 * self.axis(f)).exp()
    }

    pub fn k_hat(&self, f: f64) -> f64 {
        self.exp_term(f) + self.sigma3
    }

    /// dK̂/df
    pub fn dk_df(&self, f: f64) -> f64 {
        self.axis_sign() * self.sigma2 * self.exp_term(f)
    }

    /// d²K̂/df²
    pub fn d2k_df2(&self, f: f64) -> f64 {
        self.sigma2 * self.sigma2 * self.exp_term(f)
    }
}

/// Evaluates the surrogate `exp(σ1 + σ2·f) + σ3`.
pub fn k_hat(fit: &AbsorptionFit, f: f64) -> f64 {
    fit.k_hat(f)
}

/// Fits `exp(σ1 + σ2·u) + σ3` to the table samples inside `band`, where `u`
/// is `f` for an increasing region and `f_lo + f_hi − f` for a decreasing one.
///
/// σ3 is searched on `[0, min K)` by golden section, each candidate seeded by a
/// log-linear regression of `ln(K − σ3)`; the best candidate is refined by
/// damped Gauss-Newton on all three parameters.
pub fn fit_exponential(
    table: &AbsorptionTable,
    band: (f64, f64),
    direction: SlopeDirection,
) -> Result<AbsorptionFit> {
    let (lo, hi) = band;
    let (t_lo, t_hi) = table.range();
    let slack = 1e-12 * t_hi;
    if !(lo < hi) || lo < t_lo - slack || hi > t_hi + slack {
        return Err(Error::Precondition(format!(
            "fit band [{lo}, {hi}] Hz must be a non-empty sub-range of [{t_lo}, {t_hi}] Hz"
        )));
    }
    let raw = table.samples_in(lo, hi);
    if raw.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples in fit band, need at least 3",
            raw.len()
        )));
    }
    let mirror = match direction {
        SlopeDirection::Increasing => 0.0,
        SlopeDirection::Decreasing => lo + hi,
    };
    let mut pts: Vec<(f64, f64)> = raw
        .iter()
        .map(|&(f, k)| match direction {
            SlopeDirection::Increasing => (f, k),
            SlopeDirection::Decreasing => (mirror - f, k),
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    if let Some(at) = first_descent(&pts) {
        return Err(Error::RegionMismatch(format!(
            "K is not {} across the band (drop near {} Hz)",
            match direction {
                SlopeDirection::Increasing => "increasing",
                SlopeDirection::Decreasing => "decreasing",
            },
            match direction {
                SlopeDirection::Increasing => at,
                SlopeDirection::Decreasing => mirror - at,
            }
        )));
    }

    let k_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let k_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let n = pts.len() as f64;
    let k_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let const_sse: f64 = pts.iter().map(|p| (p.1 - k_mean).powi(2)).sum();

    let degenerate_fit = |sse: f64| AbsorptionFit {
        sigma1: AMPLITUDE_FLOOR.ln(),
        sigma2: 0.0,
        sigma3: k_mean,
        fit_band: band,
        residual: (sse / n).sqrt(),
        direction,
        mirror_hz: mirror,
        degenerate: true,
    };

    if k_max - k_min <= 1e-14 * k_max.abs().max(1e-300) {
        return Ok(degenerate_fit(const_sse));
    }

    // Normalized axis: tau in [-1, 1].
    let u_c = 0.5 * (pts[0].0 + pts[pts.len() - 1].0);
    let u_s = 0.5 * (pts[pts.len() - 1].0 - pts[0].0);
    let taus: Vec<f64> = pts.iter().map(|p| (p.0 - u_c) / u_s).collect();
    let ks: Vec<f64> = pts.iter().map(|p| p.1).collect();

    let sse = |ln_a: f64, beta: f64, c: f64| -> f64 {
        taus.iter()
            .zip(&ks)
            .map(|(&t, &k)| {
                let r = (ln_a + beta * t).exp() + c - k;
                r * r
            })
            .sum()
    };

    // Log-linear seed for a fixed offset; returns (ln A, beta, sse).
    let seed = |c: f64| -> Option<(f64, f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (&t, &k) in taus.iter().zip(&ks) {
            let d = k - c;
            if d <= 0.0 {
                return None;
            }
            let y = d.ln();
            sx += t;
            sy += y;
            sxx += t * t;
            sxy += t * y;
        }
        let den = n * sxx - sx * sx;
        if den.abs() < 1e-300 {
            return None;
        }
        let beta = (n * sxy - sx * sy) / den;
        let ln_a = (sy - beta * sx) / n;
        Some((ln_a, beta, sse(ln_a, beta, c)))
    };
    let seed_cost = |c: f64| seed(c).map(|s| s.2).unwrap_or(f64::INFINITY);

    // Golden-section search for the offset.
    let c_hi = k_min * (1.0 - 1e-12);
    let (mut a, mut b) = (0.0_f64, c_hi);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = seed_cost(x1);
    let mut f2 = seed_cost(x2);
    for _ in 0..200 {
        if (b - a) <= 1e-15 * k_max {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = seed_cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = seed_cost(x2);
        }
    }
    let mut best_c = 0.5 * (a + b);
    let mut candidates = vec![best_c, 0.0];
    candidates.retain(|c| seed(*c).is_some());
    let (mut ln_a, mut beta, mut cost) = (0.0, 0.0, f64::INFINITY);
    for c in candidates {
        if let Some((la, be, s)) = seed(c) {
            if s < cost {
                ln_a = la;
                beta = be;
                cost = s;
                best_c = c;
            }
        }
    }
    if !cost.is_finite() {
        return Err(Error::Numerical("log-linear seeding failed".into()));
    }
    let mut c = best_c;

    // Damped Gauss-Newton (Levenberg-Marquardt) on (ln A, beta, c), c >= 0.
    let mut damping = 1e-3;
    for _ in 0..200 {
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (&t, &k) in taus.iter().zip(&ks) {
            let e = (ln_a + beta * t).exp();
            let r = e + c - k;
            let j = [e, e * t, 1.0];
            for p in 0..3 {
                jtr[p] += j[p] * r;
                for q in 0..3 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for (p, row) in m.iter_mut().enumerate() {
                row[p] += damping * jtj[p][p].max(1e-300);
            }
            let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                damping *= 10.0;
                continue;
            };
            let cand = (ln_a + step[0], beta + step[1], (c + step[2]).max(0.0));
            let cand_cost = sse(cand.0, cand.1, cand.2);
            if cand_cost.is_finite() && cand_cost < cost {
                ln_a = cand.0;
                beta = cand.1;
                c = cand.2;
                let rel = (cost - cand_cost) / cost.max(1e-300);
                cost = cand_cost;
                damping = (damping * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }

    if const_sse <= cost {
        return Ok(degenerate_fit(const_sse));
    }

    let sigma2 = beta / u_s;
    let sigma1 = ln_a - sigma2 * u_c;
    Ok(AbsorptionFit {
        sigma1: sigma1.max(AMPLITUDE_FLOOR.ln()),
        sigma2,
        sigma3: c,
        fit_band: band,
        residual: (cost / n).sqrt(),
        direction,
        mirror_hz: mirror,
        degenerate: false,
    })
}

/// Location of the first descent along the axis, if any. Short tables are
/// checked sample by sample; longer ones by the means of four consecutive
/// quarters, which tolerates measurement noise while rejecting a slope change.
fn first_descent(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 8 {
        return pts.windows(2).find(|w| w[1].1 < w[0].1).map(|w| w[1].0);
    }
    let n = pts.len();
    let quarter = |q: usize| {
        let seg = &pts[q * n / 4..(q + 1) * n / 4];
        let mean = seg.iter().map(|p| p.1).sum::<f64>() / seg.len() as f64;
        (seg[0].0, mean)
    };
    let means: Vec<(f64, f64)> = (0..4).map(quarter).collect();
    means.windows(2).find(|w| w[1].1 < w[0].1).map(|w| w[1].0)
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if !d.is_finite() || d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

/// LoS power gain `|H(f,d)|² = (c/(4π f d))² · exp(−K d)`.
pub fn channel_power_gain(f: f64, d: f64, k: f64) -> Result<f64> {
    if !(f > 0.0) || !(d > 0.0) {
        return Err(Error::Domain(format!(
            "frequency and distance must be positive (f={f}, d={d})"
        )));
    }
    if !(k >= 0.0) {
        return Err(Error::Domain(format!("absorption coefficient must be >= 0, got {k}")));
    }
    Ok(spreading_constant() / (f * d).powi(2) * (-k * d).exp())
}

/// Anything that can report K at a frequency.
pub trait AbsorptionSource {
    fn coefficient_at(&self, f: f64) -> Result<f64>;
}

impl AbsorptionSource for AbsorptionTable {
    fn coefficient_at(&self, f: f64) -> Result<f64> {
        self.coefficient(f)
    }
}

impl AbsorptionSource for AbsorptionFit {
    fn coefficient_at(&self, f: f64) -> Result<f64> {
        Ok(self.k_hat(f))
    }
}

/// Band-mean path gain `(1/B) ∫ |H(f,d)|² df` over `[f_c − B/2, f_c + B/2]`,
/// integrated by adaptive Simpson with absolute tolerance `1e-4 ·` the
/// center-frequency gain.
pub fn band_averaged_gain(
    src: &dyn AbsorptionSource,
    f_center: f64,
    bandwidth: f64,
    d: f64,
) -> Result<f64> {
    band_averaged_gain_with_tol(src, f_center, bandwidth, d, 1e-4)
}

/// As [`band_averaged_gain`] with a caller-chosen tolerance relative to the
/// center-frequency gain.
pub fn band_averaged_gain_with_tol(
    src: &dyn AbsorptionSource,
    f_center: f64,
    bandwidth: f64,
    d: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let (a, b) = (f_center - 0.5 * bandwidth, f_center + 0.5 * bandwidth);
    let center = channel_power_gain(f_center, d, src.coefficient_at(f_center)?)?;
    let err: std::cell::RefCell<Option<Error>> = Default::default();
    let mut integrand = |f: f64| -> f64 {
        match src
            .coefficient_at(f)
            .and_then(|k| channel_power_gain(f, d, k))
        {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    // Probe the edges first so that range errors surface before integration.
    let fa = integrand(a);
    let fb = integrand(b);
    if let Some(e) = err.borrow_mut().take() {
        return Err(e);
    }
    let fm = integrand(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * center * (b - a);
    let integral = adaptive_simpson(&mut integrand, a, b, fa, fm, fb, whole, tol, 50);
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(integral / bandwidth)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Kind of a frequency region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    /// Inside a transmission window, K increasing.
    Pacsr,
    /// Inside a transmission window, K decreasing.
    Nacsr,
    /// Absorption-coefficient peak region (K at or above the threshold).
    Acpr,
    /// Inside a transmission window with flat K.
    TwFlat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeRegion {
    pub kind: RegionKind,
    pub band: (f64, f64),
}

impl SlopeRegion {
    pub fn width(&self) -> f64 {
        self.band.1 - self.band.0
    }
}

/// Partitions the table range into maximal runs of equal region kind. Each
/// sample interval is labelled by the sign of its finite-difference slope and
/// by whether K at its midpoint is below `k_tw_threshold`.
pub fn detect_regions(table: &AbsorptionTable, k_tw_threshold: f64) -> Vec<SlopeRegion> {
    let f = table.frequencies();
    let k = table.coefficients();
    let scale = k.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut regions: Vec<SlopeRegion> = Vec::new();
    for i in 0..f.len() - 1 {
        let mid = 0.5 * (k[i] + k[i + 1]);
        let dk = k[i + 1] - k[i];
        let kind = if mid >= k_tw_threshold {
            RegionKind::Acpr
        } else if dk.abs() <= 1e-15 * scale {
            RegionKind::TwFlat
        } else if dk > 0.0 {
            RegionKind::Pacsr
        } else {
            RegionKind::Nacsr
        };
        match regions.last_mut() {
            Some(last) if last.kind == kind => last.band.1 = f[i + 1],
            _ => regions.push(SlopeRegion {
                kind,
                band: (f[i], f[i + 1]),
            }),
        }
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(fit: &AbsorptionFit, lo: f64, hi: f64, n: usize) -> AbsorptionTable {
        let samples = (0..n)
            .map(|i| {
                let f = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (f, fit.k_hat(f))
            })
            .collect();
        AbsorptionTable::new(samples).unwrap()
    }

    #[test]
    fn recovers_reference_parameters_from_noise_free_table() {
        let truth = AbsorptionFit::reference_1thz();
        let table = synthetic(&truth, 1.025e12, 1.075e12, 101);
        let fit = fit_exponential(&table, (1.025e12, 1.075e12), SlopeDirection::Increasing).unwrap();
        assert!(!fit.degenerate);
        assert_relative_eq!(fit.sigma1, truth.sigma1, max_relative = 1e-3);
        assert_relative_eq!(fit.sigma2, truth.sigma2, max_relative = 1e-3);
        assert_relative_eq!(fit.sigma3, truth.sigma3, max_relative = 1e-3);
        assert!(fit.residual < 1e-6);
    }

    #[test]
    fn noisy_table_recovers_slope_within_ten_percent() {
        let truth = AbsorptionFit::reference_1thz();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = (0..201)
            .map(|i| {
                let f = 1.025e12 + 0.05e12 * i as f64 / 200.0;
                let noise: f64 = rng.random_range(-1.0..1.0) * 0.01;
                (f, truth.k_hat(f) * (1.0 + noise))
            })
            .collect();
        let table = AbsorptionTable::new(samples).unwrap();
        let fit = fit_exponential(&table, (1.025e12, 1.075e12), SlopeDirection::Increasing).unwrap();
        assert_relative_eq!(fit.sigma2, truth.sigma2, max_relative = 0.1);
    }

    #[test]
    fn non_monotone_band_is_a_region_mismatch() {
        let table = AbsorptionTable::bundled();
        let err = fit_exponential(&table, (1.0e12, 1.05e12), SlopeDirection::Increasing).unwrap_err();
        assert!(matches!(err, Error::RegionMismatch(_)));
    }

    #[test]
    fn too_few_samples_in_band() {
        let table = AbsorptionTable::bundled();
        let err =
            fit_exponential(&table, (1.03e12, 1.0302e12), SlopeDirection::Increasing).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn constant_table_gives_degenerate_fit() {
        let samples = (0..10).map(|i| (1e12 + i as f64 * 1e9, 0.0452)).collect();
        let table = AbsorptionTable::new(samples).unwrap();
        let fit = fit_exponential(&table, (1e12, 1.009e12), SlopeDirection::Increasing).unwrap();
        assert!(fit.degenerate);
        assert!(fit.residual < 1e-15);
        assert_relative_eq!(fit.k_hat(1.005e12), 0.0452, max_relative = 1e-12);
        assert!(fit.exp_term(1.005e12) <= AMPLITUDE_FLOOR * (1.0 + 1e-9));
    }

    #[test]
    fn bundled_table_reproduces_reference_fit() {
        let table = AbsorptionTable::bundled();
        let fit = fit_exponential(&table, (1.025e12, 1.075e12), SlopeDirection::Increasing).unwrap();
        let truth = AbsorptionFit::reference_1thz();
        assert_relative_eq!(fit.sigma2, truth.sigma2, max_relative = 1e-3);
        assert_relative_eq!(fit.sigma3, truth.sigma3, max_relative = 1e-3);
    }

    #[test]
    fn decreasing_region_fit_mirrors_axis() {
        let table = AbsorptionTable::bundled();
        let fit = fit_exponential(&table, (0.9905e12, 1.025e12), SlopeDirection::Decreasing).unwrap();
        assert!(fit.sigma2 > 0.0);
        assert!(fit.k_hat(0.995e12) > fit.k_hat(1.02e12));
        for f in [0.995e12, 1.005e12, 1.015e12] {
            let k = table.coefficient(f).unwrap();
            assert_relative_eq!(fit.k_hat(f), k, max_relative = 1e-3);
        }
    }

    #[test]
    fn k_hat_reference_values() {
        let fit = AbsorptionFit::reference_1thz();
        assert_relative_eq!(k_hat(&fit, 1.05e12), 0.0733, max_relative = 2e-3);
        assert_relative_eq!(k_hat(&fit, 1.075e12), 0.270, max_relative = 2e-3);
        let mut flat = fit;
        flat.sigma1 = f64::NEG_INFINITY;
        assert_eq!(k_hat(&flat, 1.06e12), fit.sigma3);
    }

    #[test]
    fn path_gain_values() {
        let g = channel_power_gain(1e12, 1.0, 0.0).unwrap();
        assert_relative_eq!(g, 5.70e-10, max_relative = 2e-3);
        let g2 = channel_power_gain(1e12, 2.0, 0.0).unwrap();
        assert_relative_eq!(g / g2, 4.0, max_relative = 1e-14);
        let base = channel_power_gain(1.05e12, 10.0, 0.0).unwrap();
        let lossy = channel_power_gain(1.05e12, 10.0, 0.0733).unwrap();
        assert_relative_eq!(lossy, base * (-0.733f64).exp(), max_relative = 1e-14);
        assert!(matches!(channel_power_gain(1e12, 0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(channel_power_gain(0.0, 1.0, 0.1), Err(Error::Domain(_))));
    }

    struct ConstantK(f64);
    impl AbsorptionSource for ConstantK {
        fn coefficient_at(&self, _f: f64) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn band_average_limits() {
        let fit = AbsorptionFit::reference_1thz();
        let center = channel_power_gain(1.05e12, 10.0, fit.k_hat(1.05e12)).unwrap();
        let narrow = band_averaged_gain(&fit, 1.05e12, 1e3, 10.0).unwrap();
        assert_relative_eq!(narrow, center, max_relative = 1e-6);

        // Constant K: mean of 1/f² over [a, b] is 1/(a b).
        let (fc, bw, d, k) = (1.05e12, 20e9, 7.0, 0.1);
        let avg = band_averaged_gain_with_tol(&ConstantK(k), fc, bw, d, 1e-9).unwrap();
        let (a, b) = (fc - bw / 2.0, fc + bw / 2.0);
        let analytic = spreading_constant() / (d * d) * (-k * d).exp() / (a * b);
        assert_relative_eq!(avg, analytic, max_relative = 1e-8);

        let wide = band_averaged_gain(&fit, 1.05e12, 3.4792e9, 10.0).unwrap();
        assert!(((wide - center) / center).abs() < 5e-3);
    }

    #[test]
    fn band_average_outside_table_is_extrapolation() {
        let table = AbsorptionTable::bundled();
        let err = band_averaged_gain(&table, 1.099e12, 4e9, 5.0).unwrap_err();
        assert!(matches!(err, Error::Extrapolation(_)));
    }

    #[test]
    fn regions_of_simple_shapes() {
        let inc = AbsorptionTable::new((0..20).map(|i| (i as f64 + 1.0, 0.01 * i as f64)).collect()).unwrap();
        let r = detect_regions(&inc, 1.0);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].kind, RegionKind::Pacsr);
        assert_eq!(r[0].band, (1.0, 20.0));

        let v = AbsorptionTable::new(
            (0..21).map(|i| (i as f64, 0.1 + 0.02 * (i as f64 - 10.0).abs())).collect(),
        )
        .unwrap();
        let r = detect_regions(&v, 1.0);
        let kinds: Vec<_> = r.iter().map(|x| x.kind).collect();
        assert_eq!(kinds, vec![RegionKind::Nacsr, RegionKind::Pacsr]);
        assert_eq!(r[0].band.1, 10.0);
    }

    #[test]
    fn bundled_regions_match_window_edges() {
        let table = AbsorptionTable::bundled();
        let regions = detect_regions(&table, DEFAULT_TW_THRESHOLD);
        let find = |kind| regions.iter().find(|r| r.kind == kind).copied().unwrap();
        let n = find(RegionKind::Nacsr);
        let p = find(RegionKind::Pacsr);
        let spacing = 0.25e9;
        assert!((n.band.0 - 0.9905e12).abs() <= spacing);
        assert!((n.band.1 - 1.025e12).abs() <= spacing);
        assert!((p.band.0 - 1.025e12).abs() <= spacing);
        assert!((p.band.1 - 1.087e12).abs() <= spacing);
        let (lo, hi) = table.range();
        assert_eq!(regions.first().unwrap().band.0, lo);
        assert_eq!(regions.last().unwrap().band.1, hi);
        for w in regions.windows(2) {
            assert_eq!(w[0].band.1, w[1].band.0);
        }
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let table = AbsorptionTable::bundled();
        let again = AbsorptionTable::from_csv_str(&table.to_csv_string()).unwrap();
        assert_eq!(table, again);
        assert!(AbsorptionTable::from_csv_str("freq,k\n1,2\n").is_err());
        assert!(AbsorptionTable::from_csv_str("f_hz,k_per_m\n2,1\n1,1\n3,1\n").is_err());
    }
}
