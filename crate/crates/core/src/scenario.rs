//! Indoor deployment geometry, blocker statistics, link non-blockage
//! probabilities and a Monte-Carlo mobility simulator for the blockage model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ceiling-mounted APs and ground-level users in a rectangular room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    /// (width, depth) in m.
    pub room: (f64, f64),
    pub ap_positions: Vec<(f64, f64)>,
    pub user_positions: Vec<(f64, f64)>,
    /// AP height, m.
    pub h_a: f64,
    /// User device height, m.
    pub h_u: f64,
}

impl Deployment {
    pub fn validate(&self) -> Result<()> {
        let (w, d) = self.room;
        if !(w > 0.0 && d > 0.0) {
            return Err(Error::InvalidInput(format!("room must have positive size, got {w}x{d}")));
        }
        if !(self.h_a > self.h_u) || !(self.h_u >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need h_A > h_U >= 0, got h_A={} h_U={}",
                self.h_a, self.h_u
            )));
        }
        if self.ap_positions.is_empty() || self.user_positions.is_empty() {
            return Err(Error::InvalidInput("need at least one AP and one user".into()));
        }
        let inside = |&(x, y): &(f64, f64)| (0.0..=w).contains(&x) && (0.0..=d).contains(&y);
        if let Some(p) = self.ap_positions.iter().chain(&self.user_positions).find(|p| !inside(p)) {
            return Err(Error::InvalidInput(format!("position {p:?} lies outside the room")));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    /// Horizontal distance between user `i` and AP `j`.
    pub fn horizontal_distance(&self, i: usize, j: usize) -> f64 {
        let (ux, uy) = self.user_positions[i];
        let (ax, ay) = self.ap_positions[j];
        (ux - ax).hypot(uy - ay)
    }
}

/// Cylindrical blockers moving on the floor, placed by a Poisson point process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockerModel {
    /// Density, 1/m².
    pub lambda: f64,
    /// Radius, m.
    pub radius: f64,
    /// Height, m.
    pub height: f64,
    /// Speed, m/s.
    pub speed: f64,
}

impl Default for BlockerModel {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            radius: 0.3,
            height: 1.7,
            speed: 1.0,
        }
    }
}

impl BlockerModel {
    pub fn validate(&self, h_a: f64, h_u: f64) -> Result<()> {
        if !(h_a > self.height && self.height > h_u) {
            return Err(Error::InvalidInput(format!(
                "heights must satisfy h_A > h_B > h_U, got {h_a} > {} > {h_u}",
                self.height
            )));
        }
        if !(self.lambda >= 0.0) || !(self.radius > 0.0) || !(self.speed >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "blocker density and speed must be >= 0 and radius > 0 (lambda={}, r={}, v={})",
                self.lambda, self.radius, self.speed
            )));
        }
        Ok(())
    }

    /// Fraction of the horizontal link length over which the ray is below the
    /// blocker top.
    pub fn shadow_ratio(&self, h_a: f64, h_u: f64) -> f64 {
        (self.height - h_u) / (h_a - h_u)
    }

    /// `ζ = exp(−2 λ r_B²)`.
    pub fn zeta(&self) -> f64 {
        (-2.0 * self.lambda * self.radius * self.radius).exp()
    }

    /// `η = 2 λ r_B (h_B − h_U)/(h_A − h_U)`, 1/m.
    pub fn eta(&self, h_a: f64, h_u: f64) -> f64 {
        2.0 * self.lambda * self.radius * self.shadow_ratio(h_a, h_u)
    }

    /// Non-blockage probability `ζ·exp(−η r)` of a link with horizontal length `r`.
    pub fn non_blockage(&self, h_a: f64, h_u: f64, r: f64) -> f64 {
        self.zeta() * (-self.eta(h_a, h_u) * r).exp()
    }
}

/// Per-link geometry and non-blockage probabilities, row-major `I × J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTable {
    pub num_users: usize,
    pub num_aps: usize,
    /// Horizontal distances, m.
    pub r: Vec<f64>,
    /// 3-D distances, m.
    pub d: Vec<f64>,
    pub p_nb: Vec<f64>,
}

impl LinkTable {
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.num_aps + j
    }

    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.r[self.idx(i, j)]
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    pub fn p_nb(&self, i: usize, j: usize) -> f64 {
        self.p_nb[self.idx(i, j)]
    }

    pub fn d_max(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Builds a table directly from distances and probabilities (mainly for
    /// hand-made test scenarios).
    pub fn from_parts(num_users: usize, num_aps: usize, d: Vec<f64>, p_nb: Vec<f64>, h_diff: f64) -> Result<Self> {
        let n = num_users * num_aps;
        if d.len() != n || p_nb.len() != n || n == 0 {
            return Err(Error::InvalidInput(format!(
                "link table needs {n} entries, got d={} p_nb={}",
                d.len(),
                p_nb.len()
            )));
        }
        if d.iter().any(|&v| !(v > 0.0)) || p_nb.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidInput("distances must be > 0 and p_nb in (0, 1]".into()));
        }
        let r = d
            .iter()
            .map(|&v| (v * v - h_diff * h_diff).max(0.0).sqrt())
            .collect();
        Ok(Self {
            num_users,
            num_aps,
            r,
            d,
            p_nb,
        })
    }
}

/// Computes distances and non-blockage probabilities for every user–AP pair.
pub fn build_links(dep: &Deployment, blk: &BlockerModel) -> Result<LinkTable> {
    dep.validate()?;
    blk.validate(dep.h_a, dep.h_u)?;
    let (ni, nj) = (dep.num_users(), dep.num_aps());
    let dh = dep.h_a - dep.h_u;
    let mut r = Vec::with_capacity(ni * nj);
    let mut d = Vec::with_capacity(ni * nj);
    let mut p = Vec::with_capacity(ni * nj);
    for i in 0..ni {
        for j in 0..nj {
            let rij = dep.horizontal_distance(i, j);
            r.push(rij);
            d.push(dh.hypot(rij));
            p.push(blk.non_blockage(dep.h_a, dep.h_u, rij));
        }
    }
    Ok(LinkTable {
        num_users: ni,
        num_aps: nj,
        r,
        d,
        p_nb: p,
    })
}

/// Parameters of a generated deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    pub room: (f64, f64),
    pub num_users: usize,
    /// AP offset from the room center along each axis, m.
    pub ap_offset: f64,
    /// Explicit AP positions; replaces the symmetric grid when set.
    pub ap_positions: Option<Vec<(f64, f64)>>,
    /// Explicit user positions; replaces the random draw when set.
    pub user_positions: Option<Vec<(f64, f64)>>,
    pub h_a: f64,
    pub h_u: f64,
    pub seed: u64,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            room: (20.0, 20.0),
            num_users: 6,
            ap_offset: 5.0,
            ap_positions: None,
            user_positions: None,
            h_a: 3.0,
            h_u: 1.3,
            seed: 1,
        }
    }
}

/// Four APs on a symmetric grid around the room center (unless overridden)
/// and users drawn uniformly over the floor from `seed`.
pub fn standard_deployment(cfg: &DeploymentConfig) -> Result<Deployment> {
    let (w, d) = cfg.room;
    let aps = match &cfg.ap_positions {
        Some(p) => p.clone(),
        None => {
            let (cx, cy, o) = (w / 2.0, d / 2.0, cfg.ap_offset);
            vec![(cx - o, cy - o), (cx + o, cy - o), (cx - o, cy + o), (cx + o, cy + o)]
        }
    };
    let users = match &cfg.user_positions {
        Some(p) => p.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..cfg.num_users)
                .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..d)))
                .collect()
        }
    };
    let dep = Deployment {
        room: cfg.room,
        ap_positions: aps,
        user_positions: users,
        h_a: cfg.h_a,
        h_u: cfg.h_u,
    };
    dep.validate()?;
    Ok(dep)
}

/// Settings of the mobility simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockageSimConfig {
    /// Simulated time per replica, s.
    pub horizon: f64,
    /// Time step, s; `None` uses `r_B / (10 v_B)`.
    pub dt: Option<f64>,
    /// Independent blocker populations, each simulated over `horizon`.
    pub replicas: usize,
    /// Mean time between direction changes, s; `None` keeps every blocker on
    /// its initial heading.
    pub mean_leg: Option<f64>,
    pub seed: u64,
}

impl Default for BlockageSimConfig {
    fn default() -> Self {
        Self {
            horizon: 200.0,
            dt: None,
            replicas: 128,
            mean_leg: Some(5.0),
            seed: 1,
        }
    }
}

/// Monte-Carlo estimate of a link's unblocked time fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageEstimate {
    pub fraction: f64,
    /// 95 % confidence half-width across replicas.
    pub half_width: f64,
    pub replicas: usize,
    pub steps_per_replica: usize,
    /// Analytic non-blockage probability of the same link.
    pub analytic: f64,
}

struct Blocker {
    x: f64,
    y: f64,
    heading: f64,
    leg_left: f64,
}

/// Simulates blockers moving under a random-direction model on a toroidal
/// floor and measures how often the link `(user, ap)` stays unblocked.
///
/// A blocker shadows the ray when its center falls in the rectangle spanned
/// along the link by `(−r_B/2, r·τ + r_B/2)` and across it by `(−r_B, r_B)`,
/// where `τ` is the shadow ratio; the rectangle area matches the expected
/// blocker count of the analytic model.
pub fn simulate_blockage(
    dep: &Deployment,
    blk: &BlockerModel,
    link: (usize, usize),
    cfg: &BlockageSimConfig,
) -> Result<BlockageEstimate> {
    dep.validate()?;
    blk.validate(dep.h_a, dep.h_u)?;
    let (i, j) = link;
    if i >= dep.num_users() || j >= dep.num_aps() {
        return Err(Error::InvalidInput(format!("link ({i}, {j}) out of range")));
    }
    if cfg.replicas < 2 || !(cfg.horizon > 0.0) {
        return Err(Error::InvalidInput("need at least 2 replicas and a positive horizon".into()));
    }
    let r = dep.horizontal_distance(i, j);
    if !(r > 1e-9) {
        return Err(Error::Domain(format!(
            "link ({i}, {j}) has zero horizontal length; its direction is undefined"
        )));
    }
    let analytic = blk.non_blockage(dep.h_a, dep.h_u, r);
    let (w, depth) = dep.room;
    let tau = blk.shadow_ratio(dep.h_a, dep.h_u);
    let s_lo = -0.5 * blk.radius;
    let s_hi = r * tau + 0.5 * blk.radius;
    if s_hi.hypot(blk.radius) >= 0.5 * w.min(depth) {
        return Err(Error::Precondition(format!(
            "shadow region of link ({i}, {j}) does not fit in half the room"
        )));
    }

    let dt = match cfg.dt {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(Error::InvalidInput(format!("dt must be positive, got {v}"))),
        None if blk.speed > 0.0 => blk.radius / (10.0 * blk.speed),
        None => cfg.horizon,
    };
    let steps = ((cfg.horizon / dt).round() as usize).max(1);

    if blk.lambda == 0.0 {
        return Ok(BlockageEstimate {
            fraction: 1.0,
            half_width: 0.0,
            replicas: cfg.replicas,
            steps_per_replica: steps,
            analytic,
        });
    }

    let (ux, uy) = dep.user_positions[i];
    let (ax, ay) = dep.ap_positions[j];
    let (ex, ey) = ((ax - ux) / r, (ay - uy) / r);
    let wrap = |v: f64, l: f64| v - l * (v / l).round();
    let blocked = |b: &Blocker| {
        let dx = wrap(b.x - ux, w);
        let dy = wrap(b.y - uy, depth);
        let s = dx * ex + dy * ey;
        let l = dx * ey - dy * ex;
        l.abs() < blk.radius && s > s_lo && s < s_hi
    };
    let leg = cfg.mean_leg.map(|m| Exp::new(1.0 / m)).transpose().map_err(|e| {
        Error::InvalidInput(format!("mean leg time must be positive: {e}"))
    })?;
    let mean_count = blk.lambda * w * depth;
    let count = Poisson::new(mean_count)
        .map_err(|e| Error::InvalidInput(format!("blocker count: {e}")))?;

    let fractions: Vec<f64> = (0..cfg.replicas)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(rep as u64 + 1);
            let n = count.sample(&mut rng) as usize;
            let mut pop: Vec<Blocker> = (0..n)
                .map(|_| Blocker {
                    x: rng.random_range(0.0..w),
                    y: rng.random_range(0.0..depth),
                    heading: rng.random_range(0.0..std::f64::consts::TAU),
                    leg_left: leg.map(|e| e.sample(&mut rng)).unwrap_or(f64::INFINITY),
                })
                .collect();
            let mut clear = 0usize;
            for _ in 0..steps {
                if !pop.iter().any(blocked) {
                    clear += 1;
                }
                for b in &mut pop {
                    b.x = (b.x + blk.speed * dt * b.heading.cos()).rem_euclid(w);
                    b.y = (b.y + blk.speed * dt * b.heading.sin()).rem_euclid(depth);
                    b.leg_left -= dt;
                    if b.leg_left <= 0.0 {
                        b.heading = rng.random_range(0.0..std::f64::consts::TAU);
                        b.leg_left = leg.map(|e| e.sample(&mut rng)).unwrap_or(f64::INFINITY);
                    }
                }
            }
            clear as f64 / steps as f64
        })
        .collect();

    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BlockageEstimate {
        fraction: mean,
        half_width: 1.96 * (var / n).sqrt(),
        replicas: cfg.replicas,
        steps_per_replica: steps,
        analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table2_blockers() -> BlockerModel {
        BlockerModel::default()
    }

    #[test]
    fn reference_link_probability() {
        let b = table2_blockers();
        assert_relative_eq!(b.zeta(), 0.964640, max_relative = 1e-5);
        assert_relative_eq!(b.eta(3.0, 1.3), 0.0282353, max_relative = 1e-5);
        assert_relative_eq!(b.non_blockage(3.0, 1.3, 5.0), 0.8376, max_relative = 1e-4);
        assert_eq!(b.non_blockage(3.0, 1.3, 0.0), b.zeta());
    }

    #[test]
    fn no_blockers_means_always_clear() {
        let mut b = table2_blockers();
        b.lambda = 0.0;
        let dep = standard_deployment(&DeploymentConfig::default()).unwrap();
        let links = build_links(&dep, &b).unwrap();
        assert!(links.p_nb.iter().all(|&p| p == 1.0));
        let est = simulate_blockage(&dep, &b, (0, 0), &BlockageSimConfig::default()).unwrap();
        assert_eq!(est.fraction, 1.0);
    }

    #[test]
    fn height_ordering_is_enforced() {
        let mut b = table2_blockers();
        b.height = 3.5;
        let dep = standard_deployment(&DeploymentConfig::default()).unwrap();
        assert!(matches!(build_links(&dep, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn standard_layout_and_reproducibility() {
        let cfg = DeploymentConfig::default();
        let a = standard_deployment(&cfg).unwrap();
        let b = standard_deployment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_aps(), 4);
        assert_eq!(a.h_a, 3.0);
        assert_eq!(a.h_u, 1.3);
        assert!(a.ap_positions.contains(&(5.0, 5.0)));
        assert!(a.ap_positions.contains(&(15.0, 15.0)));
    }

    #[test]
    fn distances_bounded_by_room_diagonal() {
        let diag = 20f64.hypot(20.0);
        for seed in 0..1000 {
            let dep = standard_deployment(&DeploymentConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            let links = build_links(&dep, &table2_blockers()).unwrap();
            assert!(links.r.iter().all(|&r| r <= diag));
            assert!(links.d.iter().all(|&d| d >= dep.h_a - dep.h_u));
        }
    }

    #[test]
    fn degenerate_link_is_rejected() {
        let dep = standard_deployment(&DeploymentConfig {
            user_positions: Some(vec![(5.0, 5.0)]),
            ..Default::default()
        })
        .unwrap();
        let err = simulate_blockage(&dep, &table2_blockers(), (0, 0), &BlockageSimConfig::default());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn simulation_is_deterministic() {
        let dep = standard_deployment(&DeploymentConfig {
            user_positions: Some(vec![(10.0, 5.0)]),
            ..Default::default()
        })
        .unwrap();
        let cfg = BlockageSimConfig {
            horizon: 20.0,
            replicas: 8,
            ..Default::default()
        };
        let a = simulate_blockage(&dep, &table2_blockers(), (0, 0), &cfg).unwrap();
        let b = simulate_blockage(&dep, &table2_blockers(), (0, 0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn product_form(r1 in 0.0..15.0f64, r2 in 0.0..15.0f64) {
            let b = table2_blockers();
            let lhs = b.non_blockage(3.0, 1.3, r1 + r2) * b.zeta();
            let rhs = b.non_blockage(3.0, 1.3, r1) * b.non_blockage(3.0, 1.3, r2);
            prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs);
        }

        #[test]
        fn p_nb_decreasing_in_range(r in 0.0..25.0f64, dr in 1e-3..5.0f64) {
            let b = table2_blockers();
            prop_assert!(b.non_blockage(3.0, 1.3, r + dr) < b.non_blockage(3.0, 1.3, r));
        }
    }
}
