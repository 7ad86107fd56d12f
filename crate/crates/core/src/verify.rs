//! Monte Carlo and deterministic verification that a mirror scene realizes
//! its target kernel: empirical joint counts on the cosine grid, total
//! variation against the target mass matrix, the standardized
//! detailed-balance statistic, the sine-law exit marginal, two-bounce and
//! lost fractions, and a time-reversal re-trace check.
//!
//! Sampling is seeded and tracing is pure, so identical configurations
//! produce identical reports.

use crate::kernels::{CosineGrid, KernelError, ReflectionKernel, StripLayout};
use crate::tracer::{MirrorScene, PhasePoint, TraceStatus, Tracer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Draw phase points from the invariant measure restricted to the window:
/// positions uniform, angles with density `-sin(alpha)/2` via inverse CDF.
pub fn sample_lambda(window: (f64, f64), n: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = window.0 + rng.gen::<f64>() * (window.1 - window.0);
        let u: f64 = rng.gen();
        let alpha = -(2.0 * u - 1.0).clamp(-1.0, 1.0).acos();
        if alpha > -PI && alpha < 0.0 {
            out.push(PhasePoint { x, alpha });
        }
        // boundary draws (u = 0 or 1) are resampled: the domain is open
    }
    out
}

/// Joint counts of one Monte Carlo run, binned per strip over grid cells.
#[derive(Debug, Clone)]
pub struct EmpiricalKernel {
    pub grid: CosineGrid,
    pub strips: StripLayout,
    /// per strip, row-major `cells x cells` counts (entry cell, exit cell)
    pub counts: Vec<Vec<u64>>,
    pub lost: u64,
    pub total: u64,
    /// exit-angle histogram of returned rays on `marginal_grid`
    pub marginal_grid: CosineGrid,
    pub marginal: Vec<u64>,
    pub bounces_two: u64,
    pub returned: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    /// kernel grid level for joint counts
    pub level: u32,
    /// grid level for the exit-angle marginal
    pub marginal_level: u32,
    pub rays: usize,
    pub seed: u64,
    pub max_bounces: u32,
    /// rays re-traced for the reversibility check
    pub retrace: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            level: 3,
            marginal_level: 5,
            rays: 1_000_000,
            seed: 1,
            max_bounces: 10_000,
            retrace: 10_000,
        }
    }
}

/// Trace `rays` Lambda-distributed rays and bin them. Rays that do not
/// return, and returned rays whose exit leaves the entry strip (a locality
/// violation), count as lost.
pub fn empirical_kernel(
    scene: &MirrorScene,
    strips: &StripLayout,
    cfg: &VerifyConfig,
) -> EmpiricalKernel {
    let grid = CosineGrid::new(cfg.level);
    let mgrid = CosineGrid::new(cfg.marginal_level);
    let nc = grid.cells();
    let window = strips.total_span();
    let points = sample_lambda(window, cfg.rays, cfg.seed);
    let tracer = Tracer::new(scene);
    let results: Vec<(TraceStatus, u32, f64, f64)> = points
        .par_iter()
        .map(|&p| {
            let r = tracer.trace(p, cfg.max_bounces, false);
            let (y, beta) = r.exit.map_or((f64::NAN, f64::NAN), |e| (e.x, e.alpha));
            (r.status, r.bounces, y, beta)
        })
        .collect();

    let mut counts = vec![vec![0u64; nc * nc]; strips.count()];
    let mut marginal = vec![0u64; mgrid.cells()];
    let mut lost = 0u64;
    let mut bounces_two = 0u64;
    let mut returned = 0u64;
    for (i, &(status, bounces, exit_x, beta)) in results.iter().enumerate() {
        let p = points[i];
        if status != TraceStatus::Returned {
            lost += 1;
            continue;
        }
        returned += 1;
        if bounces == 2 {
            bounces_two += 1;
        }
        marginal[mgrid.cell_of(beta)] += 1;
        let strip = strips.strip_of(p.x);
        // locality: the target kernel reflects in place, so an exit outside
        // the entry strip is charged as lost
        if strip.is_none() || strips.strip_of(exit_x) != strip {
            lost += 1;
            continue;
        }
        let cell_in = grid.cell_of(p.alpha);
        let cell_out = grid.cell_of(beta);
        counts[strip.unwrap()][cell_in * nc + cell_out] += 1;
    }
    EmpiricalKernel {
        grid,
        strips: strips.clone(),
        counts,
        lost,
        total: cfg.rays as u64,
        marginal_grid: mgrid,
        marginal,
        bounces_two,
        returned,
    }
}

impl EmpiricalKernel {
    /// Total variation distance to the target kernel's joint law on the
    /// grid, with lost mass charged as full discrepancy.
    pub fn tv_to_target(&self, kernel: &ReflectionKernel) -> Result<f64, KernelError> {
        let nc = self.grid.cells();
        let w_total: f64 = (0..self.strips.count()).map(|k| self.strips.width(k)).sum();
        let mut tv = 0.0;
        for k in 0..self.strips.count() {
            let a = kernel.mass_matrix(self.grid.m, self.strips.width(k), k)?;
            if a.n != nc {
                return Err(KernelError::LevelMismatch {
                    have: self.grid.m,
                    want: self.grid.m,
                });
            }
            for i in 0..nc {
                for j in 0..nc {
                    let emp = self.counts[k][i * nc + j] as f64 / self.total as f64;
                    let tgt = a.get(i, j) / (2.0 * w_total);
                    tv += (emp - tgt).abs();
                }
            }
        }
        Ok(0.5 * tv + 0.5 * self.lost as f64 / self.total as f64)
    }

    /// Expected sampling scale of the TV statistic at this ray count:
    /// half the summed binomial standard deviations of the target cells.
    pub fn tv_sigma(&self, kernel: &ReflectionKernel) -> Result<f64, KernelError> {
        let nc = self.grid.cells();
        let w_total: f64 = (0..self.strips.count()).map(|k| self.strips.width(k)).sum();
        let mut s = 0.0;
        for k in 0..self.strips.count() {
            let a = kernel.mass_matrix(self.grid.m, self.strips.width(k), k)?;
            for i in 0..nc {
                for j in 0..nc {
                    let p = a.get(i, j) / (2.0 * w_total);
                    s += (p * (1.0 - p) / self.total as f64).sqrt();
                }
            }
        }
        Ok(0.5 * s)
    }

    /// Max standardized asymmetry of the joint counts:
    /// `|c(n,j) - c(j,n)| / sqrt(c(n,j) + c(j,n) + 1)`.
    pub fn detailed_balance(&self) -> f64 {
        let nc = self.grid.cells();
        let mut worst = 0.0f64;
        for counts in &self.counts {
            for i in 0..nc {
                for j in (i + 1)..nc {
                    let a = counts[i * nc + j] as f64;
                    let b = counts[j * nc + i] as f64;
                    let z = (a - b).abs() / (a + b + 1.0).sqrt();
                    worst = worst.max(z);
                }
            }
        }
        worst
    }

    pub fn two_bounce_fraction(&self) -> f64 {
        self.bounces_two as f64 / self.total as f64
    }

    pub fn lost_fraction(&self) -> f64 {
        self.lost as f64 / self.total as f64
    }

    /// Exit-angle marginal versus the sine law: worst cell deviation in
    /// standard deviations and the chi-square p-value.
    pub fn marginal_vs_sine_law(&self) -> (f64, f64) {
        let cells = self.marginal_grid.cells();
        let n = self.returned as f64;
        if n == 0.0 {
            return (f64::INFINITY, 0.0);
        }
        let p = 1.0 / cells as f64;
        let mut chi2 = 0.0;
        let mut worst_sigmas = 0.0f64;
        for &c in &self.marginal {
            let dev = c as f64 - n * p;
            chi2 += dev * dev / (n * p);
            worst_sigmas = worst_sigmas.max(dev.abs() / (n * p * (1.0 - p)).sqrt());
        }
        let dist = ChiSquared::new((cells - 1) as f64).expect("df > 0");
        let pval = 1.0 - dist.cdf(chi2);
        (worst_sigmas, pval)
    }
}

/// Re-trace returned rays from their exits; time reversal sends each back
/// to its start with the same bounce count.
pub fn reversibility_max_err(
    scene: &MirrorScene,
    strips: &StripLayout,
    cfg: &VerifyConfig,
) -> f64 {
    let tracer = Tracer::new(scene);
    let window = strips.total_span();
    let points = sample_lambda(window, cfg.retrace * 2, cfg.seed.wrapping_add(1));
    let errs: Vec<Option<f64>> = points
        .par_iter()
        .map(|&p| {
            let fwd = tracer.trace(p, cfg.max_bounces, false);
            let exit = fwd.exit?; // non-returned rays are outside the check
            let back = tracer.trace(exit, cfg.max_bounces, false);
            let Some(home) = back.exit else {
                return Some(f64::INFINITY);
            };
            if back.bounces != fwd.bounces {
                return Some(f64::INFINITY);
            }
            let ex = (home.x - p.x).abs() / (1.0 + p.x.abs());
            let ea = (home.alpha - p.alpha).abs();
            Some(ex.max(ea))
        })
        .collect();
    errs.into_iter()
        .flatten()
        .take(cfg.retrace)
        .fold(0.0f64, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyReport {
    pub tv_distance: f64,
    pub tv_sigma: f64,
    pub detailed_balance_z: f64,
    pub marginal_chi2_p: f64,
    pub marginal_worst_sigmas: f64,
    pub two_bounce_fraction: f64,
    pub reversibility_max_err: f64,
    pub lost_fraction: f64,
    pub rays: usize,
    pub seed: u64,
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tv_distance = {:.6}", self.tv_distance);
        let _ = writeln!(s, "tv_sigma = {:.6}", self.tv_sigma);
        let _ = writeln!(s, "detailed_balance_z = {:.4}", self.detailed_balance_z);
        let _ = writeln!(s, "marginal_chi2_p = {:.6}", self.marginal_chi2_p);
        let _ = writeln!(s, "marginal_worst_sigmas = {:.4}", self.marginal_worst_sigmas);
        let _ = writeln!(s, "two_bounce_fraction = {:.6}", self.two_bounce_fraction);
        let _ = writeln!(s, "reversibility_max_err = {:.3e}", self.reversibility_max_err);
        let _ = writeln!(s, "lost_fraction = {:.6}", self.lost_fraction);
        let _ = writeln!(s, "rays = {}", self.rays);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Full verification pass against a target kernel.
pub fn verify_scene(
    scene: &MirrorScene,
    kernel: &ReflectionKernel,
    strips: &StripLayout,
    cfg: &VerifyConfig,
) -> Result<VerifyReport, KernelError> {
    let emp = empirical_kernel(scene, strips, cfg);
    let (worst_sigmas, chi2_p) = emp.marginal_vs_sine_law();
    Ok(VerifyReport {
        tv_distance: emp.tv_to_target(kernel)?,
        tv_sigma: emp.tv_sigma(kernel)?,
        detailed_balance_z: emp.detailed_balance(),
        marginal_chi2_p: chi2_p,
        marginal_worst_sigmas: worst_sigmas,
        two_bounce_fraction: emp.two_bounce_fraction(),
        reversibility_max_err: reversibility_max_err(scene, strips, cfg),
        lost_fraction: emp.lost_fraction(),
        rays: cfg.rays,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracer::Guard;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn floor_scene(depth: f64) -> MirrorScene {
        MirrorScene {
            arcs: vec![],
            segments: vec![],
            guard: Some(Guard {
                floor_depth: depth,
                wall_xs: vec![],
            }),
        }
    }

    #[test]
    fn sampler_median_is_vertical() {
        // u = 1/2 maps to -pi/2; check via the empirical median
        let pts = sample_lambda((0.0, 1.0), 100_001, 7);
        let mut angles: Vec<f64> = pts.iter().map(|p| p.alpha).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = angles[angles.len() / 2];
        assert!(close(med, -PI / 2.0, 0.01), "median {med}");
        assert!(angles.iter().all(|&a| a > -PI && a < 0.0));
    }

    #[test]
    fn sampler_cell_masses_match_sine_law() {
        let grid = CosineGrid::new(4);
        let n = 1_000_000usize;
        let pts = sample_lambda((0.0, 1.0), n, 42);
        let mut counts = vec![0u64; grid.cells()];
        for p in &pts {
            counts[grid.cell_of(p.alpha)] += 1;
        }
        let p = 1.0 / grid.cells() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (k, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - n as f64 * p).abs();
            assert!(dev <= 4.0 * sigma, "cell {k}: {c} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_lambda((0.0, 1.0), 1000, 5);
        let b = sample_lambda((0.0, 1.0), 1000, 5);
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(p.x.to_bits(), q.x.to_bits());
            assert_eq!(p.alpha.to_bits(), q.alpha.to_bits());
        }
    }

    #[test]
    fn flat_floor_matches_specular_kernel() {
        let strips = StripLayout::new(vec![0.0, 1.0]).unwrap();
        let scene = floor_scene(0.001);
        let cfg = VerifyConfig {
            rays: 200_000,
            level: 2,
            ..Default::default()
        };
        let emp = empirical_kernel(&scene, &strips, &cfg);
        // almost no lost rays at this shallow depth
        assert!(emp.lost_fraction() < 0.01, "lost {}", emp.lost_fraction());
        let tv = emp.tv_to_target(&ReflectionKernel::SpecularFlat).unwrap();
        let sigma = emp.tv_sigma(&ReflectionKernel::SpecularFlat).unwrap();
        assert!(tv <= 0.01 + 4.0 * sigma, "tv {tv} sigma {sigma}");
        // and it is far from the retro kernel
        let tv_retro = emp.tv_to_target(&ReflectionKernel::Retro).unwrap();
        assert!(tv_retro > 0.5);
        assert_eq!(emp.two_bounce_fraction(), 0.0);
        // beta = -pi - alpha preserves the sine marginal exactly
        let (worst, p) = emp.marginal_vs_sine_law();
        assert!(worst <= 4.5, "worst {worst}");
        assert!(p > 0.001, "p {p}");
    }

    #[test]
    fn tv_arithmetic_examples() {
        // equal distributions give 0; moving 10% of mass gives 0.1
        let strips = StripLayout::new(vec![0.0, 1.0]).unwrap();
        let grid = CosineGrid::new(0);
        let a = ReflectionKernel::KnudsenCosine.mass_matrix(0, 1.0, 0).unwrap();
        let total = 1_000_000u64;
        let mut counts = vec![0u64; 4];
        for i in 0..2 {
            for j in 0..2 {
                counts[i * 2 + j] = (a.get(i, j) / 2.0 * total as f64).round() as u64;
            }
        }
        let mk = |counts: Vec<u64>, lost: u64| EmpiricalKernel {
            grid: grid.clone(),
            strips: strips.clone(),
            counts: vec![counts],
            lost,
            total,
            marginal_grid: CosineGrid::new(0),
            marginal: vec![0; 2],
            bounces_two: 0,
            returned: total - lost,
        };
        let emp = mk(counts.clone(), 0);
        let tv = emp.tv_to_target(&ReflectionKernel::KnudsenCosine).unwrap();
        assert!(tv <= 1e-6);

        let moved = (0.1 * total as f64) as u64;
        let mut shifted = counts.clone();
        shifted[0] -= moved;
        shifted[1] += moved;
        let emp = mk(shifted, 0);
        let tv = emp.tv_to_target(&ReflectionKernel::KnudsenCosine).unwrap();
        assert!(close(tv, 0.1, 1e-6), "tv {tv}");

        // lost mass is charged in full
        let mut lossy = counts;
        lossy[0] -= moved;
        let emp = mk(lossy, moved);
        let tv = emp.tv_to_target(&ReflectionKernel::KnudsenCosine).unwrap();
        assert!(close(tv, 0.1, 1e-6), "tv {tv}");
    }

    #[test]
    fn balance_statistic_formula() {
        let strips = StripLayout::new(vec![0.0, 1.0]).unwrap();
        let grid = CosineGrid::new(0);
        let mut counts = vec![0u64; 4];
        counts[0 * 2 + 1] = 10_000;
        counts[1 * 2 + 0] = 10_400;
        let emp = EmpiricalKernel {
            grid,
            strips,
            counts: vec![counts],
            lost: 0,
            total: 20_400,
            marginal_grid: CosineGrid::new(0),
            marginal: vec![0; 2],
            bounces_two: 0,
            returned: 20_400,
        };
        let z = emp.detailed_balance();
        assert!(close(z, 400.0 / (20_401.0f64).sqrt(), 1e-12));
        assert!(close(z, 2.8, 0.01));
    }

    #[test]
    fn symmetric_counts_balance_exactly() {
        let strips = StripLayout::new(vec![0.0, 1.0]).unwrap();
        let grid = CosineGrid::new(1);
        let mut counts = vec![0u64; 16];
        for i in 0..4 {
            for j in 0..4 {
                counts[i * 4 + j] = (100 * (i + 1) * (j + 1)) as u64;
            }
        }
        let emp = EmpiricalKernel {
            grid,
            strips,
            counts: vec![counts],
            lost: 0,
            total: 1,
            marginal_grid: CosineGrid::new(0),
            marginal: vec![0; 2],
            bounces_two: 0,
            returned: 1,
        };
        assert_eq!(emp.detailed_balance(), 0.0);
    }

    #[test]
    fn reversibility_on_flat_floor_is_exact() {
        let strips = StripLayout::new(vec![-1.0, 1.0]).unwrap();
        let scene = floor_scene(0.25);
        let cfg = VerifyConfig {
            rays: 1000,
            retrace: 1000,
            ..Default::default()
        };
        let err = reversibility_max_err(&scene, &strips, &cfg);
        assert!(err <= 1e-9, "err {err}");
    }

    #[test]
    fn seeded_reports_are_identical() {
        let strips = StripLayout::new(vec![0.0, 1.0]).unwrap();
        let scene = floor_scene(0.01);
        let cfg = VerifyConfig {
            rays: 20_000,
            retrace: 500,
            level: 2,
            ..Default::default()
        };
        let a = verify_scene(&scene, &ReflectionKernel::SpecularFlat, &strips, &cfg).unwrap();
        let b = verify_scene(&scene, &ReflectionKernel::SpecularFlat, &strips, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }
}
