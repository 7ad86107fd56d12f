//! Conversion of a symmetric kernel into a simple symmetric function: a
//! partition of phase space into rectangles `x-interval x angle-interval`,
//! an involutive pairing of rectangles with equal sine mass, and a constant
//! exit angle per rectangle placed inside the partner's interval.
//!
//! The angle partition of each cosine-grid cell is the cumulative-mass
//! beta partition: `cos(beta_{n,i}) = cos(gamma_n) + (1/w) sum_{j<i} a(n,j)`,
//! which telescopes to the next grid line because row sums equal cell
//! masses.

use crate::kernels::{CosineGrid, MassMatrix, ReflectionKernel, StripLayout};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiscretizerError {
    #[error("mass matrix entry ({0},{1}) is negative")]
    NegativeMass(usize, usize),
    #[error("row {0} sum {1:.6e} does not match cell mass {2:.6e}")]
    RowSumMismatch(usize, f64, f64),
    #[error("kernel is not symmetric at this level")]
    Asymmetric,
    #[error(transparent)]
    Kernel(#[from] crate::kernels::KernelError),
}

/// Per-cell breakpoints of the angle sub-partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPartition {
    pub m: u32,
    /// `beta[n]` has `2^{m+1} + 1` nondecreasing angles from `gamma_n`
    /// to `gamma_{n+1}`.
    pub beta: Vec<Vec<f64>>,
}

/// Cumulative-mass sub-partition of every grid cell for one strip.
pub fn beta_partition(
    a: &MassMatrix,
    grid: &CosineGrid,
    strip_width: f64,
) -> Result<BetaPartition, DiscretizerError> {
    let n = grid.cells();
    assert_eq!(a.n, n, "matrix level must match the grid");
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) < 0.0 {
                return Err(DiscretizerError::NegativeMass(i, j));
            }
        }
    }
    let mut beta = Vec::with_capacity(n);
    for row in 0..n {
        let want = strip_width * grid.cell_mass();
        let have = a.row_sum(row);
        if (have - want).abs() > 1e-9 * want.max(1e-300) {
            return Err(DiscretizerError::RowSumMismatch(row, have, want));
        }
        // Work in cosine space where the cumulative sums are exact; the
        // final breakpoint is the next grid line by the row-sum identity,
        // so snap it there rather than amplifying 1-ulp noise through acos.
        let c0 = row as f64 * grid.cell_mass() - 1.0;
        let c_end = (row + 1) as f64 * grid.cell_mass() - 1.0;
        let mut pts = Vec::with_capacity(n + 1);
        pts.push(grid.gamma[row]);
        let mut cum = 0.0;
        for j in 0..n {
            cum += a.get(row, j);
            let c = (c0 + cum / strip_width).clamp(-1.0, 1.0);
            if (c - c_end).abs() <= 1e-12 {
                pts.push(grid.gamma[row + 1]);
            } else {
                pts.push(-c.acos());
            }
        }
        beta.push(pts);
    }
    Ok(BetaPartition { m: grid.m, beta })
}

/// How diagonal mass `a(n,n)` is realized.
///
/// `SelfPair` keeps one self-paired rectangle per diagonal entry (its mirror
/// is a single circle arc, one reflection). `Split` divides each diagonal
/// entry into two equal-mass sub-rectangles at the opposite ends of the
/// cell's sub-partition and pairs them with each other, so that the mirror
/// system reflects these rays exactly twice like every other pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalPolicy {
    SelfPair,
    Split,
}

/// One rectangle `(x_lo, x_hi] x (a_lo, a_hi]` of the partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SsfRect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    /// Index of the paired rectangle; equal to own index for self-pairs.
    pub partner: usize,
    /// Constant exit angle; lies inside the partner's angle interval.
    pub target: f64,
    /// Cosine-grid cell containing the angle interval.
    pub cell: usize,
    /// Cosine-grid cell containing the partner (and hence the target).
    pub partner_cell: usize,
}

impl SsfRect {
    pub fn angle_width(&self) -> f64 {
        self.a_hi - self.a_lo
    }

    /// Lambda mass per unit x: integral of -sin over the angle interval.
    pub fn sine_mass(&self) -> f64 {
        self.a_hi.cos() - self.a_lo.cos()
    }

    pub fn x_width(&self) -> f64 {
        self.x_hi - self.x_lo
    }
}

#[derive(Debug, Clone)]
pub struct SimpleSymmetricFunction {
    pub m: u32,
    pub rects: Vec<SsfRect>,
    pub mesh: f64,
    /// Largest gap between a sine-mass midpoint target and the arithmetic
    /// midpoint of the same interval, for the build report.
    pub max_midpoint_deviation: f64,
    columns: Vec<Column>,
}

#[derive(Debug, Clone)]
struct Column {
    x_lo: f64,
    x_hi: f64,
    /// rect indices sorted by a_lo
    order: Vec<usize>,
}

/// Sine-mass midpoint of an angle interval on `(-pi, 0)`.
pub fn sine_midpoint(lo: f64, hi: f64) -> f64 {
    let c = 0.5 * (lo.cos() + hi.cos());
    -c.clamp(-1.0, 1.0).acos()
}

impl SimpleSymmetricFunction {
    fn build_columns(m: u32, rects: Vec<SsfRect>, max_dev: f64) -> Self {
        let mut mesh = 0.0f64;
        for r in &rects {
            mesh = mesh.max(r.x_width()).max(r.angle_width());
        }
        let mut columns: Vec<Column> = Vec::new();
        for (i, r) in rects.iter().enumerate() {
            match columns.iter_mut().find(|c| c.x_lo == r.x_lo && c.x_hi == r.x_hi) {
                Some(c) => c.order.push(i),
                None => columns.push(Column {
                    x_lo: r.x_lo,
                    x_hi: r.x_hi,
                    order: vec![i],
                }),
            }
        }
        for c in &mut columns {
            c.order
                .sort_by(|&p, &q| rects[p].a_lo.partial_cmp(&rects[q].a_lo).unwrap());
        }
        Self {
            m,
            rects,
            mesh,
            max_midpoint_deviation: max_dev,
            columns,
        }
    }

    /// Rectangle containing the phase point, honoring the half-open
    /// convention `(a_lo, a_hi]` in angle and `(x_lo, x_hi]` in position.
    pub fn rect_of(&self, x: f64, alpha: f64) -> Option<usize> {
        let col = self.columns.iter().find(|c| x > c.x_lo && x <= c.x_hi)?;
        let idx = col
            .order
            .partition_point(|&i| self.rects[i].a_lo < alpha);
        if idx == 0 {
            return None;
        }
        let ri = col.order[idx - 1];
        let r = &self.rects[ri];
        (alpha > r.a_lo && alpha <= r.a_hi).then_some(ri)
    }

    /// Apply the function: same position, the containing rectangle's target
    /// angle. `None` when the point lies in no rectangle.
    pub fn eval(&self, x: f64, alpha: f64) -> Option<(f64, f64)> {
        let ri = self.rect_of(x, alpha)?;
        Some((x, self.rects[ri].target))
    }

    /// Rectangle indices of one x-interval, sorted by angle.
    pub fn column_rects(&self, x_lo: f64, x_hi: f64) -> Option<&[usize]> {
        self.columns
            .iter()
            .find(|c| c.x_lo == x_lo && c.x_hi == x_hi)
            .map(|c| c.order.as_slice())
    }

    pub fn column_intervals(&self) -> Vec<(f64, f64)> {
        self.columns.iter().map(|c| (c.x_lo, c.x_hi)).collect()
    }

    /// Verify every structural invariant; returns the worst sine-mass
    /// pairing error. Panics on structural violations (test helper).
    pub fn validate(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, r) in self.rects.iter().enumerate() {
            assert!(r.a_hi > r.a_lo, "empty rectangle {k}");
            let p = &self.rects[r.partner];
            assert_eq!(p.partner, k, "pairing is not an involution at {k}");
            assert_eq!((r.x_lo, r.x_hi), (p.x_lo, p.x_hi), "pair spans different x");
            worst = worst.max((r.sine_mass() - p.sine_mass()).abs());
            assert!(
                r.target > p.a_lo && r.target <= p.a_hi,
                "target of {k} not inside partner"
            );
        }
        for c in &self.columns {
            let mut prev_hi = -std::f64::consts::PI;
            for &i in &c.order {
                let r = &self.rects[i];
                assert!(
                    (r.a_lo - prev_hi).abs() <= 1e-9,
                    "gap or overlap at angle {} in column ({}, {}]",
                    r.a_lo,
                    c.x_lo,
                    c.x_hi
                );
                prev_hi = r.a_hi;
            }
            assert!(prev_hi.abs() <= 1e-9, "column does not reach 0");
        }
        worst
    }

    /// Text table: one rectangle per line, for inspection and for feeding
    /// the synthesizer.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# rect x_lo x_hi a_lo a_hi partner target");
        for (k, r) in self.rects.iter().enumerate() {
            let _ = writeln!(
                s,
                "{k} {} {} {} {} {} {}",
                crate::kernels::fmt_g17(r.x_lo),
                crate::kernels::fmt_g17(r.x_hi),
                crate::kernels::fmt_g17(r.a_lo),
                crate::kernels::fmt_g17(r.a_hi),
                r.partner,
                crate::kernels::fmt_g17(r.target)
            );
        }
        s
    }
}

/// Row layout entry: which matrix column (or diagonal half) a sub-interval
/// of the row's cell carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Slot {
    Col(usize),
    DiagLo,
    DiagHi,
}

/// Build the simple symmetric function for a kernel at level `m` over the
/// given strips. The spec-default diagonal policy is `SelfPair`.
pub fn build_ssf(
    kernel: &ReflectionKernel,
    m: u32,
    strips: &StripLayout,
) -> Result<SimpleSymmetricFunction, DiscretizerError> {
    build_ssf_with_policy(kernel, m, strips, DiagonalPolicy::SelfPair)
}

pub fn build_ssf_with_policy(
    kernel: &ReflectionKernel,
    m: u32,
    strips: &StripLayout,
    policy: DiagonalPolicy,
) -> Result<SimpleSymmetricFunction, DiscretizerError> {
    let grid = CosineGrid::new(m);
    let n = grid.cells();
    let mut rects: Vec<SsfRect> = Vec::new();
    let mut max_dev = 0.0f64;

    for k in 0..strips.count() {
        let (x_lo, x_hi) = strips.interval(k);
        let w = strips.width(k);
        let a = kernel.mass_matrix(m, w, k)?;
        if a.max_asymmetry() > 1e-9 * 2.0 * w {
            return Err(DiscretizerError::Asymmetric);
        }

        // Row layouts. With the split policy a positive diagonal entry is
        // halved and its two halves bracket the rest of the row, which keeps
        // the paired sub-intervals far enough apart in angle to transpose.
        let layout: Vec<Vec<(Slot, f64)>> = (0..n)
            .map(|row| {
                let mut v: Vec<(Slot, f64)> = Vec::with_capacity(n + 1);
                let d = a.get(row, row);
                let split = policy == DiagonalPolicy::Split && d > 0.0;
                if split {
                    v.push((Slot::DiagLo, d / 2.0));
                }
                for j in 0..n {
                    if j == row && split {
                        continue;
                    }
                    let mass = a.get(row, j);
                    if mass > 0.0 {
                        v.push((Slot::Col(j), mass));
                    }
                }
                if split {
                    v.push((Slot::DiagHi, d / 2.0));
                }
                v
            })
            .collect();

        // Breakpoints per row from cumulative masses.
        let mut intervals: std::collections::HashMap<(usize, Slot), (f64, f64)> =
            std::collections::HashMap::new();
        for (row, slots) in layout.iter().enumerate() {
            let c0 = row as f64 * grid.cell_mass() - 1.0;
            let c_end = (row + 1) as f64 * grid.cell_mass() - 1.0;
            let mut cum = 0.0;
            let mut lo = grid.gamma[row];
            for &(slot, mass) in slots {
                cum += mass;
                let c = (c0 + cum / w).clamp(-1.0, 1.0);
                // snap the row's final breakpoint onto the next grid line
                let hi = if (c - c_end).abs() <= 1e-12 {
                    grid.gamma[row + 1]
                } else {
                    -c.acos()
                };
                intervals.insert((row, slot), (lo, hi));
                lo = hi;
            }
        }

        // Rectangles with partner wiring.
        let base = rects.len();
        let mut index_of: std::collections::HashMap<(usize, Slot), usize> =
            std::collections::HashMap::new();
        for (row, slots) in layout.iter().enumerate() {
            for &(slot, _) in slots {
                let (lo, hi) = intervals[&(row, slot)];
                if hi <= lo {
                    continue; // zero-mass sub-interval dropped
                }
                index_of.insert((row, slot), base + index_of.len());
                rects.push(SsfRect {
                    x_lo,
                    x_hi,
                    a_lo: lo,
                    a_hi: hi,
                    partner: usize::MAX,
                    target: f64::NAN,
                    cell: row,
                    partner_cell: usize::MAX,
                });
            }
        }
        for (row, slots) in layout.iter().enumerate() {
            for &(slot, _) in slots {
                let Some(&me) = index_of.get(&(row, slot)) else {
                    continue;
                };
                let partner_key = match slot {
                    Slot::Col(j) if j == row => (row, Slot::Col(row)),
                    Slot::Col(j) => (j, Slot::Col(row)),
                    Slot::DiagLo => (row, Slot::DiagHi),
                    Slot::DiagHi => (row, Slot::DiagLo),
                };
                let &partner = index_of
                    .get(&partner_key)
                    .expect("symmetric mass implies the partner interval exists");
                let (plo, phi) = {
                    let p = &rects[partner];
                    (p.a_lo, p.a_hi)
                };
                let target = sine_midpoint(plo, phi);
                max_dev = max_dev.max((target - 0.5 * (plo + phi)).abs());
                let pc = rects[partner].cell;
                let r = &mut rects[me];
                r.partner = partner;
                r.target = target;
                r.partner_cell = pc;
            }
        }
    }
    Ok(SimpleSymmetricFunction::build_columns(m, rects, max_dev))
}

/// Split every paired rectangle wider than `w_max` radians into equal
/// sine-mass sub-pairs. The result is a finer simple symmetric function
/// that induces exactly the same cell-level kernel; downstream mirror
/// construction needs thin bundles, and this refinement is how the mesh
/// requirement is met without touching the grid level.
pub fn refine_wide_pairs(
    ssf: &SimpleSymmetricFunction,
    w_max: f64,
) -> SimpleSymmetricFunction {
    assert!(w_max > 0.0);
    let mut rects: Vec<SsfRect> = Vec::new();
    let mut done = vec![false; ssf.rects.len()];
    for k in 0..ssf.rects.len() {
        if done[k] {
            continue;
        }
        let j = ssf.rects[k].partner;
        done[k] = true;
        done[j] = true;
        let (a, b) = (&ssf.rects[k], &ssf.rects[j]);
        let widest = a.angle_width().max(b.angle_width());
        if j == k || widest <= w_max {
            let base = rects.len();
            let mut r0 = a.clone();
            if j == k {
                r0.partner = base;
                rects.push(r0);
            } else {
                let mut r1 = b.clone();
                r0.partner = base + 1;
                r1.partner = base;
                rects.push(r0);
                rects.push(r1);
            }
            continue;
        }
        let pieces = (widest / w_max).ceil() as usize;
        // equal sine-mass split of both intervals
        let cut = |lo: f64, hi: f64, i: usize| -> (f64, f64) {
            let (c0, c1) = (lo.cos(), hi.cos());
            let f0 = i as f64 / pieces as f64;
            let f1 = (i + 1) as f64 / pieces as f64;
            let p0 = if i == 0 { lo } else { -(c0 + f0 * (c1 - c0)).clamp(-1.0, 1.0).acos() };
            let p1 = if i + 1 == pieces {
                hi
            } else {
                -(c0 + f1 * (c1 - c0)).clamp(-1.0, 1.0).acos()
            };
            (p0, p1)
        };
        let base = rects.len();
        for i in 0..pieces {
            let (alo, ahi) = cut(a.a_lo, a.a_hi, i);
            let (blo, bhi) = cut(b.a_lo, b.a_hi, i);
            rects.push(SsfRect {
                a_lo: alo,
                a_hi: ahi,
                partner: base + 2 * i + 1,
                target: sine_midpoint(blo, bhi),
                ..a.clone()
            });
            rects.push(SsfRect {
                a_lo: blo,
                a_hi: bhi,
                partner: base + 2 * i,
                target: sine_midpoint(alo, ahi),
                ..b.clone()
            });
        }
    }
    SimpleSymmetricFunction::build_columns(ssf.m, rects, ssf.max_midpoint_deviation)
}

/// Replace pairs whose two angle intervals sit within `eps0/2` of each other
/// by self-pairs with midpoint targets. Such pairs become single circle-arc
/// mirrors downstream; the pointwise change to the function is at most
/// `eps0/2`.
pub fn coarsen_near_diagonal(
    ssf: &SimpleSymmetricFunction,
    eps0: f64,
) -> SimpleSymmetricFunction {
    assert!(eps0 > 0.0);
    let mut rects = ssf.rects.clone();
    for k in 0..rects.len() {
        let j = rects[k].partner;
        if j == k {
            continue;
        }
        let (a, b) = (&rects[k], &rects[j]);
        let span = (a.a_hi - b.a_lo).max(b.a_hi - a.a_lo);
        if span <= eps0 / 2.0 {
            for &i in &[k, j] {
                let (lo, hi, cell) = (rects[i].a_lo, rects[i].a_hi, rects[i].cell);
                rects[i].partner = i;
                rects[i].target = sine_midpoint(lo, hi);
                rects[i].partner_cell = cell;
            }
        }
    }
    SimpleSymmetricFunction::build_columns(ssf.m, rects, ssf.max_midpoint_deviation)
}
