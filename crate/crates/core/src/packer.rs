//! Cantor-style packing: tile a base interval of the reflecting line with
//! scaled, horizontally shifted copies of a transposer assembly, all cell
//! bodies pairwise disjoint and all mirrors within a prescribed depth.
//!
//! A cell's body is the convex hull of its mirrors and its footprint. Two
//! cells are translates of scaled copies of one template, so disjointness
//! reduces to an interval test: the bodies overlap exactly when the
//! horizontal offset between them lies inside the x-axis slice of the
//! Minkowski body `s2 K + (-s1 K)`. The slice is computed once per scale
//! pair, which keeps placement exact and fast.

use crate::geometry::{EllipseArc, Point};
use crate::transposer::TransposerAssembly;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PackError {
    #[error("packing fraction {want} unachievable at any scale (best {got:.3e}); template hull too deep relative to its footprint")]
    Infeasible { want: f64, got: f64 },
    #[error("template has empty footprint")]
    EmptyTemplate,
}

/// Monotone-chain convex hull, counterclockwise, no repeated last point.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Point-in-convex-polygon (CCW), `eps`-inflated.
pub fn point_in_hull(hull: &[Point], p: Point, eps: f64) -> bool {
    if hull.len() < 3 {
        return false;
    }
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross < -eps {
            return false;
        }
    }
    true
}

/// Minkowski sum of two convex CCW polygons.
fn minkowski_sum(a: &[Point], b: &[Point]) -> Vec<Point> {
    let start = |poly: &[Point]| {
        let mut k = 0;
        for i in 1..poly.len() {
            if (poly[i].y, poly[i].x) < (poly[k].y, poly[k].x) {
                k = i;
            }
        }
        k
    };
    let (ia0, ib0) = (start(a), start(b));
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() || j < b.len() {
        let pa = a[(ia0 + i) % a.len()];
        let pb = b[(ib0 + j) % b.len()];
        out.push(Point::new(pa.x + pb.x, pa.y + pb.y));
        let ea = {
            let q = a[(ia0 + i + 1) % a.len()];
            (q.x - pa.x, q.y - pa.y)
        };
        let eb = {
            let q = b[(ib0 + j + 1) % b.len()];
            (q.x - pb.x, q.y - pb.y)
        };
        let cross = ea.0 * eb.1 - ea.1 * eb.0;
        if i >= a.len() {
            j += 1;
        } else if j >= b.len() {
            i += 1;
        } else if cross > 0.0 {
            i += 1;
        } else if cross < 0.0 {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}

/// x-axis slice `{x : (x, 0) in poly}` of a convex polygon, as a closed
/// interval; `None` when the polygon misses the axis.
fn x_axis_slice(poly: &[Point]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = poly.len();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        if p.y == 0.0 {
            lo = lo.min(p.x);
            hi = hi.max(p.x);
        }
        if (p.y < 0.0) != (q.y < 0.0) && p.y != q.y {
            let t = -p.y / (q.y - p.y);
            let x = p.x + t * (q.x - p.x);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// One scaled, shifted copy of the template.
#[derive(Debug, Clone)]
pub struct ScaledCell {
    /// cell scale: diameter of the scaled hull
    pub r: f64,
    /// horizontal translation of the base center
    pub b: f64,
    /// covered interval of the reflecting line
    pub footprint: (f64, f64),
    /// convex body (scaled template hull)
    pub body: Vec<Point>,
    /// transformed mirrors
    pub mirrors: Vec<EllipseArc>,
}

/// Geometry of a template prepared for packing.
pub struct PackTemplate {
    pub assembly: TransposerAssembly,
    pub hull: Vec<Point>,
    /// template diameter r0
    pub r0: f64,
    pub depth: f64,
    pub rho: f64,
}

impl PackTemplate {
    pub fn new(assembly: TransposerAssembly) -> Result<Self, PackError> {
        if !(assembly.rho > 0.0) {
            return Err(PackError::EmptyTemplate);
        }
        let hull = assembly.hull_points();
        let mut diam = 0.0f64;
        for i in 0..hull.len() {
            for j in (i + 1)..hull.len() {
                diam = diam.max(hull[i].dist(hull[j]));
            }
        }
        let depth = hull.iter().map(|p| p.y).fold(0.0f64, f64::min).abs();
        Ok(Self {
            rho: assembly.rho,
            r0: diam,
            depth,
            hull,
            assembly,
        })
    }

    /// Scale and shift the template: mirrors scaled by `r/r0` about the base
    /// center, then translated horizontally. Reflection behavior is scale
    /// and shift invariant, so the copy realizes the template's map on its
    /// own footprint.
    pub fn transform_cell(&self, r: f64, b: f64) -> ScaledCell {
        let s = r / self.r0;
        let center = Point::new(0.0, 0.0);
        let body: Vec<Point> = self
            .hull
            .iter()
            .map(|p| Point::new(s * p.x + b, s * p.y))
            .collect();
        let mirrors: Vec<EllipseArc> = self
            .assembly
            .arcs
            .iter()
            .map(|a| a.scaled_translated(center, s, b))
            .collect();
        ScaledCell {
            r,
            b,
            footprint: (b - s * self.rho, b + s * self.rho),
            body,
            mirrors,
        }
    }
}

/// The packed configuration.
#[derive(Debug)]
pub struct CantorPacking {
    pub base: (f64, f64),
    pub generations: Vec<Vec<ScaledCell>>,
    /// uncovered length after each generation
    pub lambdas: Vec<f64>,
    /// uncovered intervals after the last generation
    pub leftover: Vec<(f64, f64)>,
}

impl CantorPacking {
    pub fn cells(&self) -> impl Iterator<Item = &ScaledCell> {
        self.generations.iter().flatten()
    }

    pub fn covered_length(&self) -> f64 {
        self.cells().map(|c| c.footprint.1 - c.footprint.0).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PackConfig {
    /// target covered fraction of the current leftover per generation
    pub q: f64,
    pub max_gen: usize,
    /// scale halvings allowed while chasing `q`
    pub max_halvings: u32,
    /// stop when leftover drops below this fraction of the base
    pub leftover_budget: f64,
    /// hard cap on the total number of cells
    pub cell_budget: usize,
}

impl PackConfig {
    pub fn from_eps0(eps0: f64) -> Self {
        Self {
            q: 0.25,
            max_gen: 12,
            max_halvings: 40,
            leftover_budget: eps0 / 4.0,
            cell_budget: 100_000,
        }
    }
}

/// Greedy left-to-right placement of footprints of scale `r` cells inside
/// the gaps, with exact body disjointness against existing cells and
/// confinement of bodies to the base slab. Returns accepted translations.
pub fn placement_search(
    gaps: &[(f64, f64)],
    r: f64,
    existing: &[(f64, f64, f64)], // (scale, translation, body x-extent half-ish) see below
    template: &PackTemplate,
    base: (f64, f64),
) -> Vec<f64> {
    // Minkowski x-slices per existing scale (existing cells grouped by r).
    let s_new = r / template.r0;
    let neg_scaled: Vec<Point> = {
        let mut pts: Vec<Point> = template
            .hull
            .iter()
            .map(|p| Point::new(-s_new * p.x, -s_new * p.y))
            .collect();
        pts.reverse(); // keep CCW after point reflection
        convex_hull(&pts)
    };
    let mut slice_cache: Vec<(f64, (f64, f64))> = Vec::new();
    let mut slice_for = |s_old: f64| -> (f64, f64) {
        if let Some(&(_, sl)) = slice_cache.iter().find(|(s, _)| *s == s_old) {
            return sl;
        }
        let old: Vec<Point> = template
            .hull
            .iter()
            .map(|p| Point::new(s_old * p.x, s_old * p.y))
            .collect();
        let mink = minkowski_sum(&convex_hull(&old), &neg_scaled);
        let sl = x_axis_slice(&mink).unwrap_or((0.0, 0.0));
        slice_cache.push((s_old, sl));
        sl
    };

    let f = 2.0 * s_new * template.rho;
    let hull_x_lo = template.hull.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hull_x_hi = template.hull.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * f;

    let mut accepted: Vec<f64> = Vec::new();
    for &(g0, g1) in gaps {
        if g1 - g0 < f - tol {
            continue;
        }
        let mut x = g0; // candidate footprint start
        while x + f <= g1 + tol {
            let b = x + s_new * template.rho; // base-center translation
            // first violated constraint gives the minimal feasible center
            let mut jump: Option<f64> = None;
            if b + s_new * hull_x_lo < base.0 - tol {
                jump = Some(base.0 - s_new * hull_x_lo);
            }
            if b + s_new * hull_x_hi > base.1 + tol {
                break; // the body has run off the slab's right edge
            }
            if jump.is_none() {
                for &(s_old, b_old, _) in existing {
                    let (lo, hi) = slice_for(s_old);
                    let dx = b - b_old;
                    if dx > lo + tol && dx < hi - tol {
                        let need = b_old + hi;
                        jump = Some(jump.map_or(need, |j: f64| j.max(need)));
                    }
                }
                for &bn in &accepted {
                    let (lo, hi) = slice_for(s_new);
                    let dx = b - bn;
                    if dx > lo + tol && dx < hi - tol {
                        let need = bn + hi;
                        jump = Some(jump.map_or(need, |j: f64| j.max(need)));
                    }
                }
            }
            match jump {
                None => {
                    accepted.push(b);
                    x += f;
                }
                Some(j) => {
                    // skip straight past the blocking body
                    x = (j - s_new * template.rho).max(x + f / 1024.0);
                }
            }
        }
    }
    accepted
}

/// Pack scaled copies of the template into the base until the uncovered
/// length meets the budget or the generation cap is reached. Each
/// generation must cover at least fraction `q` of the current leftover;
/// the scale is halved while it cannot, and packing fails if `q` stays
/// unachievable.
pub fn pack(
    template: &PackTemplate,
    base: (f64, f64),
    rho1: f64,
    cfg: &PackConfig,
) -> Result<CantorPacking, PackError> {
    let base_len = base.1 - base.0;
    let s_depth = rho1 * (1.0 - 1e-9) / template.depth.max(1e-300);
    let s_width = base_len / (template.r0.max(1e-300));
    let r_start = template.r0 * s_depth.min(s_width).min(rho1 / template.r0);

    let mut gaps: Vec<(f64, f64)> = vec![base];
    let mut generations: Vec<Vec<ScaledCell>> = Vec::new();
    let mut lambdas: Vec<f64> = Vec::new();
    let mut existing: Vec<(f64, f64, f64)> = Vec::new();
    let mut r_prev = r_start * 1.01;
    let mut lambda = base_len;

    for _gen in 0..cfg.max_gen {
        let placed_so_far: usize = generations.iter().map(|g| g.len()).sum();
        if placed_so_far >= cfg.cell_budget {
            break;
        }
        let largest_gap = gaps.iter().map(|&(a, b)| b - a).fold(0.0f64, f64::max);
        if largest_gap <= 1e-9 * base_len {
            break;
        }
        // start no larger than what fits in the widest remaining gap
        let r_fit = largest_gap / (2.0 * template.rho) * template.r0 * 0.999;
        let mut r = (r_prev * 0.99).min(r_start).min(r_fit);
        let mut best_frac = 0.0f64;
        let mut prev_frac = -1.0f64;
        let mut placed: Option<(f64, Vec<f64>)> = None;
        for attempt in 0..=cfg.max_halvings {
            if std::env::var("REFLECTORS_PACK_DEBUG").is_ok() {
                eprintln!("pack gen {} attempt {attempt} r={r:.6e} gaps={} existing={}", generations.len() + 1, gaps.len(), existing.len());
            }
            let translations = placement_search(&gaps, r, &existing, template, base);
            let covered: f64 = translations.len() as f64 * 2.0 * (r / template.r0) * template.rho;
            let frac = covered / lambda;
            best_frac = best_frac.max(frac);
            if frac >= cfg.q {
                placed = Some((r, translations));
                break;
            }
            // the achieved fraction converges to a scale-free limit; once it
            // stops improving, further halving cannot reach q
            if attempt >= 4 && frac > 0.0 && frac <= prev_frac * 1.02 {
                break;
            }
            prev_frac = frac;
            r *= 0.5;
        }
        let Some((r_used, translations)) = placed else {
            return Err(PackError::Infeasible {
                want: cfg.q,
                got: best_frac,
            });
        };
        let mut cells = Vec::with_capacity(translations.len());
        for &b in &translations {
            existing.push((r_used / template.r0, b, 0.0));
            cells.push(template.transform_cell(r_used, b));
        }
        // subtract footprints from the gaps
        let mut new_gaps: Vec<(f64, f64)> = Vec::new();
        for &(g0, g1) in &gaps {
            let mut cursor = g0;
            let mut cuts: Vec<(f64, f64)> = cells
                .iter()
                .map(|c| c.footprint)
                .filter(|&(a, b2)| b2 > g0 && a < g1)
                .collect();
            cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for (a, b2) in cuts {
                if a > cursor {
                    new_gaps.push((cursor, a));
                }
                cursor = cursor.max(b2);
            }
            if cursor < g1 {
                new_gaps.push((cursor, g1));
            }
        }
        gaps = new_gaps
            .into_iter()
            .filter(|&(a, b)| b - a > 1e-12 * base_len)
            .collect();
        lambda = gaps.iter().map(|&(a, b)| b - a).sum();
        lambdas.push(lambda);
        generations.push(cells);
        r_prev = r_used;
        if lambda <= cfg.leftover_budget * base_len {
            break;
        }
    }
    Ok(CantorPacking {
        base,
        generations,
        lambdas,
        leftover: gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circle_arc;
    use crate::transposer::TransposerAssembly;
    use std::f64::consts::PI;

    /// Synthetic compact template: a shallow dome of depth 0.4 under a base
    /// of half-length 1, so the hull is a sliver as wide as its footprint.
    fn shallow_template() -> PackTemplate {
        let arc = circle_arc(Point::new(0.0, 0.0), 0.4, -PI + 0.15, -0.15).unwrap();
        let assembly = TransposerAssembly {
            center: 0.0,
            rho: 1.0,
            trim: 0.1,
            pairs: vec![],
            arcs: vec![arc],
            scale_schedule: vec![1.0],
            skipped_mass: 0.0,
            crosstalk: 0.0,
        };
        PackTemplate::new(assembly).unwrap()
    }

    #[test]
    fn hull_of_square() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.5),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(point_in_hull(&h, Point::new(0.5, 0.5), 0.0));
        assert!(!point_in_hull(&h, Point::new(1.5, 0.5), 0.0));
    }

    #[test]
    fn minkowski_of_squares_is_square() {
        let sq = |s: f64| {
            vec![
                Point::new(0.0, 0.0),
                Point::new(s, 0.0),
                Point::new(s, s),
                Point::new(0.0, s),
            ]
        };
        let m = minkowski_sum(&sq(1.0), &sq(2.0));
        let h = convex_hull(&m);
        assert_eq!(h.len(), 4);
        let xs: Vec<f64> = h.iter().map(|p| p.x).collect();
        assert!(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) == 3.0);
    }

    #[test]
    fn identity_copy_and_footprint_scaling() {
        let t = shallow_template();
        let c = t.transform_cell(t.r0, 0.0);
        assert!((c.footprint.0 + 1.0).abs() < 1e-12);
        assert!((c.footprint.1 - 1.0).abs() < 1e-12);
        // footprint length of a scaled copy is 2 (r/r0) rho exactly
        let c2 = t.transform_cell(0.37 * t.r0, 0.2);
        let len = c2.footprint.1 - c2.footprint.0;
        assert!((len - 2.0 * 0.37 * t.rho).abs() < 1e-12);
    }

    #[test]
    fn abutting_footprints_fill_a_gap() {
        let t = shallow_template();
        // scale giving footprint length 1 in a gap of length 10
        let r = t.r0 / 2.0;
        let placements = placement_search(&[(0.0, 10.0)], r, &[], &t, (0.0, 10.0));
        assert_eq!(placements.len(), 10, "abutting footprints must fit exactly");
    }

    #[test]
    fn footprint_04_in_unit_base_places_two() {
        let t = shallow_template();
        let r = t.r0 * 0.2; // footprint 0.4
        let placements = placement_search(&[(0.0, 1.0)], r, &[], &t, (0.0, 1.0));
        assert!(placements.len() >= 2, "got {}", placements.len());
    }

    #[test]
    fn shallow_template_generation_covers_quarter() {
        let t = shallow_template();
        let cfg = PackConfig {
            q: 0.25,
            max_gen: 1,
            max_halvings: 10,
            leftover_budget: 0.0,
            cell_budget: 100_000,
        };
        let packing = pack(&t, (-5.0, 5.0), 10.0, &cfg).unwrap();
        assert!(packing.covered_length() >= 0.25 * 10.0);
    }

    #[test]
    fn ten_generations_reach_geometric_leftover() {
        let t = shallow_template();
        let cfg = PackConfig {
            q: 0.25,
            max_gen: 10,
            max_halvings: 40,
            leftover_budget: 0.0,
            cell_budget: 100_000,
        };
        let packing = pack(&t, (-5.0, 5.0), 10.0, &cfg).unwrap();
        assert!(packing.generations.len() <= 10);
        let leftover = packing.lambdas.last().copied().unwrap();
        assert!(
            leftover <= 0.75f64.powi(10) * 10.0,
            "leftover {leftover}"
        );
        // bodies pairwise disjoint, exact interval test on every pair
        let cells: Vec<&ScaledCell> = packing.cells().collect();
        for i in 0..cells.len() {
            for j in (i + 1)..cells.len() {
                let (a, b) = (cells[i], cells[j]);
                // conservative polygon check: no vertex of one body strictly
                // inside the other
                for p in &a.body {
                    assert!(!point_in_hull(&b.body, *p, -1e-9 * t.r0));
                }
                for p in &b.body {
                    assert!(!point_in_hull(&a.body, *p, -1e-9 * t.r0));
                }
            }
        }
    }

    #[test]
    fn depth_bound_holds() {
        let t = shallow_template();
        let cfg = PackConfig {
            q: 0.2,
            max_gen: 6,
            max_halvings: 20,
            leftover_budget: 0.0,
            cell_budget: 100_000,
        };
        let rho1 = 0.05;
        let packing = pack(&t, (-1.0, 1.0), rho1, &cfg).unwrap();
        for c in packing.cells() {
            assert!(c.r < rho1 + 1e-12);
            for m in &c.mirrors {
                let (lo, _) = m.bounding_box();
                assert!(lo.1 > -rho1, "mirror at depth {}", lo.1);
            }
        }
    }

    #[test]
    fn scaled_cell_reproduces_template_exit_angles() {
        use crate::tracer::{MirrorScene, PhasePoint, Tracer};
        let t = shallow_template();
        let cell = t.transform_cell(0.25 * t.r0, 0.7);
        let scene_t = MirrorScene {
            arcs: t.assembly.arcs.clone(),
            segments: vec![],
            guard: None,
        };
        let scene_c = MirrorScene {
            arcs: cell.mirrors.clone(),
            segments: vec![],
            guard: None,
        };
        let tr_t = Tracer::new(&scene_t);
        let tr_c = Tracer::new(&scene_c);
        for k in 0..1000 {
            let fx = k as f64 / 999.0;
            let x0 = (2.0 * fx - 1.0) * 0.9 * t.rho;
            let alpha = -0.3 - 2.5 * fx;
            let a = tr_t.trace(PhasePoint::new(x0, alpha), 8, false);
            let b = tr_c.trace(PhasePoint::new(0.25 * x0 + 0.7, alpha), 8, false);
            assert_eq!(a.status, b.status);
            if let (Some(ea), Some(eb)) = (a.exit, b.exit) {
                assert!(
                    (ea.alpha - eb.alpha).abs() <= 1e-9,
                    "angles {} vs {}",
                    ea.alpha,
                    eb.alpha
                );
                assert!(((0.25 * ea.x + 0.7) - eb.x).abs() <= 1e-9 * (1.0 + eb.x.abs()));
            }
        }
    }

    #[test]
    fn infeasible_when_template_too_deep_for_quarter() {
        // deep dome: depth comparable to the full semicircle radius, hull
        // much wider than the footprint
        let arc = circle_arc(Point::new(0.0, 0.0), 5.0, -PI + 0.1, -0.1).unwrap();
        let assembly = TransposerAssembly {
            center: 0.0,
            rho: 0.05,
            trim: 0.1,
            pairs: vec![],
            arcs: vec![arc],
            scale_schedule: vec![5.0],
            skipped_mass: 0.0,
            crosstalk: 0.0,
        };
        let t = PackTemplate::new(assembly).unwrap();
        let cfg = PackConfig {
            q: 0.25,
            max_gen: 3,
            max_halvings: 12,
            leftover_budget: 0.0,
            cell_budget: 100_000,
        };
        let res = pack(&t, (-1.0, 1.0), 0.5, &cfg);
        assert!(matches!(res, Err(PackError::Infeasible { .. })));
    }
}
