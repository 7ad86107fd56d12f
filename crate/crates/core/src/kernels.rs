//! Target reflection kernels: the built-in analytic reflectors, symmetric
//! mass matrices on the cosine grid, the Lambda-symmetry check, inverse-CDF
//! sampling, and the kernel spec file format.
//!
//! A kernel gives the outgoing-angle law `P(x, alpha; dbeta)` at a point of
//! the reflecting line. Only kernels that are local in position (the ray
//! exits where it entered) and piecewise constant over x-strips are
//! representable. The canonical interchange form is a per-strip square
//! matrix `a(n, j)` of Lambda-masses over cosine-grid cells; symmetry
//! `a(n, j) = a(j, n)` is the one necessary condition for a kernel to be
//! approximable by deterministic mirrors.

use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("matrix kernel is asymmetric: max |a(n,j) - a(j,n)| = {0:.3e} exceeds tolerance")]
    Asymmetric(f64),
    #[error("matrix entry ({0},{1}) is negative")]
    NegativeMass(usize, usize),
    #[error("matrix level {have} is finer than available level {want}")]
    LevelMismatch { have: u32, want: u32 },
    #[error("strip boundaries must be strictly increasing")]
    BadStrips,
    #[error("matrix dimension {0} does not match level {1} (expected {2})")]
    BadDimension(usize, u32, usize),
    #[error("kernel spec parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Angular grid `gamma_0 < ... < gamma_{2^{m+1}}` on `[-pi, 0]` with equal
/// sine mass `2^{-m}` per cell: `cos(gamma_k) = k 2^{-m} - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineGrid {
    pub m: u32,
    pub gamma: Vec<f64>,
}

impl CosineGrid {
    pub fn new(m: u32) -> Self {
        let cells = 1usize << (m + 1);
        let step = (2.0f64).powi(-(m as i32));
        let gamma = (0..=cells)
            .map(|k| -((k as f64 * step - 1.0).clamp(-1.0, 1.0)).acos())
            .collect();
        Self { m, gamma }
    }

    pub fn cells(&self) -> usize {
        self.gamma.len() - 1
    }

    /// Sine mass of one cell: `2^{-m}`.
    pub fn cell_mass(&self) -> f64 {
        (2.0f64).powi(-(self.m as i32))
    }

    /// Index of the half-open cell `(gamma_k, gamma_{k+1}]` containing the
    /// angle. Angles at or below `-pi` map to cell 0.
    pub fn cell_of(&self, alpha: f64) -> usize {
        let frac = (alpha.cos() + 1.0) / self.cell_mass();
        let k = frac.ceil() as isize - 1;
        k.clamp(0, self.cells() as isize - 1) as usize
    }
}

/// Uniform-in-structure partition of an x-range into strips.
#[derive(Debug, Clone, PartialEq)]
pub struct StripLayout {
    /// Strictly increasing strip boundaries; strip `k` is
    /// `(boundaries[k], boundaries[k+1]]`.
    pub boundaries: Vec<f64>,
}

impl StripLayout {
    pub fn new(boundaries: Vec<f64>) -> Result<Self, KernelError> {
        if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::BadStrips);
        }
        Ok(Self { boundaries })
    }

    pub fn count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.boundaries[k], self.boundaries[k + 1])
    }

    pub fn width(&self, k: usize) -> f64 {
        self.boundaries[k + 1] - self.boundaries[k]
    }

    pub fn strip_of(&self, x: f64) -> Option<usize> {
        if x <= self.boundaries[0] || x > *self.boundaries.last().unwrap() {
            return None;
        }
        let k = self.boundaries.partition_point(|&b| b < x);
        Some((k - 1).min(self.count() - 1))
    }

    pub fn total_span(&self) -> (f64, f64) {
        (self.boundaries[0], *self.boundaries.last().unwrap())
    }
}

/// Per-strip symmetric mass matrix over cosine-grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub n: usize,
    pub a: Vec<f64>, // row-major n x n
}

impl MassMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn total(&self) -> f64 {
        self.a.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.a[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Aggregate a level-(m+1) matrix over 2x2 blocks down to level m.
    pub fn coarsen(&self) -> MassMatrix {
        assert!(self.n % 2 == 0);
        let half = self.n / 2;
        let mut out = MassMatrix::zeros(half);
        for i in 0..half {
            for j in 0..half {
                let s = self.get(2 * i, 2 * j)
                    + self.get(2 * i, 2 * j + 1)
                    + self.get(2 * i + 1, 2 * j)
                    + self.get(2 * i + 1, 2 * j + 1);
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Target random reflector.
#[derive(Debug, Clone, PartialEq)]
pub enum ReflectionKernel {
    /// Reverses each ray: beta = alpha.
    Retro,
    /// The flat specular mirror: beta = -pi - alpha.
    SpecularFlat,
    /// Knudsen/Lambert cosine law: outgoing density `-sin(beta)/2`,
    /// independent of the incoming angle.
    KnudsenCosine,
    /// Explicit per-strip mass matrices at a stated grid level.
    Matrix {
        level: u32,
        strips: StripLayout,
        per_strip: Vec<MassMatrix>,
    },
}

impl ReflectionKernel {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ReflectionKernel::Retro => "retro",
            ReflectionKernel::SpecularFlat => "specular-flat",
            ReflectionKernel::KnudsenCosine => "knudsen-cosine",
            ReflectionKernel::Matrix { .. } => "matrix",
        }
    }

    /// True when all mass sits on the diagonal of every strip matrix.
    pub fn is_diagonal(&self, m: u32) -> bool {
        match self {
            ReflectionKernel::Retro => true,
            ReflectionKernel::SpecularFlat | ReflectionKernel::KnudsenCosine => false,
            ReflectionKernel::Matrix { strips, .. } => {
                let grid = CosineGrid::new(m);
                (0..strips.count()).all(|k| {
                    let mat = self.mass_matrix(m, strips.width(k), k).unwrap();
                    (0..mat.n).all(|i| (0..mat.n).all(|j| i == j || mat.get(i, j) == 0.0))
                        && grid.cells() == mat.n
                })
            }
        }
    }
}

/// Exact mass matrix of the Knudsen cosine law at level `m`:
/// the product of cell sine masses, halved.
fn knudsen_matrix(grid: &CosineGrid, strip_width: f64) -> MassMatrix {
    let n = grid.cells();
    let mut mat = MassMatrix::zeros(n);
    // Cells have sine mass 2^-m exactly, by the grid's defining equation.
    let mass = grid.cell_mass();
    for i in 0..n {
        for j in 0..n {
            mat.set(i, j, strip_width * mass * mass / 2.0);
        }
    }
    mat
}

impl ReflectionKernel {
    /// The level-`m` mass matrix for one strip:
    /// `a(n,j) = - triple integral of P(x,alpha; dbeta) sin(alpha)` over the
    /// strip and the two angle cells. Built-in kernels use closed forms;
    /// matrix kernels aggregate down from their stored level.
    pub fn mass_matrix(
        &self,
        m: u32,
        strip_width: f64,
        strip_index: usize,
    ) -> Result<MassMatrix, KernelError> {
        let grid = CosineGrid::new(m);
        let n = grid.cells();
        match self {
            ReflectionKernel::Retro => {
                let mut mat = MassMatrix::zeros(n);
                for k in 0..n {
                    mat.set(k, k, strip_width * grid.cell_mass());
                }
                Ok(mat)
            }
            ReflectionKernel::SpecularFlat => {
                // beta = -pi - alpha swaps cell k with cell n-1-k exactly.
                let mut mat = MassMatrix::zeros(n);
                for k in 0..n {
                    mat.set(k, n - 1 - k, strip_width * grid.cell_mass());
                }
                Ok(mat)
            }
            ReflectionKernel::KnudsenCosine => Ok(knudsen_matrix(&grid, strip_width)),
            ReflectionKernel::Matrix { level, per_strip, .. } => {
                if *level < m {
                    return Err(KernelError::LevelMismatch { have: m, want: *level });
                }
                let mut mat = per_strip[strip_index].clone();
                for _ in m..*level {
                    mat = mat.coarsen();
                }
                let sym = mat.max_asymmetry();
                if sym > 1e-9 * (2.0 * strip_width) {
                    return Err(KernelError::Asymmetric(sym));
                }
                for i in 0..mat.n {
                    for j in 0..mat.n {
                        if mat.get(i, j) < 0.0 {
                            return Err(KernelError::NegativeMass(i, j));
                        }
                    }
                }
                Ok(mat)
            }
        }
    }

    /// Maximum asymmetry `|a(n,j) - a(j,n)|` over all strips at level `m`.
    /// Passes when at most `1e-9` times the strip Lambda-mass.
    pub fn check_symmetry(&self, m: u32, strips: &StripLayout) -> SymmetryReport {
        let mut worst = 0.0f64;
        let mut pass = true;
        for k in 0..strips.count() {
            let w = strips.width(k);
            match self.mass_matrix(m, w, k) {
                Ok(mat) => {
                    let asym = mat.max_asymmetry();
                    worst = worst.max(asym);
                    if asym > 1e-9 * 2.0 * w {
                        pass = false;
                    }
                }
                Err(_) => pass = false,
            }
        }
        SymmetryReport { max_asymmetry: worst, pass }
    }

    /// Draw an exit angle from `P(., alpha; dbeta)` by inverse CDF.
    /// `u` is a uniform variate in `[0, 1)`.
    pub fn sample_exit(&self, alpha: f64, u: f64, m: u32, strip_index: usize) -> f64 {
        debug_assert!(alpha > -PI && alpha < 0.0);
        match self {
            ReflectionKernel::Retro => alpha,
            ReflectionKernel::SpecularFlat => -PI - alpha,
            ReflectionKernel::KnudsenCosine => -(2.0 * u - 1.0).clamp(-1.0, 1.0).acos(),
            ReflectionKernel::Matrix { strips, .. } => {
                let grid = CosineGrid::new(m);
                let w = strips.width(strip_index);
                let mat = self
                    .mass_matrix(m, w, strip_index)
                    .expect("sample_exit requires a valid matrix");
                let row = grid.cell_of(alpha);
                let total = mat.row_sum(row);
                if total <= 0.0 {
                    return alpha;
                }
                let mut acc = 0.0;
                let target = u * total;
                for j in 0..mat.n {
                    let mass = mat.get(row, j);
                    if target < acc + mass || j == mat.n - 1 {
                        // linear in sine mass within the cell
                        let frac = ((target - acc) / mass).clamp(0.0, 1.0);
                        let c0 = grid.gamma[j].cos();
                        let c1 = grid.gamma[j + 1].cos();
                        return -((c0 + frac * (c1 - c0)).clamp(-1.0, 1.0)).acos();
                    }
                    acc += mass;
                }
                unreachable!()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    pub max_asymmetry: f64,
    pub pass: bool,
}

/// Kernel spec file, version 1. UTF-8 text; `#` starts a comment.
///
/// ```text
/// kernel-spec v1
/// variant = knudsen-cosine        # retro | specular-flat | knudsen-cosine | matrix
/// level = 3
/// strips = -0.5 0.5               # strip boundaries, strictly increasing
/// strip 0                         # matrix variant only: one block per strip,
/// 0.25 0.25                       #   row-major, 2^(level+1) rows
/// 0.25 0.25
/// ```
pub struct KernelSpec {
    pub kernel: ReflectionKernel,
    pub level: u32,
    pub strips: StripLayout,
}

impl KernelSpec {
    pub fn parse(text: &str) -> Result<Self, KernelError> {
        let err = |line: usize, msg: &str| KernelError::Parse { line, msg: msg.to_string() };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
        if header != "kernel-spec v1" {
            return Err(err(ln, "expected header `kernel-spec v1`"));
        }
        let mut variant: Option<String> = None;
        let mut level: Option<u32> = None;
        let mut strips: Option<StripLayout> = None;
        let mut blocks: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut current_block: Option<(usize, Vec<f64>)> = None;

        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("strip ") {
                if let Some(b) = current_block.take() {
                    blocks.push(b);
                }
                let idx: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| err(ln, "bad strip index"))?;
                current_block = Some((idx, Vec::new()));
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                match key {
                    "variant" => variant = Some(value.to_string()),
                    "level" => {
                        level = Some(value.parse().map_err(|_| err(ln, "bad level"))?)
                    }
                    "strips" => {
                        let bs: Result<Vec<f64>, _> =
                            value.split_whitespace().map(|t| t.parse::<f64>()).collect();
                        let bs = bs.map_err(|_| err(ln, "bad strip boundary"))?;
                        strips = Some(StripLayout::new(bs).map_err(|_| {
                            err(ln, "strip boundaries must be strictly increasing")
                        })?);
                    }
                    _ => return Err(err(ln, "unknown key")),
                }
                continue;
            }
            // numeric matrix row
            match current_block {
                Some((_, ref mut data)) => {
                    for tok in line.split_whitespace() {
                        data.push(tok.parse().map_err(|_| err(ln, "bad matrix entry"))?);
                    }
                }
                None => return Err(err(ln, "unexpected line outside a strip block")),
            }
        }
        if let Some(b) = current_block.take() {
            blocks.push(b);
        }

        let variant = variant.ok_or_else(|| err(0, "missing `variant`"))?;
        let level = level.ok_or_else(|| err(0, "missing `level`"))?;
        let strips = strips.ok_or_else(|| err(0, "missing `strips`"))?;
        let n = 1usize << (level + 1);

        let kernel = match variant.as_str() {
            "retro" => ReflectionKernel::Retro,
            "specular-flat" => ReflectionKernel::SpecularFlat,
            "knudsen-cosine" => ReflectionKernel::KnudsenCosine,
            "matrix" => {
                if blocks.len() != strips.count() {
                    return Err(err(0, "matrix variant needs one `strip k` block per strip"));
                }
                let mut per_strip = vec![MassMatrix::zeros(n); strips.count()];
                for (idx, data) in blocks {
                    if idx >= strips.count() {
                        return Err(err(0, "strip index out of range"));
                    }
                    if data.len() != n * n {
                        return Err(KernelError::BadDimension(data.len(), level, n * n));
                    }
                    per_strip[idx] = MassMatrix { n, a: data };
                }
                for (k, mat) in per_strip.iter().enumerate() {
                    let asym = mat.max_asymmetry();
                    if asym > 1e-9 * 2.0 * strips.width(k) {
                        return Err(KernelError::Asymmetric(asym));
                    }
                    for i in 0..n {
                        for j in 0..n {
                            if mat.get(i, j) < 0.0 {
                                return Err(KernelError::NegativeMass(i, j));
                            }
                        }
                    }
                }
                ReflectionKernel::Matrix {
                    level,
                    strips: strips.clone(),
                    per_strip,
                }
            }
            other => return Err(err(0, &format!("unknown variant `{other}`"))),
        };
        Ok(KernelSpec { kernel, level, strips })
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        s.push_str("kernel-spec v1\n");
        let _ = writeln!(s, "variant = {}", self.kernel.variant_name());
        let _ = writeln!(s, "level = {}", self.level);
        s.push_str("strips =");
        for b in &self.strips.boundaries {
            let _ = write!(s, " {}", fmt_g17(*b));
        }
        s.push('\n');
        if let ReflectionKernel::Matrix { per_strip, .. } = &self.kernel {
            for (k, mat) in per_strip.iter().enumerate() {
                let _ = writeln!(s, "strip {k}");
                for i in 0..mat.n {
                    let row: Vec<String> =
                        (0..mat.n).map(|j| fmt_g17(mat.get(i, j))).collect();
                    let _ = writeln!(s, "{}", row.join(" "));
                }
            }
        }
        s
    }
}

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}
