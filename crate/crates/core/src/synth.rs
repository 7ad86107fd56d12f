//! End-to-end synthesis: kernel spec to mirror scene.
//!
//! The pipeline is symmetry check, simple-symmetric-function construction,
//! near-diagonal coarsening, per-strip transposer assembly, then either
//! Cantor packing of scaled copies into each strip at the prescribed depth
//! or a single depth-scaled template cell per strip. Guard walls at the
//! strip boundaries and the floor at the depth bound complete the scene.

use crate::discretizer::{build_ssf_with_policy, coarsen_near_diagonal, DiagonalPolicy};
use crate::kernels::KernelSpec;
use crate::packer::{pack, PackConfig, PackTemplate};
use crate::scene::{sha256_hex, Provenance, SceneFile};
use crate::tracer::{Guard, MirrorScene};
use crate::transposer::assemble;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("symmetry check failed: max asymmetry {0:.3e}")]
    Symmetry(f64),
    #[error("discretizer stage failed: {0}")]
    Discretizer(#[from] crate::discretizer::DiscretizerError),
    #[error("assemble stage failed: {0}")]
    Assemble(#[from] crate::transposer::TransposerError),
    #[error("packing stage failed: {0}")]
    Pack(#[from] crate::packer::PackError),
    #[error(
        "template cell spans {got:.6e} in x but the strip is {strip:.6e} wide; \
         regenerate the kernel spec with strips of width {got:.6e} or narrower"
    )]
    TemplateWiderThanStrip { got: f64, strip: f64 },
    #[error(
        "mirror bodies extend {overhang:.3e} beyond their strip; guard walls would \
         cut through them (pass --no-guards for template-cell scenes)"
    )]
    GuardsCutMirrors { overhang: f64 },
}

/// How diagonal kernel mass is realized; `Auto` splits it into two-bounce
/// transposed halves unless the kernel is purely diagonal (a retroreflector),
/// whose self-paired cells become one smooth circle dome per strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalChoice {
    Auto,
    Split,
    SelfPair,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthMode {
    /// Cantor packing of scaled copies covering each strip.
    Packed { q: f64, max_gen: usize },
    /// One depth-scaled copy of the assembly per strip, filling the strip.
    TemplateCell,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub eps0: f64,
    pub level: u32,
    /// depth bound: all mirrors inside (-1/depth_n, 0)
    pub depth_n: u32,
    pub seed: u64,
    pub guards: bool,
    pub mode: SynthMode,
    pub diagonal: DiagonalChoice,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            eps0: 0.1,
            level: 3,
            depth_n: 10,
            seed: 1,
            guards: true,
            mode: SynthMode::Packed { q: 0.25, max_gen: 12 },
            diagonal: DiagonalChoice::Auto,
        }
    }
}

pub fn synthesize(spec: &KernelSpec, cfg: &SynthConfig) -> Result<SceneFile, SynthError> {
    synthesize_hashed(spec, cfg, None)
}

/// `kernel_bytes`, when given, is hashed into the provenance block.
pub fn synthesize_hashed(
    spec: &KernelSpec,
    cfg: &SynthConfig,
    kernel_bytes: Option<&[u8]>,
) -> Result<SceneFile, SynthError> {
    let rep = spec.kernel.check_symmetry(cfg.level, &spec.strips);
    if !rep.pass {
        return Err(SynthError::Symmetry(rep.max_asymmetry));
    }
    let policy = match cfg.diagonal {
        DiagonalChoice::Split => DiagonalPolicy::Split,
        DiagonalChoice::SelfPair => DiagonalPolicy::SelfPair,
        DiagonalChoice::Auto => {
            if spec.kernel.is_diagonal(cfg.level) {
                DiagonalPolicy::SelfPair
            } else {
                DiagonalPolicy::Split
            }
        }
    };
    let ssf = build_ssf_with_policy(&spec.kernel, cfg.level, &spec.strips, policy)?;
    let ssf = coarsen_near_diagonal(&ssf, cfg.eps0);

    let rho1 = 1.0 / cfg.depth_n as f64;
    let mut scene = MirrorScene::default();
    for k in 0..spec.strips.count() {
        let (x_lo, x_hi) = spec.strips.interval(k);
        let assembly = assemble(&ssf, x_lo, x_hi, cfg.eps0)?;
        let center = assembly.center;
        let template = PackTemplate::new(assembly)?;
        match cfg.mode {
            SynthMode::Packed { q, max_gen } => {
                let pc = PackConfig {
                    q,
                    max_gen,
                    max_halvings: 40,
                    leftover_budget: cfg.eps0 / 4.0,
                    cell_budget: 100_000,
                };
                let packing = pack(&template, (x_lo, x_hi), rho1, &pc)?;
                for cell in packing.cells() {
                    scene.arcs.extend(cell.mirrors.iter().cloned());
                }
            }
            SynthMode::TemplateCell => {
                // one cell, scaled to the depth bound, centered in the strip
                let s = rho1 * (1.0 - 1e-9) / template.depth;
                let footprint = 2.0 * s * template.rho;
                let strip_w = x_hi - x_lo;
                if footprint > strip_w * (1.0 + 1e-9) {
                    return Err(SynthError::TemplateWiderThanStrip {
                        got: footprint,
                        strip: strip_w,
                    });
                }
                let cell = template.transform_cell(s * template.r0, center);
                scene.arcs.extend(cell.mirrors.iter().cloned());
            }
        }
    }

    if cfg.guards {
        // walls must not cut through mirror bodies: every arc has to fit
        // inside one strip
        let mut overhang = 0.0f64;
        for arc in &scene.arcs {
            let (lo, hi) = arc.bounding_box();
            let contained = (0..spec.strips.count()).any(|k| {
                let (a, b) = spec.strips.interval(k);
                lo.0 >= a - 1e-12 && hi.0 <= b + 1e-12
            });
            if !contained {
                let worst = (0..spec.strips.count())
                    .map(|k| {
                        let (a, b) = spec.strips.interval(k);
                        (a - lo.0).max(hi.0 - b).max(0.0)
                    })
                    .fold(f64::INFINITY, f64::min);
                overhang = overhang.max(worst);
            }
        }
        if overhang > 0.0 {
            return Err(SynthError::GuardsCutMirrors { overhang });
        }
        scene.guard = Some(Guard {
            floor_depth: rho1,
            wall_xs: spec.strips.boundaries.clone(),
        });
    } else {
        scene.guard = Some(Guard {
            floor_depth: rho1,
            wall_xs: vec![],
        });
    }

    let mode = match cfg.mode {
        SynthMode::Packed { .. } => "packed",
        SynthMode::TemplateCell => "template-cell",
    };
    Ok(SceneFile {
        provenance: Provenance {
            kernel_hash: kernel_bytes.map_or_else(|| "none".into(), sha256_hex),
            variant: spec.kernel.variant_name().into(),
            eps0: cfg.eps0,
            level: cfg.level,
            depth_n: cfg.depth_n,
            seed: cfg.seed,
            mode: mode.into(),
        },
        scene,
    })
}

/// The widest strip a template-cell scene can fill at the given depth
/// bound: footprint of the assembly scaled so its deepest mirror sits at
/// `-1/depth_n`. Useful for sizing kernel strips before synthesis.
pub fn template_footprint(
    spec: &KernelSpec,
    cfg: &SynthConfig,
) -> Result<f64, SynthError> {
    let rep = spec.kernel.check_symmetry(cfg.level, &spec.strips);
    if !rep.pass {
        return Err(SynthError::Symmetry(rep.max_asymmetry));
    }
    let policy = match cfg.diagonal {
        DiagonalChoice::Split => DiagonalPolicy::Split,
        DiagonalChoice::SelfPair => DiagonalPolicy::SelfPair,
        DiagonalChoice::Auto => {
            if spec.kernel.is_diagonal(cfg.level) {
                DiagonalPolicy::SelfPair
            } else {
                DiagonalPolicy::Split
            }
        }
    };
    let ssf = build_ssf_with_policy(&spec.kernel, cfg.level, &spec.strips, policy)?;
    let ssf = coarsen_near_diagonal(&ssf, cfg.eps0);
    let (x_lo, x_hi) = spec.strips.interval(0);
    let assembly = assemble(&ssf, x_lo, x_hi, cfg.eps0)?;
    let template = PackTemplate::new(assembly)?;
    let s = (1.0 / cfg.depth_n as f64) * (1.0 - 1e-9) / template.depth;
    Ok(2.0 * s * template.rho)
}
