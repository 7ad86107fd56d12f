//! Scene file format: a versioned UTF-8 text listing of mirror primitives
//! with a provenance header. All numerics are written with 17 significant
//! digits so that parse(serialize(scene)) reproduces the scene bit for bit.

use crate::geometry::{EllipseArc, Point, SegmentMirror};
use crate::kernels::fmt_g17;
use crate::tracer::{Guard, MirrorScene};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid primitive at line {line}: {msg}")]
    BadPrimitive { line: usize, msg: String },
}

/// Synthesis metadata carried by a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// SHA-256 of the kernel spec file bytes, lowercase hex, or "none"
    pub kernel_hash: String,
    pub variant: String,
    pub eps0: f64,
    pub level: u32,
    /// depth bound is 1/depth_n
    pub depth_n: u32,
    pub seed: u64,
    pub mode: String,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            kernel_hash: "none".into(),
            variant: "none".into(),
            eps0: 0.0,
            level: 0,
            depth_n: 1,
            seed: 0,
            mode: "manual".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub provenance: Provenance,
    pub scene: MirrorScene,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl SceneFile {
    pub fn serialize(&self) -> String {
        let p = &self.provenance;
        let mut s = String::new();
        s.push_str("scene v1\n");
        let _ = writeln!(s, "kernel-hash = {}", p.kernel_hash);
        let _ = writeln!(s, "variant = {}", p.variant);
        let _ = writeln!(s, "eps0 = {}", fmt_g17(p.eps0));
        let _ = writeln!(s, "level = {}", p.level);
        let _ = writeln!(s, "depth-n = {}", p.depth_n);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "mode = {}", p.mode);
        match &self.scene.guard {
            Some(g) => {
                let _ = write!(s, "guard = floor {}", fmt_g17(g.floor_depth));
                if !g.wall_xs.is_empty() {
                    s.push_str(" walls");
                    for w in &g.wall_xs {
                        let _ = write!(s, " {}", fmt_g17(*w));
                    }
                }
                s.push('\n');
            }
            None => s.push_str("guard = none\n"),
        }
        for a in &self.scene.arcs {
            let _ = writeln!(
                s,
                "arc {} {} {} {} {} {} {} {} {} {}",
                fmt_g17(a.focus1.x),
                fmt_g17(a.focus1.y),
                fmt_g17(a.focus2.x),
                fmt_g17(a.focus2.y),
                fmt_g17(a.through.x),
                fmt_g17(a.through.y),
                fmt_g17(a.apex.x),
                fmt_g17(a.apex.y),
                fmt_g17(a.clip_lo),
                fmt_g17(a.clip_hi)
            );
        }
        for seg in &self.scene.segments {
            let _ = writeln!(
                s,
                "segment {} {} {} {}",
                fmt_g17(seg.a.x),
                fmt_g17(seg.a.y),
                fmt_g17(seg.b.x),
                fmt_g17(seg.b.y)
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let err = |line: usize, msg: &str| SceneError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
        if header != "scene v1" {
            return Err(err(ln, "expected header `scene v1`"));
        }
        let mut prov = Provenance::default();
        let mut guard: Option<Guard> = None;
        let mut arcs: Vec<EllipseArc> = Vec::new();
        let mut segments: Vec<SegmentMirror> = Vec::new();

        let parse_f = |tok: &str, ln: usize| -> Result<f64, SceneError> {
            tok.parse::<f64>().map_err(|_| err(ln, "bad number"))
        };

        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("arc ") {
                let v: Result<Vec<f64>, _> =
                    rest.split_whitespace().map(|t| parse_f(t, ln)).collect();
                let v = v?;
                if v.len() != 10 {
                    return Err(err(ln, "arc needs 10 numbers"));
                }
                let arc = EllipseArc::new(
                    Point::new(v[0], v[1]),
                    Point::new(v[2], v[3]),
                    Point::new(v[4], v[5]),
                    Point::new(v[6], v[7]),
                    v[8],
                    v[9],
                )
                .map_err(|e| SceneError::BadPrimitive {
                    line: ln,
                    msg: e.to_string(),
                })?;
                arcs.push(arc);
                continue;
            }
            if let Some(rest) = line.strip_prefix("segment ") {
                let v: Result<Vec<f64>, _> =
                    rest.split_whitespace().map(|t| parse_f(t, ln)).collect();
                let v = v?;
                if v.len() != 4 {
                    return Err(err(ln, "segment needs 4 numbers"));
                }
                let seg = SegmentMirror::new(Point::new(v[0], v[1]), Point::new(v[2], v[3]))
                    .map_err(|e| SceneError::BadPrimitive {
                        line: ln,
                        msg: e.to_string(),
                    })?;
                segments.push(seg);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(ln, "expected `key = value` or a primitive"));
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "kernel-hash" => prov.kernel_hash = value.to_string(),
                "variant" => prov.variant = value.to_string(),
                "eps0" => prov.eps0 = parse_f(value, ln)?,
                "level" => prov.level = value.parse().map_err(|_| err(ln, "bad level"))?,
                "depth-n" => prov.depth_n = value.parse().map_err(|_| err(ln, "bad depth-n"))?,
                "seed" => prov.seed = value.parse().map_err(|_| err(ln, "bad seed"))?,
                "mode" => prov.mode = value.to_string(),
                "guard" => {
                    if value == "none" {
                        guard = None;
                    } else {
                        let toks: Vec<&str> = value.split_whitespace().collect();
                        if toks.len() < 2 || toks[0] != "floor" {
                            return Err(err(ln, "guard must be `none` or `floor <d> [walls ...]`"));
                        }
                        let floor_depth = parse_f(toks[1], ln)?;
                        let mut wall_xs = Vec::new();
                        if toks.len() > 2 {
                            if toks[2] != "walls" {
                                return Err(err(ln, "expected `walls`"));
                            }
                            for t in &toks[3..] {
                                wall_xs.push(parse_f(t, ln)?);
                            }
                        }
                        guard = Some(Guard {
                            floor_depth,
                            wall_xs,
                        });
                    }
                }
                _ => return Err(err(ln, "unknown key")),
            }
        }
        Ok(SceneFile {
            provenance: prov,
            scene: MirrorScene {
                arcs,
                segments,
                guard,
            },
        })
    }
}
