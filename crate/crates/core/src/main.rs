//! Command-line driver: synthesize scenes from kernel specs, trace ray
//! batches, verify scenes against kernels, and render SVG pictures.

use clap::{Parser, Subcommand, ValueEnum};
use reflectors::geometry::Point;
use reflectors::kernels::{fmt_g17, KernelSpec};
use reflectors::render::render_svg;
use reflectors::scene::{sha256_hex, SceneFile};
use reflectors::synth::{synthesize_hashed, DiagonalChoice, SynthConfig, SynthMode};
use reflectors::tracer::{PhasePoint, TraceStatus, Tracer};
use reflectors::verify::{verify_scene, VerifyConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "reflectors",
    about = "Deterministic mirror systems for random reflection kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagonalArg {
    Auto,
    Split,
    SelfPair,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Packed,
    Template,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mirror scene realizing the kernel in a spec file.
    Synthesize {
        /// kernel spec file
        kernel: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps0: f64,
        /// cosine-grid level m
        #[arg(long, default_value_t = 3)]
        level: u32,
        /// depth bound denominator: mirrors stay inside (-1/n, 0)
        #[arg(long = "depth-n", default_value_t = 10)]
        depth_n: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// omit the guard walls at strip boundaries
        #[arg(long = "no-guards", default_value_t = false)]
        no_guards: bool,
        #[arg(long, value_enum, default_value_t = ModeArg::Packed)]
        mode: ModeArg,
        /// packing fraction target per generation
        #[arg(long = "pack-q", default_value_t = 0.25)]
        pack_q: f64,
        #[arg(long = "max-gen", default_value_t = 12)]
        max_gen: usize,
        #[arg(long, value_enum, default_value_t = DiagonalArg::Auto)]
        diagonal: DiagonalArg,
        /// write the simple symmetric function table here
        #[arg(long = "dump-ssf")]
        dump_ssf: Option<PathBuf>,
    },
    /// Trace a batch of rays (one "x alpha" per line) through a scene.
    Trace {
        scene: PathBuf,
        rays: PathBuf,
        #[arg(long = "max-bounces", default_value_t = 10_000)]
        max_bounces: u32,
        /// write bounce polylines here (one line per ray: x y pairs)
        #[arg(long)]
        paths: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo verification of a scene against a kernel spec.
    Verify {
        scene: PathBuf,
        kernel: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        rays: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "max-bounces", default_value_t = 10_000)]
        max_bounces: u32,
        /// grid level for joint counts; defaults to the scene's level
        #[arg(long)]
        level: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a scene (and optional traced paths) as SVG.
    Render {
        scene: PathBuf,
        /// paths file produced by `trace --paths`
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_workers() {
    if let Ok(v) = std::env::var("REFLECTORS_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    init_workers();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Synthesize {
            kernel,
            eps0,
            level,
            depth_n,
            seed,
            out,
            no_guards,
            mode,
            pack_q,
            max_gen,
            diagonal,
            dump_ssf,
        } => {
            let bytes = std::fs::read(&kernel)?;
            let spec = KernelSpec::parse(std::str::from_utf8(&bytes)?)?;
            let cfg = SynthConfig {
                eps0,
                level,
                depth_n,
                seed,
                guards: !no_guards,
                mode: match mode {
                    ModeArg::Packed => SynthMode::Packed { q: pack_q, max_gen },
                    ModeArg::Template => SynthMode::TemplateCell,
                },
                diagonal: match diagonal {
                    DiagonalArg::Auto => DiagonalChoice::Auto,
                    DiagonalArg::Split => DiagonalChoice::Split,
                    DiagonalArg::SelfPair => DiagonalChoice::SelfPair,
                },
            };
            if let Some(path) = dump_ssf {
                use reflectors::discretizer::{build_ssf_with_policy, DiagonalPolicy};
                let policy = match cfg.diagonal {
                    DiagonalChoice::Split => DiagonalPolicy::Split,
                    DiagonalChoice::SelfPair => DiagonalPolicy::SelfPair,
                    DiagonalChoice::Auto => {
                        if spec.kernel.is_diagonal(level) {
                            DiagonalPolicy::SelfPair
                        } else {
                            DiagonalPolicy::Split
                        }
                    }
                };
                let ssf = build_ssf_with_policy(&spec.kernel, level, &spec.strips, policy)?;
                std::fs::write(path, ssf.dump())?;
            }
            let sf = synthesize_hashed(&spec, &cfg, Some(&bytes))?;
            std::fs::write(&out, sf.serialize())?;
            eprintln!(
                "wrote {} ({} arcs, {} segments)",
                out.display(),
                sf.scene.arcs.len(),
                sf.scene.segments.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace {
            scene,
            rays,
            max_bounces,
            paths,
            out,
        } => {
            let sf = SceneFile::parse(&std::fs::read_to_string(&scene)?)?;
            let tracer = Tracer::new(&sf.scene);
            let text = std::fs::read_to_string(&rays)?;
            let mut results = String::new();
            let mut path_dump = String::new();
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut it = line.split_whitespace();
                let (Some(xs), Some(als)) = (it.next(), it.next()) else {
                    return Err(format!("rays file line {}: expected `x alpha`", ln + 1).into());
                };
                let x: f64 = xs
                    .parse()
                    .map_err(|_| format!("rays file line {}: bad x", ln + 1))?;
                let alpha: f64 = als
                    .parse()
                    .map_err(|_| format!("rays file line {}: bad alpha", ln + 1))?;
                let res = tracer.trace(PhasePoint { x, alpha }, max_bounces, paths.is_some());
                let status = match res.status {
                    TraceStatus::Returned => "returned",
                    TraceStatus::MaxBounces => "maxbounces",
                    TraceStatus::Lost => "lost",
                };
                let (y, beta) = res.exit.map_or((f64::NAN, f64::NAN), |e| (e.x, e.alpha));
                results.push_str(&format!(
                    "{status} {} {} {}\n",
                    fmt_g17(y),
                    fmt_g17(beta),
                    res.bounces
                ));
                if let Some(pts) = res.path {
                    path_dump.push_str("path");
                    for p in pts {
                        path_dump.push_str(&format!(" {} {}", fmt_g17(p.x), fmt_g17(p.y)));
                    }
                    path_dump.push('\n');
                }
            }
            match out {
                Some(p) => std::fs::write(p, results)?,
                None => print!("{results}"),
            }
            if let Some(p) = paths {
                std::fs::write(p, path_dump)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            scene,
            kernel,
            rays,
            seed,
            max_bounces,
            level,
            out,
        } => {
            let scene_text = std::fs::read_to_string(&scene)?;
            let sf = SceneFile::parse(&scene_text)?;
            let kbytes = std::fs::read(&kernel)?;
            let spec = KernelSpec::parse(std::str::from_utf8(&kbytes)?)?;
            if sf.provenance.kernel_hash != "none"
                && sf.provenance.kernel_hash != sha256_hex(&kbytes)
            {
                eprintln!("warning: scene provenance hash does not match the kernel spec");
            }
            let cfg = VerifyConfig {
                level: level.unwrap_or(sf.provenance.level),
                rays,
                seed,
                max_bounces,
                ..Default::default()
            };
            let report = verify_scene(&sf.scene, &spec.kernel, &spec.strips, &cfg)?;
            let eps0 = sf.provenance.eps0.max(1e-12);
            let pass = report.detailed_balance_z <= 4.0
                && report.marginal_chi2_p > 0.001
                && report.tv_distance <= eps0 + 3.0 * report.tv_sigma
                && report.lost_fraction <= eps0;
            let mut text = String::new();
            text.push_str(
                "# thresholds: balance_z <= 4, chi2_p > 0.001, tv <= eps0 + 3 sigma, lost <= eps0\n",
            );
            text.push_str(&report.to_text());
            text.push_str(&format!("pass = {}\n", if pass { "yes" } else { "no" }));
            match out {
                Some(p) => std::fs::write(p, &text)?,
                None => print!("{text}"),
            }
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Render { scene, trace, out } => {
            let sf = SceneFile::parse(&std::fs::read_to_string(&scene)?)?;
            let mut paths: Vec<Vec<Point>> = Vec::new();
            if let Some(tp) = trace {
                for line in std::fs::read_to_string(&tp)?.lines() {
                    let Some(rest) = line.strip_prefix("path") else {
                        continue;
                    };
                    let nums: Result<Vec<f64>, _> =
                        rest.split_whitespace().map(|t| t.parse::<f64>()).collect();
                    let nums = nums.map_err(|_| "bad number in paths file")?;
                    paths.push(nums.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect());
                }
            }
            std::fs::write(&out, render_svg(&sf.scene, &paths))?;
            eprintln!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
