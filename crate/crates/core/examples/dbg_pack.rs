use reflectors::discretizer::{build_ssf_with_policy, DiagonalPolicy};
use reflectors::kernels::{ReflectionKernel as K, StripLayout};
use reflectors::packer::*;
use reflectors::transposer::*;

fn main() {
    let strips = StripLayout::new(vec![-0.25, 0.25]).unwrap();
    let ssf = build_ssf_with_policy(&K::Retro, 3, &strips, DiagonalPolicy::SelfPair).unwrap();
    let t0 = std::time::Instant::now();
    let asm = assemble(&ssf, -0.25, 0.25, 0.1).unwrap();
    eprintln!("assembled: rho={:.4} talk={:.5} arcs={} ({:.1}s)",
        asm.rho, asm.crosstalk, asm.arcs.len(), t0.elapsed().as_secs_f64());
    let template = PackTemplate::new(asm).unwrap();
    eprintln!("template: r0={:.3} depth={:.3} rho={:.4} hull_verts={} q_geom={:.4}",
        template.r0, template.depth, template.rho, template.hull.len(),
        2.0 * template.rho / template.r0);
    let cfg = PackConfig { q: 0.02, max_gen: 10, max_halvings: 40, leftover_budget: 0.025, cell_budget: 2000 };
    let t0 = std::time::Instant::now();
    match pack(&template, (-0.25, 0.25), 0.1, &cfg) {
        Ok(p) => {
            let cells: usize = p.generations.iter().map(|g| g.len()).sum();
            eprintln!("packed {} gens {} cells leftover_frac {:.4} ({:.1}s)",
                p.generations.len(), cells, p.lambdas.last().unwrap() / 0.5,
                t0.elapsed().as_secs_f64());
            for (i, l) in p.lambdas.iter().enumerate().take(10) {
                eprintln!("  gen {}: lambda {:.5} cells {}", i + 1, l, p.generations[i].len());
            }
        }
        Err(e) => eprintln!("ERR {e} ({:.1}s)", t0.elapsed().as_secs_f64()),
    }
}
