use shrinker_lab::catalog::ModelSpec;
use shrinker_lab::spectral::{assemble_weighted_problem, lowest_spectrum, richardson_extrapolate, CLUSTER_TOL};
fn main() {
    let spec = ModelSpec::parse("circle").unwrap();
    let m = spec.build(Some(&[64])).unwrap();
    let p = assemble_weighted_problem(&m.immersion).unwrap();
    let mut rep = lowest_spectrum(&p, 5, CLUSTER_TOL).unwrap();
    let mc = spec.build(Some(&[32])).unwrap();
    let pc = assemble_weighted_problem(&mc.immersion).unwrap();
    let repc = lowest_spectrum(&pc, 5, CLUSTER_TOL).unwrap();
    richardson_extrapolate(&mut rep, &repc);
    for (i, v) in rep.eigenvalues.iter().enumerate() {
        println!("{i}: {v:.12e}  rich {:.12e}", rep.richardson[i]);
    }
    println!("clusters: {:?}", rep.cluster_values());
}
