use hiberry_core::descent::Descent;
use hiberry_core::families::{DimerChernPump, Family};
use hiberry_core::mesh::Mesh;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let mesh = Arc::new(Mesh::product(&Mesh::sphere(3, 2), &Mesh::circle(3)).unwrap());
    println!("3-cells: {}", mesh.simplices(3).len());
    let fam = DimerChernPump::new(8, mesh.clone(), 3).unwrap();
    let d = Descent::new(&fam).unwrap();
    let t0 = Instant::now();
    let rep = d.invariant("higher_berry").unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "value {:+.6}  imag_defect {:.2e}  truncation {:.3e}  ring_defect {:.3e}",
        rep.value, rep.imag_defect, rep.truncation, rep.ring_defect
    );
    println!(
        "total {:.1}s  ({:.2} s/cell over {} cells)",
        dt,
        dt / mesh.simplices(3).len() as f64,
        mesh.simplices(3).len()
    );
}
