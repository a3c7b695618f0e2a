use nalgebra::DMatrix;
use num_complex::Complex64;
use std::time::Instant;

fn main() {
    let n = 256;
    let a = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        Complex64::new((i * 7 + j) as f64 % 13.0, (i + j * 3) as f64 % 7.0)
    });
    let b = a.adjoint();
    let t0 = Instant::now();
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..10 {
        let cmat = &a * &b;
        acc += cmat[(0, 0)];
    }
    let dt = t0.elapsed().as_secs_f64() / 10.0;
    println!("nalgebra matmul: {:.1} ms ({:.2} GFLOPS) {acc}", dt * 1e3, 8.0 * (n as f64).powi(3) / dt / 1e9);
    let h = (&a + &a.adjoint()).scale(0.5);
    let t0 = Instant::now();
    let e = h.clone().symmetric_eigen();
    println!("nalgebra eigh: {:.1} ms (ev0 {:.3})", t0.elapsed().as_secs_f64() * 1e3, e.eigenvalues[0]);

    let fa = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| {
        faer::c64::new((i * 7 + j) as f64 % 13.0, (i + j * 3) as f64 % 7.0)
    });
    let fb = fa.adjoint().to_owned();
    let t0 = Instant::now();
    let mut facc = faer::c64::new(0.0, 0.0);
    for _ in 0..10 {
        let fc = &fa * &fb;
        facc += fc[(0, 0)];
    }
    let dt = t0.elapsed().as_secs_f64() / 10.0;
    println!("faer matmul: {:.1} ms ({:.2} GFLOPS) {facc}", dt * 1e3, 8.0 * (n as f64).powi(3) / dt / 1e9);
    let fh = (&fa + fa.adjoint().to_owned()) * faer::Scale(faer::c64::new(0.5, 0.0));
    let t0 = Instant::now();
    let fe = fh.self_adjoint_eigen(faer::Side::Lower).unwrap();
    println!("faer eigh: {:.1} ms (ev0 {:.3})", t0.elapsed().as_secs_f64() * 1e3, fe.S()[0]);
}
