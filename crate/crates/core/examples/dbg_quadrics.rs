use pose3r::polysys::*;
use pose3r::geom::{Vec3, Mat3};
use nalgebra::SMatrix;

fn main() {
    let q = QuadricTriple::from_rows([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    ]);
    // manually reproduce stage 3: CoV + mix
    let generic = {
        let axis = Vec3::new(1.0, 2.0, 3.0).normalize();
        let (sin, cos) = 0.7f64.sin_cos();
        let skew = Mat3::new(0.0, -axis[2], axis[1], axis[2], 0.0, -axis[0], -axis[1], axis[0], 0.0);
        Mat3::identity() + skew * sin + skew * skew * (1.0 - cos)
    };
    // emulate change_of_variables through public API: build transformed k by hand
    let mut k2 = SMatrix::<f64, 3, 10>::zeros();
    for i in 0..3 {
        let r = q.k.row(i);
        let phi_mat = Mat3::new(r[0], r[3]/2.0, r[4]/2.0, r[3]/2.0, r[1], r[5]/2.0, r[4]/2.0, r[5]/2.0, r[2]);
        let phi = Vec3::new(r[6], r[7], r[8]);
        let m = generic.transpose() * phi_mat * generic;
        let l = generic.transpose() * phi;
        k2[(i,0)]=m[(0,0)]; k2[(i,1)]=m[(1,1)]; k2[(i,2)]=m[(2,2)];
        k2[(i,3)]=2.0*m[(0,1)]; k2[(i,4)]=2.0*m[(0,2)]; k2[(i,5)]=2.0*m[(1,2)];
        k2[(i,6)]=l[0]; k2[(i,7)]=l[1]; k2[(i,8)]=l[2]; k2[(i,9)]=r[9];
    }
    let mixer = Mat3::new(2.0, 1.0, -1.0, 1.0, 3.0, 1.0, -1.0, 1.0, 2.0);
    let k3 = mixer * k2;
    let q3 = QuadricTriple::new(k3);
    println!("stage3 system rows:");
    for i in 0..3 { println!("  {:?}", q3.k.row(i).iter().map(|v| (v*1e4).round()/1e4).collect::<Vec<_>>()); }
    let sp = generic.transpose() * Vec3::new(1.0, 0.0, 0.0);
    println!("expected root s' = {:?}, residual {:e}", sp, q3.rel_residual(&sp));
    match resultant_polynomial(&q3) {
        Some(p) => {
            println!("det poly: {:?}", p.coeffs);
            println!("roots: {:?}", real_roots(&p, 1e-8));
        }
        None => println!("stage3 det DEGENERATE"),
    }
    println!("direct hide solve on q3: {:?}", solve_three_quadrics_hiding(&q3, 2));
}
