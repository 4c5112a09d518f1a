use hecke_lab::{jet_exp, jet_log, jet_mul, nu_mass, sigma, suite};
use num_complex::Complex64 as C64;

#[test]
fn jet_functions_round_trip() {
    let a = vec![C64::new(2.0, 1.0), C64::new(0.3, -0.2), C64::new(-0.1, 0.4)];
    let back = jet_exp(jet_log(a.clone()).unwrap()).unwrap();
    assert!(a.iter().zip(&back).all(|(x, y)| (x - y).norm() < 1e-12));
    let sq = jet_mul(a.clone(), a.clone()).unwrap();
    assert!((sq[0] - a[0] * a[0]).norm() < 1e-14);
    assert!((sq[1] - a[0] * a[1] * 2.0).norm() < 1e-14);
}

#[test]
fn scalar_helpers() {
    let x = C64::new(0.3, 0.7);
    let s = C64::new(2.0, -1.0);
    assert!((sigma(sigma(s, x), x) - s).norm() < 1e-12);
    assert!(nu_mass(x) > 0.0);
    assert_eq!(suite("gaudin").unwrap(), vec![9, 10, 11]);
}
