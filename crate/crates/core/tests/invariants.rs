use hecke_core::group::{anchored_element, sigma};
use hecke_core::hecke::{nu_mass, nu_mass_periods};
use hecke_core::jet::Jet;
use hecke_core::quadrature::Quad;
use hecke_core::C64;
use proptest::prelude::*;

fn complex(r: f64) -> impl Strategy<Value = C64> {
    (-r..r, -r..r).prop_map(|(a, b)| C64::new(a, b))
}

fn unit_jet() -> impl Strategy<Value = Jet> {
    (1usize..=6, complex(2.0), prop::collection::vec(complex(1.0), 5))
        .prop_filter("unit", |(_, a0, _)| a0.norm() > 0.3)
        .prop_map(|(d, a0, rest)| {
            let mut c = vec![a0];
            c.extend(rest);
            Jet::new(&c, d).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exp_inverts_log(a in unit_jet()) {
        let back = a.log().unwrap().exp();
        prop_assert!((back - a).max_abs() < 1e-10 * a.max_abs().max(1.0));
    }

    #[test]
    fn inverse_is_two_sided(a in unit_jet()) {
        let one = Jet::one(a.order());
        prop_assert!((a * a.inv().unwrap() - one).max_abs() < 1e-10);
    }

    #[test]
    fn sigma_is_an_involution(s in complex(4.0), x in complex(2.0)) {
        prop_assume!((s - x).norm() > 0.1 && x.norm() > 0.1 && (x - 1.0).norm() > 0.1);
        let t = sigma(s, x);
        prop_assume!((t - x).norm() > 1e-3);
        prop_assert!((sigma(t, x) - s).norm() < 1e-8 * (1.0 + s.norm()));
    }

    #[test]
    fn sigma_pairs_multiply_to_scalars(s in complex(3.0), x in complex(2.0), t in complex(3.0), d in 1usize..4) {
        prop_assume!([s, s - 1.0, s - x, t - x, x, x - 1.0].iter().all(|z| z.norm() > 0.2));
        let g = anchored_element(s, x, t, d).unwrap();
        let h = anchored_element(sigma(s, x), x, t, d).unwrap();
        prop_assert!(g.mul(&h).distance_from_scalar() < 1e-8);
    }
}

#[test]
fn nu_mass_matches_periods_off_the_real_axis() {
    for x in [C64::new(0.3, 0.8), C64::new(-1.5, 0.4), C64::new(2.0, -2.0)] {
        let a = nu_mass(x, &Quad::adaptive(1e-10)).unwrap();
        let b = nu_mass_periods(x);
        assert!((a - b).abs() < 1e-6 * b, "{x}: {a} vs {b}");
    }
}
