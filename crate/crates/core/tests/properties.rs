use proptest::prelude::*;
use stablim::laws::{cf_increment, LimitLaw, SpectralMeasure};
use stablim::matalg::{gelfand_index, psd_sqrt, spectral_radius, tail_certificate, SquareMatrix, Vector};
use stablim::rng::StreamKey;
use stablim::series::{truncation_index, LimitSeries, TruncationPlan};

fn contraction(dim: usize) -> impl Strategy<Value = SquareMatrix> {
    (prop::collection::vec(-1.0f64..1.0, dim * dim), 0.05f64..0.95).prop_filter_map("singular", move |(e, target)| {
        let m = SquareMatrix::from_row_slice(dim, &e).ok()?;
        let rho = spectral_radius(&m).ok()?;
        if rho < 1e-3 {
            return None;
        }
        Some(m.scale(target / rho))
    })
}

fn small_dim_contraction() -> impl Strategy<Value = SquareMatrix> {
    (1usize..=3).prop_flat_map(contraction)
}

fn unit_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter_map("zero", |v| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 1e-3).then(|| v.iter().map(|x| x / n).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_radius_of_powers(p in small_dim_contraction(), k in 1u32..6) {
        let rho = spectral_radius(&p).unwrap();
        let rho_k = spectral_radius(&p.pow(k)).unwrap();
        prop_assert!((rho_k - rho.powi(k as i32)).abs() <= 1e-8 * (1.0 + rho.powi(k as i32)) + 1e-10);
    }

    #[test]
    fn certificate_replays_and_bounds_powers(p in small_dim_contraction()) {
        let cert = tail_certificate(&p).unwrap();
        let again = gelfand_index(&p, cert.horizon).unwrap();
        prop_assert_eq!(cert.k0, again.k0);
        prop_assert_eq!(cert.rate.to_bits(), again.rate.to_bits());
        prop_assert!(cert.covers_all_indices());
        prop_assert!(cert.rate <= cert.ratio);
        let mut m = SquareMatrix::identity(p.dim());
        for j in 1..=(2 * cert.horizon).min(400) {
            m = m.mul(&p);
            if j >= cert.k0 {
                prop_assert!(m.norm() <= cert.ratio.powi(j as i32) * (1.0 + 1e-9), "j = {}", j);
            }
        }
    }

    #[test]
    fn powers_form_a_semigroup(p in small_dim_contraction(), a in 0u32..8, b in 0u32..8) {
        let lhs = p.pow(a).mul(&p.pow(b));
        let rhs = p.pow(a + b);
        prop_assert!(lhs.sub(&rhs).frobenius_norm() <= 1e-12 * (1.0 + rhs.frobenius_norm()));
    }

    #[test]
    fn psd_sqrt_reconstructs(e in prop::collection::vec(-2.0f64..2.0, 9)) {
        let a = SquareMatrix::from_row_slice(3, &e).unwrap();
        let v = a.mul(&a.transpose());
        let s = psd_sqrt(&v).unwrap();
        prop_assert!(s.sub(&s.transpose()).frobenius_norm() <= 1e-10);
        prop_assert!(s.mul(&s).sub(&v).frobenius_norm() <= 1e-9 * (1.0 + v.frobenius_norm()));
    }

    #[test]
    fn cf_is_bounded_by_one(
        alpha in 0.1f64..1.99,
        atom in unit_vector(2),
        weight in 0.01f64..5.0,
        theta in prop::collection::vec(-10.0f64..10.0, 2),
    ) {
        let t = Vector::from_vec(theta);
        let laws = [
            LimitLaw::stable(alpha, SpectralMeasure::single(atom, weight).unwrap()).unwrap(),
            LimitLaw::cauchy(2).unwrap(),
            LimitLaw::normal(SquareMatrix::scaled_identity(2, weight)).unwrap(),
        ];
        for law in &laws {
            prop_assert!(cf_increment(law, &t).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn truncation_is_monotone_and_bounds_the_tail(p in small_dim_contraction(), e1 in 1.0f64..8.0, e2 in 1.0f64..8.0) {
        let (loose, tight) = (10f64.powf(-e1.min(e2)), 10f64.powf(-e1.max(e2)));
        let a = truncation_index(&p, loose).unwrap();
        let b = truncation_index(&p, tight).unwrap();
        prop_assert!(a.r <= b.r);
        let mut m = p.pow(b.r as u32 + 1);
        let mut tail = 0.0;
        for _ in 0..50 {
            tail += m.norm();
            m = m.mul(&p);
        }
        prop_assert!(tail <= b.tail_norm_bound * (1.0 + 1e-9));
        prop_assert!(b.tail_norm_bound <= tight);
        prop_assert_eq!(b.recomputed_tail().to_bits(), b.tail_norm_bound.to_bits());
    }

    #[test]
    fn series_draws_are_reproducible(p in contraction(2), seed in any::<u64>(), r in 0usize..12) {
        let plan = TruncationPlan::fixed(&p, r).unwrap();
        let series = LimitSeries::new(&p, LimitLaw::cauchy(2).unwrap(), &plan).unwrap();
        let key = StreamKey::new(seed, 2);
        let x = series.sample(&mut key.stream(3));
        let y = series.sample(&mut key.stream(3));
        prop_assert_eq!(x, y);
    }
}
