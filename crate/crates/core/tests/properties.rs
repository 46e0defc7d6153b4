use proptest::prelude::*;

use spheroid_cld::field::{cumulative, differentiate, DensityField, FieldKind};
use spheroid_cld::geometry::ShapeParam;
use spheroid_cld::kernel::OrientationTable;
use spheroid_cld::operator::KernelOperator;
use spheroid_cld::quadrature::AngularQuadSpec;
use spheroid_cld::Grid1D;

fn table(eta: f64) -> OrientationTable {
    OrientationTable::new(ShapeParam::new(eta).unwrap(), AngularQuadSpec::new(24, 24).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_a_cdf_in_ell(eta in 0.2f64..5.0, r in 1e-5f64..1e-2, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let t = table(eta);
        let top = ShapeParam::new(eta).unwrap().max_chord_factor() * r;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let k_lo = t.kernel(lo * top, r);
        let k_hi = t.kernel(hi * top, r);
        prop_assert!((0.0..=1.0).contains(&k_lo));
        prop_assert!(k_lo <= k_hi + 1e-12);
        prop_assert_eq!(t.kernel(0.0, r), 0.0);
        prop_assert!((t.kernel(1.01 * top, r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_decreases_in_r(eta in 0.2f64..5.0, ell in 1e-5f64..1e-3, s in 1.0f64..3.0) {
        let t = table(eta);
        let r = 2e-4;
        prop_assert!(t.kernel(ell, s * r) <= t.kernel(ell, r) + 1e-12);
    }

    #[test]
    fn kernel_scales_with_ell_over_r(eta in 0.2f64..5.0, x in 0.0f64..3.0, r in 1e-5f64..1e-2, c in 0.1f64..10.0) {
        let t = table(eta);
        let a = t.kernel(x * r, r);
        let b = t.kernel(x * c * r, c * r);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn adjoint_identity_holds(
        psd in prop::collection::vec(0.0f64..1.0, 12),
        q in prop::collection::vec(-1.0f64..1.0, 16),
        eta in 0.3f64..3.0,
        truncate in any::<bool>(),
    ) {
        let rg = Grid1D::new(1e-4, 3e-4, 12).unwrap();
        let shape = ShapeParam::new(eta).unwrap();
        let cg = Grid1D::new(0.0, 2.0 * 3e-4 * eta.max(1.0), 16).unwrap();
        let mut op = KernelOperator::build(rg.clone(), cg.clone(), &[shape], AngularQuadSpec::new(8, 8).unwrap()).unwrap();
        if truncate {
            op = op.truncated_to_support();
        }
        let psd = DensityField::new(rg.clone(), psd, FieldKind::Psd).unwrap();
        let q = DensityField::new(cg.clone(), q, FieldKind::CumulativeCld).unwrap();
        let lhs = cg.dot(&op.apply(std::slice::from_ref(&psd)).unwrap().values, &q.values);
        let rhs = rg.dot(&psd.values, &op.apply_adjoint(&q).unwrap()[0].values);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1e-300));
    }

    #[test]
    fn cumulative_then_differentiate_recovers_linear_data(slope in -5.0f64..5.0, offset in -1.0f64..1.0) {
        let g = Grid1D::new(0.0, 1.0, 21).unwrap();
        let q = DensityField::from_fn(g, FieldKind::Cld, |x| offset + slope * x).unwrap();
        let back = differentiate(&cumulative(&q));
        for (a, b) in back.values.iter().zip(&q.values) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
