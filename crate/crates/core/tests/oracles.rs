//! Reference values computed independently (closed forms, hand evaluation,
//! and high-precision quadrature with a different splitting of the
//! frequency axis) and frozen here.

use approx::assert_abs_diff_eq;
use ofbm_core::linalg::{cholesky_psd, mat_exp, mat_power, operator_norm, spectral_real_bounds};
use ofbm_core::model::{gamma_mason_xiao, kernel_g1, kernel_g2, reversible_covariance, spectral_covariance};
use ofbm_core::partial_sums::{fgn_covariance, partial_sum_path, Normalization, PartialSumConfig};
use ofbm_core::{OfbmError, OfbmSpec, Operator, QuadratureConfig};

fn op(rows: &[&[f64]]) -> Operator {
    Operator::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn max_rel(a: &Operator, b: &Operator) -> f64 {
    (a - b).max_abs() / b.max_abs()
}

#[test]
fn matrix_function_values() {
    let e = mat_exp(&Operator::diag(&[1.0, 2.0])).unwrap();
    assert_abs_diff_eq!(e.get(0, 0), std::f64::consts::E, epsilon = 1e-12);
    assert_abs_diff_eq!(e.get(1, 1), 7.38905609893065, epsilon = 1e-11);
    assert_eq!(
        mat_exp(&op(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap(),
        op(&[&[1.0, 1.0], &[0.0, 1.0]])
    );

    let p = mat_power(4.0, &Operator::diag(&[0.5, 0.25])).unwrap();
    assert_abs_diff_eq!(p.get(0, 0), 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p.get(1, 1), std::f64::consts::SQRT_2, epsilon = 1e-12);
    let j = mat_power(std::f64::consts::E, &op(&[&[0.5, 1.0], &[0.0, 0.5]])).unwrap();
    let r = 0.5f64.exp();
    assert!(max_rel(&j, &op(&[&[r, r], &[0.0, r]])) <= 1e-12);
    assert!(matches!(
        mat_power(0.0, &Operator::identity(2)),
        Err(OfbmError::Domain(_))
    ));

    assert_abs_diff_eq!(
        operator_norm(&op(&[&[0.0, 2.0], &[0.0, 0.0]])).unwrap(),
        2.0,
        epsilon = 1e-10
    );
    let b = spectral_real_bounds(&op(&[&[0.5, -1.0], &[1.0, 0.5]])).unwrap();
    assert_abs_diff_eq!(b.lambda_min, 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(b.lambda_max, 0.5, epsilon = 1e-9);

    let c = cholesky_psd(&op(&[&[4.0, 2.0], &[2.0, 5.0]]), 0.0).unwrap();
    assert_eq!(c.jitter, 0.0);
    assert!((&c.lower - &op(&[&[2.0, 0.0], &[1.0, 2.0]])).max_abs() <= 1e-14);
    assert!(matches!(
        cholesky_psd(&op(&[&[1.0, 2.0], &[2.0, 1.0]]), 1e-6),
        Err(OfbmError::NotPositiveSemidefinite(_))
    ));
}

#[test]
fn kernel_values() {
    let pi = std::f64::consts::PI;
    let a2 = OfbmSpec::new(Operator::diag(&[0.5]), Operator::zeros(1), Operator::identity(1), "").unwrap();
    assert_abs_diff_eq!(kernel_g1(pi, 1.0, &a2).unwrap().get(0, 0), -2.0 / pi, epsilon = 1e-15);
    let a1 = OfbmSpec::mason_xiao(Operator::diag(&[0.5]));
    assert_abs_diff_eq!(kernel_g1(pi, 1.0, &a1).unwrap().get(0, 0), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(kernel_g2(pi, 1.0, &a1).unwrap().get(0, 0), 2.0 / pi, epsilon = 1e-15);
}

#[test]
fn gamma_closed_forms() {
    // 2 Γ(2 - 2H) cos(πH) / (2H (1 - 2H)), the π case being its H → ½ limit.
    let q = QuadratureConfig::default();
    for (h, expected) in [
        (0.3, 4.34600489017523),
        (0.5, std::f64::consts::PI),
        (0.7, 3.12616157743013),
    ] {
        let g = gamma_mason_xiao(&Operator::diag(&[h]), &q).unwrap().get(0, 0);
        assert!(((g - expected) / expected).abs() <= 1e-8, "H={h}: {g} vs {expected}");
    }
    let g = gamma_mason_xiao(&Operator::diag(&[0.7, 0.6]), &q).unwrap();
    assert!(g.get(0, 1).abs() <= 1e-10 && g.get(1, 0).abs() <= 1e-10);
}

#[test]
fn fbm_shape_reference_point() {
    let q = QuadratureConfig::default();
    let spec = OfbmSpec::mason_xiao(Operator::diag(&[0.7]));
    let ratio = spectral_covariance(0.75, 0.5, &spec, &q).unwrap().get(0, 0)
        / spectral_covariance(1.0, 1.0, &spec, &q).unwrap().get(0, 0);
    let expected = 0.5 * (0.75f64.powf(1.4) + 0.5f64.powf(1.4) - 0.25f64.powf(1.4));
    assert_abs_diff_eq!(ratio, expected, epsilon = 1e-5);
}

#[test]
fn reversible_and_noise_values() {
    let r = reversible_covariance(0.3, 0.8, &Operator::diag(&[0.5]), &Operator::identity(1)).unwrap();
    assert_abs_diff_eq!(r.get(0, 0), 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(fgn_covariance(0.7, 1).unwrap(), 0.3195079107728942, epsilon = 1e-15);

    let cfg = PartialSumConfig::new(4, Operator::diag(&[0.5]), Normalization::AutoFgn).unwrap();
    let z: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
    let path = partial_sum_path(&z, &cfg, &[0.0, 0.5]).unwrap();
    assert_abs_diff_eq!(path.values[1][0], 1.5, epsilon = 1e-15);
}

#[test]
fn non_normal_non_reversible_spectral_values() {
    let spec = OfbmSpec::new(
        op(&[&[0.6, 0.1], &[0.0, 0.7]]),
        op(&[&[1.0, 0.2], &[0.0, 1.0]]),
        op(&[&[0.0, 0.5], &[-0.3, 0.0]]),
        "",
    )
    .unwrap();
    let q = QuadratureConfig::default();
    for (t, s, expected) in [
        (
            0.3,
            0.8,
            op(&[
                &[1.11322214554364, 0.491205905890383],
                &[-0.139959292438321, 0.916790843169921],
            ]),
        ),
        (
            0.5,
            1.0,
            op(&[
                &[1.98218638736788, 0.804358575266378],
                &[-0.0864899551026159, 1.70375805969942],
            ]),
        ),
        (
            1.0,
            1.0,
            op(&[
                &[3.96437277473576, 0.717868620163762],
                &[0.717868620163762, 3.40751611939884],
            ]),
        ),
    ] {
        let r = spectral_covariance(t, s, &spec, &q).unwrap();
        assert!(max_rel(&r, &expected) <= 1e-8, "({t}, {s}): {r:?}");
    }
}
