//! Every sampler conditional against the explicit completing-the-square
//! route, on 50 random small problems.

use mrccc_core::verify::check_gibbs_conditionals;

#[test]
fn all_conditionals_match_completing_the_square_oracle() {
    let report = check_gibbs_conditionals(50, 1e-8, 1e-10).unwrap();
    assert_eq!(report.instances, 50);
    eprintln!(
        "conditional suite: max gaussian err {:.3e}, max IG err {:.3e}",
        report.max_gaussian_err, report.max_ig_err
    );
}

/// The spike conditional (gamma = 0) shrinks the draw covariance by nearly
/// nu_1 relative to the slab for large g_beta.
#[test]
fn spike_and_slab_covariances_scale_with_nu() {
    use mrccc_core::gibbs::{GibbsSampler, Hyperparams};
    use mrccc_core::model::{center_dataset, Dataset};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    let n = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut mat = |cols: usize| {
        DMatrix::from_fn(n, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    let g = mat(3);
    let h = mat(2);
    let v = mat(2);
    let x = DVector::from_fn(n, |i, _| g[(i, 0)] * 0.5 + (i as f64 * 0.37).sin());
    let z = DVector::from_fn(n, |i, _| h[(i, 0)] * 0.5 + (i as f64 * 0.53).cos());
    let y = DVector::from_fn(n, |i, _| x[i] * 0.3 + z[i] * 0.5 + (i as f64 * 0.71).sin());
    let data = Dataset::new(g, h, v, x, z, y).unwrap();
    let (data, _) = center_dataset(&data);
    let hyper = Hyperparams::for_sample_size(n);
    let (g_beta, nu_1) = (hyper.g_beta, hyper.nu_1);

    let mut sampler = GibbsSampler::new(&data, hyper, 0).unwrap();
    sampler.state.gamma = true;
    let slab = sampler.beta_conditional().covariance().unwrap();
    sampler.state.gamma = false;
    let spike = sampler.beta_conditional().covariance().unwrap();

    let ratio = spike[(0, 0)] / slab[(0, 0)];
    let expected = (g_beta * nu_1 / (1.0 + g_beta * nu_1)) / (g_beta / (1.0 + g_beta));
    assert!(
        (ratio - expected).abs() < 1e-6,
        "spike/slab covariance ratio {ratio}, expected {expected}"
    );
}
