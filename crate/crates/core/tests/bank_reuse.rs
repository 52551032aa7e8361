//! Kept in its own test binary: it reads process-wide counters.

use levy_iterates::{
    convolution_segment, covariance_integral, generate_bank, generated_path_count, v0_estimate,
    v1_estimate, BankConfig, ProblemSpec, QueryParams, VectorField,
};

#[test]
fn queries_at_new_noise_levels_reuse_the_bank() {
    let spec = ProblemSpec::with_squared_modes(0.7, 6, 1.0).unwrap();
    let bank = generate_bank(&spec, &BankConfig::new(1e-3, 1e-2, 64, 64, 12)).unwrap();
    let before = generated_path_count();
    let snapshot = bank.clone();

    let mut v0 = Vec::new();
    let mut v1 = Vec::new();
    for sigma in [0.5, 1.0] {
        let q = QueryParams {
            s: 0.0,
            t: 1.0,
            x: vec![1.0; 6],
            sigma_scale: sigma,
            radius: 1.0,
            field: VectorField::Sine,
            use_shift: true,
        };
        let shift = q.build_shift(&spec, 1e-3).unwrap();
        v0.push(v0_estimate(&bank, &spec, &shift, &q).unwrap());
        v1.push(v1_estimate(&bank, &spec, &shift, &q, 1e-2, 64, 0).unwrap());
    }
    assert_eq!(generated_path_count(), before, "no path may be simulated by a query");
    assert_eq!(bank, snapshot);
    assert_ne!(v0[0].value, v0[1].value);
    assert_ne!(v1[0].value, v1[1].value);

    for r in &bank.records {
        let (a, b) = (
            convolution_segment(&bank, r, &spec, 0.5, 0.3, 0.9).unwrap(),
            convolution_segment(&bank, r, &spec, 1.0, 0.3, 0.9).unwrap(),
        );
        let (ca, cb) = (
            covariance_integral(&r.sub, &spec, 0.5, 0.3, 0.9).unwrap(),
            covariance_integral(&r.sub, &spec, 1.0, 0.3, 0.9).unwrap(),
        );
        for k in 0..6 {
            assert_eq!(b[k], 2.0 * a[k]);
            assert_eq!(cb[k], 4.0 * ca[k]);
        }
    }
}
