use nalgebra::DMatrix;
use povmap_core::hmc::gradcheck::gradient_check;
use povmap_core::hmc::PosteriorDraws;
use povmap_core::math::{gauss_hermite, inv_logit, normal_expectation, normal_lpdf, HALF_LN_2PI};
use povmap_core::model::priors::{half_cauchy_log_scale, uniform_logit};
use povmap_core::model::spec::{pointwise_loglik, BuiltModel, CovariateDesign, Model};
use povmap_core::model::*;
use povmap_core::ModelError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn design(rng: &mut impl Rng, m: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, p, |_, j| if j == 0 { 1.0 } else { normal(rng) })
}

fn univariate(family: Family, rng: &mut impl Rng, m: usize, missing: &[usize]) -> UnivariateModel {
    let x = design(rng, m, 3);
    let z = (0..m).map(|i| if missing.contains(&i) { None } else { Some(rng.random_range(0.05..0.95)) }).collect();
    let n_adjusted: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..60.0)).collect();
    let deff = rng.random_range(1.0..3.0);
    let variance = match family {
        Family::NlRs => SamplingVariance::RandomSampling { n_adjusted, deff },
        Family::NlPlugin => {
            let plugin: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..0.9)).collect();
            let ids: Vec<String> = (0..m).map(|i| i.to_string()).collect();
            SamplingVariance::Fixed(UnivariateModel::plugin_variances(&plugin, &n_adjusted, deff, &ids).unwrap())
        }
        _ => SamplingVariance::Fixed((0..m).map(|_| rng.random_range(0.002..0.2)).collect()),
    };
    let data = UnivariateData { area_ids: (0..m).map(|i| format!("a{i}")).collect(), z, x, variance };
    UnivariateModel::new(family, data, Priors::default()).unwrap()
}

fn random_sigma(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| normal(rng) * 0.1);
    &a * a.transpose() + DMatrix::identity(k, k) * 0.005
}

fn multivariate(rng: &mut impl Rng, m: usize, k: usize, prior: CorrelationPrior, missing: &[usize]) -> MultivariateModel {
    let x = design(rng, m, 2);
    let y = (0..m)
        .map(|i| (!missing.contains(&i)).then(|| (0..k).map(|_| rng.random_range(0.05..0.6)).collect()))
        .collect();
    let sigma = (0..m).map(|i| (!missing.contains(&i)).then(|| random_sigma(rng, k))).collect();
    let data = MultivariateData {
        area_ids: (0..m).map(|i| format!("a{i}")).collect(),
        k,
        y,
        sigma,
        design: MultivariateData::shared_design(&x, k),
    };
    MultivariateModel::new(data, Priors { correlation: prior, ..Priors::default() }).unwrap()
}

fn random_point(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| normal(rng)).collect()
}

#[test]
fn gradients_match_finite_differences_for_every_family() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for family in [Family::Fh, Family::Nl, Family::NlRs, Family::NlPlugin] {
        let model = univariate(family, &mut rng, 8, &[3]);
        let points: Vec<Vec<f64>> = (0..100).map(|_| random_point(&mut rng, model.dim())).collect();
        let report = gradient_check(&model, &points);
        assert!(report.max_relative_error < 1e-6, "{family}: {report:?}");
    }
    let model = multivariate(&mut rng, 6, 3, CorrelationPrior::Uniform, &[2]);
    let mut points = Vec::new();
    while points.len() < 100 {
        let x = random_point(&mut rng, model.dim());
        if build_correlation(&model.correlations(&x)).1 {
            points.push(x);
        }
    }
    let report = gradient_check(&model, &points);
    assert!(report.max_relative_error < 1e-6, "MV_LOGIT: {report:?}");
}

#[test]
fn mv_with_one_dimension_is_nl() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let m = rng.random_range(2..12);
        let x = design(&mut rng, m, 2);
        let missing = rng.random_range(0..m);
        let z: Vec<Option<f64>> = (0..m).map(|i| (i != missing).then(|| rng.random_range(0.02..0.98))).collect();
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(0.001..0.3)).collect();
        let ids: Vec<String> = (0..m).map(|i| format!("a{i}")).collect();
        let nl = UnivariateModel::new(
            Family::Nl,
            UnivariateData { area_ids: ids.clone(), z: z.clone(), x: x.clone(), variance: SamplingVariance::Fixed(d.clone()) },
            Priors::default(),
        )
        .unwrap();
        let mv = MultivariateModel::new(
            MultivariateData {
                area_ids: ids,
                k: 1,
                y: z.iter().map(|v| v.map(|v| vec![v])).collect(),
                sigma: z.iter().zip(&d).map(|(v, d)| v.map(|_| DMatrix::from_element(1, 1, *d))).collect(),
                design: MultivariateData::shared_design(&x, 1),
            },
            Priors::default(),
        )
        .unwrap();
        assert_eq!(nl.dim(), mv.dim());
        let p = random_point(&mut rng, nl.dim());
        let a = logpost_nl(&nl, &p).unwrap();
        let b = logpost_mv_logit(&mv, &p).unwrap();
        assert!((a.value - b.value).abs() < 1e-10, "{} vs {}", a.value, b.value);
        for (ga, gb) in a.gradient.iter().zip(&b.gradient) {
            assert!((ga - gb).abs() < 1e-10);
        }
    }
}

#[test]
fn independent_dimensions_factorize() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, k) = (5, 3);
    let x = design(&mut rng, m, 2);
    let ids: Vec<String> = (0..m).map(|i| format!("a{i}")).collect();
    let y: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| rng.random_range(0.1..0.5)).collect()).collect();
    let var: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| rng.random_range(0.001..0.05)).collect()).collect();
    let mv = MultivariateModel::new(
        MultivariateData {
            area_ids: ids.clone(),
            k,
            y: y.iter().cloned().map(Some).collect(),
            sigma: var.iter().map(|v| Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.clone())))).collect(),
            design: MultivariateData::dimension_specific_design(&x, k),
        },
        Priors { correlation: CorrelationPrior::Zero, ..Priors::default() },
    )
    .unwrap();
    let params = random_point(&mut rng, mv.dim());
    let u = params[2 * k];
    let mut total = 0.0;
    for d in 0..k {
        let nl = UnivariateModel::new(
            Family::Nl,
            UnivariateData {
                area_ids: ids.clone(),
                z: y.iter().map(|v| Some(v[d])).collect(),
                x: x.clone(),
                variance: SamplingVariance::Fixed(var.iter().map(|v| v[d]).collect()),
            },
            Priors::default(),
        )
        .unwrap();
        let mut p = params[2 * d..2 * d + 2].to_vec();
        p.push(u);
        p.extend((0..m).map(|i| params[2 * k + 1 + i * k + d]));
        total += evaluate(&nl, &p).unwrap().value;
    }
    // The shared scale prior appears once in the joint model and K times in the sum.
    total -= (k - 1) as f64 * half_cauchy_log_scale(u, 5.0).0;
    let joint = evaluate(&mv, &params).unwrap().value;
    assert!((joint - total).abs() < 1e-10, "{joint} vs {total}");
}

fn permute_univariate(model: &UnivariateModel, perm: &[usize]) -> UnivariateModel {
    let d = model.data();
    let x = DMatrix::from_fn(d.x.nrows(), d.x.ncols(), |i, j| d.x[(perm[i], j)]);
    let variance = match &d.variance {
        SamplingVariance::Fixed(v) => SamplingVariance::Fixed(perm.iter().map(|&i| v[i]).collect()),
        SamplingVariance::RandomSampling { n_adjusted, deff } => {
            SamplingVariance::RandomSampling { n_adjusted: perm.iter().map(|&i| n_adjusted[i]).collect(), deff: *deff }
        }
    };
    let data = UnivariateData {
        area_ids: perm.iter().map(|&i| d.area_ids[i].clone()).collect(),
        z: perm.iter().map(|&i| d.z[i]).collect(),
        x,
        variance,
    };
    UnivariateModel::new(model.family(), data, *model.priors()).unwrap()
}

#[test]
fn area_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = 7;
    let perm = [3, 0, 6, 1, 5, 2, 4];
    for family in [Family::Fh, Family::Nl, Family::NlRs, Family::NlPlugin] {
        let model = univariate(family, &mut rng, m, &[5]);
        let permuted = permute_univariate(&model, &perm);
        let x = random_point(&mut rng, model.dim());
        let p = model.n_coefficients() + 1;
        let mut xp = x[..p].to_vec();
        xp.extend(perm.iter().map(|&i| x[p + i]));
        let a = evaluate(&model, &x).unwrap();
        let b = evaluate(&permuted, &xp).unwrap();
        assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0), "{family}");
        for (j, &i) in perm.iter().enumerate() {
            assert!((a.gradient[p + i] - b.gradient[p + j]).abs() < 1e-12);
        }
        for j in 0..p {
            assert!((a.gradient[j] - b.gradient[j]).abs() <= 1e-10 * a.gradient[j].abs().max(1.0));
        }
    }

    let k = 3;
    let model = multivariate(&mut rng, m, k, CorrelationPrior::Uniform, &[1]);
    let d = model.data();
    let permuted = MultivariateModel::new(
        MultivariateData {
            area_ids: perm.iter().map(|&i| d.area_ids[i].clone()).collect(),
            k,
            y: perm.iter().map(|&i| d.y[i].clone()).collect(),
            sigma: perm.iter().map(|&i| d.sigma[i].clone()).collect(),
            design: perm.iter().map(|&i| d.design[i].clone()).collect(),
        },
        *model.priors(),
    )
    .unwrap();
    let mut x = random_point(&mut rng, model.dim());
    let off = model.lambda_offset();
    x[off - 3..off].copy_from_slice(&[-2.0, -1.5, -2.5]);
    let mut xp = x[..off].to_vec();
    for &i in &perm {
        xp.extend_from_slice(&x[off + i * k..off + (i + 1) * k]);
    }
    let a = evaluate(&model, &x).unwrap().value;
    let b = evaluate(&permuted, &xp).unwrap().value;
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
}

#[test]
fn fh_translation_changes_only_the_coefficient_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = univariate(Family::Fh, &mut rng, 6, &[]);
    let d = model.data();
    let c = 0.37;
    let shifted = UnivariateModel::new(
        Family::Fh,
        UnivariateData { z: d.z.iter().map(|z| z.map(|z| z + c)).collect(), ..d.clone() },
        Priors::default(),
    )
    .unwrap();
    let x = random_point(&mut rng, model.dim());
    let mut xs = x.clone();
    xs[0] += c;
    for v in &mut xs[4..] {
        *v += c;
    }
    let a = evaluate(&model, &x).unwrap().value;
    let b = evaluate(&shifted, &xs).unwrap().value;
    let prior_shift = normal_lpdf(x[0] + c, 0.0, 25.0) - normal_lpdf(x[0], 0.0, 25.0);
    assert!((b - a - prior_shift).abs() < 1e-10);
}

#[test]
fn nl_midpoint_and_plugin_reductions() {
    let ids = vec!["a".to_string(), "b".to_string()];
    let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let z = vec![Some(0.4), Some(0.7)];
    let (n_adj, deff, pbar) = ([4.0, 9.0], 2.0, 0.45);
    let smoothed: Vec<f64> = n_adj.iter().map(|n| pbar * (1.0 - pbar) * deff / n).collect();
    let nl = UnivariateModel::new(
        Family::Nl,
        UnivariateData { area_ids: ids.clone(), z: z.clone(), x: x.clone(), variance: SamplingVariance::Fixed(smoothed) },
        Priors::default(),
    )
    .unwrap();
    let plugin_d = UnivariateModel::plugin_variances(&[pbar, pbar], &n_adj, deff, &ids).unwrap();
    let plugin = UnivariateModel::new(
        Family::NlPlugin,
        UnivariateData { area_ids: ids.clone(), z, x, variance: SamplingVariance::Fixed(plugin_d) },
        Priors::default(),
    )
    .unwrap();
    let p = [0.2, -0.3, 0.0, 0.5];
    assert_eq!(nl.pi(0.0), 0.5);
    assert_eq!(logpost_nl(&nl, &p).unwrap().value, logpost_nl_plugin(&plugin, &p).unwrap().value);
    let half = UnivariateModel::plugin_variances(&[0.5], &[4.0], 2.0, &ids[..1]).unwrap();
    assert_eq!(half, vec![0.25 * 2.0 / 4.0]);
    assert!(matches!(logpost_fh(&nl, &p), Err(ModelError::FamilyMismatch(_))));
}

#[test]
fn nl_mode_tracks_direct_estimate_under_diffuse_linking() {
    let ids = vec!["a".to_string()];
    let nl = UnivariateModel::new(
        Family::Nl,
        UnivariateData {
            area_ids: ids,
            z: vec![Some(0.8)],
            x: DMatrix::from_element(1, 1, 1.0),
            variance: SamplingVariance::Fixed(vec![1e-4]),
        },
        Priors::default(),
    )
    .unwrap();
    let best = (0..40001)
        .map(|j| -4.0 + j as f64 * 2e-4)
        .max_by(|a, b| {
            let f = |phi: f64| evaluate(&nl, &[0.0, 6.0, phi]).unwrap().value;
            f(*a).total_cmp(&f(*b))
        })
        .unwrap();
    assert!((inv_logit(best) - 0.8).abs() < 1e-3);
}

#[test]
fn non_finite_input_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = univariate(Family::NlRs, &mut rng, 3, &[]);
    let mut x = vec![0.0; model.dim()];
    x[1] = f64::NAN;
    assert_eq!(logpost_nl_rs(&model, &x), Err(ModelError::InvalidParameterPoint));
    assert!(matches!(logpost_nl_rs(&model, &[0.0]), Err(ModelError::ParameterLength { .. })));
}

#[test]
fn jacobians_normalize_the_transformed_priors() {
    // Level 2 over the sampled coordinate of an unobserved area: the density in φ integrates
    // to one, so the posterior marginal of the other coordinates is prior(γ)·prior(log σ_v).
    let model = UnivariateModel::new(
        Family::Nl,
        UnivariateData {
            area_ids: vec!["a".into()],
            z: vec![None],
            x: DMatrix::from_element(1, 1, 1.0),
            variance: SamplingVariance::Fixed(vec![f64::NAN]),
        },
        Priors::default(),
    )
    .unwrap();
    let (gamma, u) = (0.4, -0.7);
    let h = 1e-3;
    let integral: f64 = (0..20001)
        .map(|j| {
            let phi = -10.0 + j as f64 * h;
            let w = if j == 0 || j == 20000 { 0.5 } else { 1.0 };
            w * evaluate(&model, &[gamma, u, phi]).unwrap().value.exp()
        })
        .sum::<f64>()
        * h;
    let marginal = (normal_lpdf(gamma, 0.0, 25.0) + half_cauchy_log_scale(u, 5.0).0).exp();
    assert!((integral / marginal - 1.0).abs() < 1e-6);

    let trapezoid = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize| {
        let h = (hi - lo) / n as f64;
        (0..=n).map(|j| if j == 0 || j == n { 0.5 } else { 1.0 } * f(lo + j as f64 * h)).sum::<f64>() * h
    };
    let sd_prior = trapezoid(&|u| half_cauchy_log_scale(u, 5.0).0.exp(), -40.0, 60.0, 400_000);
    assert!((sd_prior - 1.0).abs() < 1e-6, "{sd_prior}");
    let rho_prior = trapezoid(&|t| uniform_logit(t).0.exp(), -60.0, 60.0, 400_000);
    assert!((rho_prior - 1.0).abs() < 1e-6, "{rho_prior}");
}

#[test]
fn pd_flag_agrees_with_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let k = rng.random_range(3..=5);
        let rho: Vec<f64> = (0..k * (k - 1) / 2).map(|_| rng.random::<f64>()).collect();
        let (r, pd) = build_correlation(&rho);
        let min = r.clone().symmetric_eigen().eigenvalues.min();
        if min.abs() > 1e-12 {
            assert_eq!(pd, min > 0.0, "{rho:?}");
        }
    }
}

fn built(model: UnivariateModel) -> BuiltModel {
    let m = model.n_areas();
    BuiltModel {
        family: model.family(),
        design: CovariateDesign {
            names: vec!["intercept".into()],
            x: model.data().x.clone(),
            center: vec![],
            scale: vec![],
        },
        area_ids: (0..m).map(|i| format!("a{i}")).collect(),
        dimension_names: vec![],
        model: Model::Univariate(model),
    }
}

fn draws(rows: Vec<Vec<f64>>) -> PosteriorDraws {
    let dim = rows[0].len();
    PosteriorDraws {
        parameter_names: (0..dim).map(|j| format!("x{j}")).collect(),
        draws: vec![rows],
        divergences: vec![0],
        step_size: vec![1.0],
        mass_diag: vec![vec![1.0; dim]],
        mean_accept: vec![0.8],
        n_leapfrog: vec![0],
    }
}

fn one_area(family: Family, z: f64, d: f64) -> UnivariateModel {
    UnivariateModel::new(
        family,
        UnivariateData {
            area_ids: vec!["a0".into()],
            z: vec![Some(z)],
            x: DMatrix::from_element(1, 1, 1.0),
            variance: SamplingVariance::Fixed(vec![d]),
        },
        Priors::default(),
    )
    .unwrap()
}

#[test]
fn pointwise_loglik_cases() {
    let fh = built(one_area(Family::Fh, 0.3, 1.0));
    let ll = pointwise_loglik(&fh, &draws(vec![vec![0.0, 0.0, 0.3]])).unwrap();
    assert!((ll[0][0] + HALF_LN_2PI).abs() < 1e-15);

    let constant = pointwise_loglik(&fh, &draws(vec![vec![0.1, 0.2, 0.25]; 5])).unwrap();
    assert!(constant.windows(2).all(|w| w[0] == w[1]));

    assert!(matches!(pointwise_loglik(&fh, &draws(vec![vec![0.0; 4]])), Err(ModelError::FamilyMismatch(_))));
}

#[test]
fn predictive_density_matches_quadrature() {
    // φ draws from N(μ, s²); the mean of exp(loglik) estimates E[N(z | inv_logit φ, D)].
    let (z, d, mu, s) = (0.3, 0.02, -0.5, 0.4);
    let nl = built(one_area(Family::Nl, z, d));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..100_000).map(|_| vec![0.0, 0.0, mu + s * normal(&mut rng)]).collect();
    let ll = pointwise_loglik(&nl, &draws(rows)).unwrap();
    let dens: Vec<f64> = ll.iter().map(|r| r[0].exp()).collect();
    let mc = povmap_core::math::mean(&dens);
    let se = (povmap_core::math::sample_variance(&dens) / dens.len() as f64).sqrt();
    let (nodes, weights) = gauss_hermite(60);
    let exact = normal_expectation(mu, s, &nodes, &weights, |phi| normal_lpdf(z, inv_logit(phi), d).exp());
    assert!((mc - exact).abs() < 4.0 * se, "{mc} vs {exact} (se {se})");
}
