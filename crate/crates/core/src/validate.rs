//! Self-contained numerical oracles for the engine's core math.
//!
//! Each oracle checks a closed-form quantity used by the engine against an
//! independent route: brute-force sampling for the heading-vector moments,
//! 2-D quadrature for density normalization, direct numeric determinants,
//! hand-composed factor chains for the segment density, and sample moments
//! for the priors. The `validate` CLI command runs them all and reports
//! pass/fail per oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bootstrap::{sample_params, PriorConfig};
use crate::geo::{PlanarPoint, Receiver};
use crate::ingest::SegmentSpec;
use crate::likelihood::{logp0, logp1, logp2, segment_loglik, sigma_z_det, taylor_moments};
use crate::movement::{impute_segment, Floors, SimOptions};

/// Outcome of one oracle run.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl OracleReport {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, pass, detail }
    }
}

/// Inverse standard-normal CDF: Acklam's rational approximation polished
/// with one Halley step against erfc, giving near machine precision.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p={p} outside (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley refinement.
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Heading-vector moment oracle: stratified samples of
/// theta* ~ Normal(theta, v) over a 3x3 grid of (theta, v); the empirical
/// mean and covariance of (cos theta*, sin theta*) must match the expansion
/// within max(3 standard errors, v^2) per statistic.
pub fn taylor_moment_oracle(samples_per_combo: usize) -> OracleReport {
    let thetas = [0.0, 0.7, 2.4];
    let variances = [0.01, 0.05, 0.25];
    let n = samples_per_combo;
    let mut worst: f64 = 0.0;
    let mut worst_desc = String::new();
    let mut pass = true;

    let mut z = vec![[0.0f64; 2]; n];
    for &theta in &thetas {
        for &v in &variances {
            let tm = taylor_moments(theta, v);
            let sd = v.sqrt();
            for (i, zi) in z.iter_mut().enumerate() {
                let u = (i as f64 + 0.5) / n as f64;
                let t_star = theta + sd * inverse_normal_cdf(u);
                *zi = [t_star.cos(), t_star.sin()];
            }
            let mut mean = [0.0f64; 2];
            for zi in &z {
                mean[0] += zi[0];
                mean[1] += zi[1];
            }
            mean[0] /= n as f64;
            mean[1] /= n as f64;

            // central moments needed for the covariance and its standard errors
            let mut cov = [[0.0f64; 2]; 2];
            let mut m4 = [0.0f64; 2];
            let mut m22 = 0.0f64;
            for zi in &z {
                let d = [zi[0] - mean[0], zi[1] - mean[1]];
                cov[0][0] += d[0] * d[0];
                cov[0][1] += d[0] * d[1];
                cov[1][1] += d[1] * d[1];
                m4[0] += d[0].powi(4);
                m4[1] += d[1].powi(4);
                m22 += d[0] * d[0] * d[1] * d[1];
            }
            cov[0][0] /= (n - 1) as f64;
            cov[0][1] /= (n - 1) as f64;
            cov[1][1] /= (n - 1) as f64;
            cov[1][0] = cov[0][1];
            m4[0] /= n as f64;
            m4[1] /= n as f64;
            m22 /= n as f64;

            let se_mean = [
                (cov[0][0] / n as f64).sqrt(),
                (cov[1][1] / n as f64).sqrt(),
            ];
            let se_var = [
                ((m4[0] - cov[0][0] * cov[0][0]).max(0.0) / n as f64).sqrt(),
                ((m4[1] - cov[1][1] * cov[1][1]).max(0.0) / n as f64).sqrt(),
            ];
            let se_cov = ((m22 - cov[0][1] * cov[0][1]).max(0.0) / n as f64).sqrt();

            let checks = [
                ("mean_cos", mean[0], tm.mu_z[0], se_mean[0]),
                ("mean_sin", mean[1], tm.mu_z[1], se_mean[1]),
                ("var_cos", cov[0][0], tm.sigma_z[0][0], se_var[0]),
                ("var_sin", cov[1][1], tm.sigma_z[1][1], se_var[1]),
                ("cov", cov[0][1], tm.sigma_z[0][1], se_cov),
            ];
            for (stat, got, expected, se) in checks {
                let tol = (3.0 * se).max(v * v);
                let err = (got - expected).abs();
                let ratio = err / tol;
                if ratio > worst {
                    worst = ratio;
                    worst_desc =
                        format!("{stat} at theta={theta}, v={v}: |{got:.6e} - {expected:.6e}| vs tol {tol:.3e}");
                }
                if err > tol {
                    pass = false;
                }
            }
        }
    }
    OracleReport::new(
        "taylor-moments",
        pass,
        format!("worst error/tolerance ratio {worst:.3} ({worst_desc})"),
    )
}

/// Determinant oracle against an arbitrary closed form (exposed so a
/// deliberately wrong formula can be shown to fail).
pub fn determinant_oracle_against(closed_form: fn(f64) -> f64, n_pairs: usize) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eedde7);
    let mut worst = 0.0f64;
    for _ in 0..n_pairs {
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let v = rng.random_range(0.01..1.0);
        let numeric = taylor_moments(theta, v).det_sigma_z();
        let closed = closed_form(v);
        worst = worst.max((numeric - closed).abs() / closed.abs());
    }
    OracleReport::new(
        "determinant-identity",
        worst <= 1e-12,
        format!("max relative error {worst:.3e} over {n_pairs} pairs (cap 1e-12)"),
    )
}

/// The covariance determinant must equal its closed form within 1e-12
/// relative over random (theta, v) pairs.
pub fn determinant_oracle(n_pairs: usize) -> OracleReport {
    determinant_oracle_against(sigma_z_det, n_pairs)
}

/// For T=4 segments, the segment log-density must equal the chain of
/// individual factors composed by hand, within 1e-10.
pub fn factorization_oracle(n_draws: usize) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfac70e1);
    let priors = PriorConfig::default();
    let floors = Floors::default();
    let opts = SimOptions::default();
    let mut worst = 0.0f64;
    for i in 0..n_draws {
        let dist = rng.random_range(2000.0..15_000.0);
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let start = Receiver::new("s", PlanarPoint::new(0.0, 0.0), 500.0).expect("radius > 0");
        let end = Receiver::new(
            "e",
            PlanarPoint::new(dist * angle.cos(), dist * angle.sin()),
            500.0,
        )
        .expect("radius > 0");
        let spec = SegmentSpec::new(format!("f{i}"), 1, start, end, 4).expect("T >= 2");

        let params = sample_params(&priors, 500.0, &mut rng);
        let draw = impute_segment(&spec, &params, &opts, &mut rng).expect("simulation is total");
        let ll = segment_loglik(&draw, &params, &floors).expect("fresh draw is consistent");

        let (l2, l3) = (&draw.latents[0], &draw.latents[1]);
        let hand = logp1(draw.position(3), draw.position(2), l3.dist_draw, l3.theta, l3.sigma_psi_sq, &floors)
            + logp2(l3.dist_draw, l3.d_remaining, 3, 4, params.phi, &floors)
            + logp1(draw.position(2), draw.position(1), l2.dist_draw, l2.theta, l2.sigma_psi_sq, &floors)
            + logp2(l2.dist_draw, l2.d_remaining, 2, 4, params.phi, &floors)
            + logp0(draw.start(), draw.end(), &spec.start_receiver, &spec.end_receiver, params.sigma_r_sq);
        worst = worst.max((ll - hand).abs());
    }
    OracleReport::new(
        "t4-factorization",
        worst <= 1e-10,
        format!("max |composed - direct| = {worst:.3e} over {n_draws} draws (cap 1e-10)"),
    )
}

/// Composite Simpson integration on [a, b] x [c, d].
fn simpson_2d(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, c: f64, d: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2), "Simpson needs an even interval count");
    let hx = (b - a) / n as f64;
    let hy = (d - c) / n as f64;
    let w = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut total = 0.0;
    for i in 0..=n {
        let x = a + i as f64 * hx;
        let mut row = 0.0;
        for j in 0..=n {
            row += w(j) * f(x, c + j as f64 * hy);
        }
        total += w(i) * row;
    }
    total * hx * hy / 9.0
}

fn largest_eigenvalue_2x2(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let disc = ((m[0][0] - m[1][1]).powi(2) + 4.0 * m[0][1] * m[1][0]).sqrt();
    (tr + disc) / 2.0
}

/// Quadrature oracle: exp of the step density integrates to 1 over its
/// landing point, and exp of the endpoint density integrates to
/// 1/(2 pi sigma_R^2) over one endpoint (the other held at its receiver).
pub fn normalization_oracle(intervals: usize) -> OracleReport {
    let floors = Floors::default();
    let mut worst = 0.0f64;
    let mut detail = String::new();

    let step_settings = [(0.3, 0.05, 1500.0), (2.0, 0.2, 300.0), (-1.2, 0.01, 5000.0)];
    for (theta, v, step) in step_settings {
        let x_prev = PlanarPoint::new(0.0, 0.0);
        let tm = taylor_moments(theta, v);
        let mean = PlanarPoint::new(step * tm.mu_z[0], step * tm.mu_z[1]);
        let cov = [
            [step * step * tm.sigma_z[0][0], step * step * tm.sigma_z[0][1]],
            [step * step * tm.sigma_z[1][0], step * step * tm.sigma_z[1][1]],
        ];
        let half = 6.5 * largest_eigenvalue_2x2(cov).sqrt();
        let integral = simpson_2d(
            |x, y| logp1(PlanarPoint::new(x, y), x_prev, step, theta, v, &floors).exp(),
            mean.x - half,
            mean.x + half,
            mean.y - half,
            mean.y + half,
            intervals,
        );
        let err = (integral - 1.0).abs();
        worst = worst.max(err);
        detail.push_str(&format!("P1(theta={theta},v={v},D={step}): {integral:.6}; "));
    }

    for sigma_r_sq in [0.00149f64, 2500.0, 10_000.0] {
        let r1 = Receiver::new("a", PlanarPoint::new(0.0, 0.0), 500.0).expect("radius > 0");
        let rt = Receiver::new("b", PlanarPoint::new(4000.0, 0.0), 500.0).expect("radius > 0");
        let half = 6.5 * sigma_r_sq.sqrt();
        let norm = 2.0 * std::f64::consts::PI * sigma_r_sq;
        let integral = simpson_2d(
            |x, y| logp0(PlanarPoint::new(x, y), rt.position, &r1, &rt, sigma_r_sq).exp() * norm,
            -half,
            half,
            -half,
            half,
            intervals,
        );
        let err = (integral - 1.0).abs();
        worst = worst.max(err);
        detail.push_str(&format!("P0(sigma_r_sq={sigma_r_sq}): {integral:.6}; "));
    }

    OracleReport::new(
        "density-normalization",
        worst <= 1e-3,
        format!("max |integral - 1| = {worst:.2e} (cap 1e-3); {detail}"),
    )
}

/// Sample-moment oracle for the priors: the alpha prior has mean 1, the
/// endpoint-variance prior has mean scale/(shape-1), beta never varies, and
/// every sampled parameter respects its support.
pub fn prior_moment_oracle(n_draws: usize) -> OracleReport {
    let priors = PriorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a100a5);
    let mut alphas = Vec::with_capacity(n_draws);
    let mut sigmas = Vec::with_capacity(n_draws);
    let mut pass = true;
    let mut detail = String::new();

    for _ in 0..n_draws {
        let p = sample_params(&priors, 500.0, &mut rng);
        if p.beta != priors.beta_fixed {
            pass = false;
        }
        if !(p.alpha > 0.0 && p.gamma > 0.0 && p.phi > 0.0 && p.sigma_r_sq > 0.0) {
            pass = false;
        }
        alphas.push(p.alpha);
        sigmas.push(p.sigma_r_sq);
    }

    let mut check_mean = |name: &str, draws: &[f64], expected: f64| {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        let ok = (mean - expected).abs() <= 3.0 * se;
        if !ok {
            pass = false;
        }
        detail.push_str(&format!("{name}: mean {mean:.5e} vs {expected:.5e} (se {se:.2e}); "));
    };
    check_mean("alpha", &alphas, priors.alpha_shape / priors.alpha_rate);
    check_mean("sigma_r_sq", &sigmas, priors.sigma_r_scale / (priors.sigma_r_shape - 1.0));
    detail.push_str(&format!("beta fixed at {}", priors.beta_fixed));

    OracleReport::new("prior-moments", pass, detail)
}

/// Run every oracle. `quick` trades sample counts for speed (seconds rather
/// than tens of seconds) without changing any pass threshold.
pub fn run_all(quick: bool) -> Vec<OracleReport> {
    let (taylor_n, fact_n, quad_n, prior_n) = if quick {
        (100_000, 30, 512, 20_000)
    } else {
        (1_000_000, 100, 1024, 100_000)
    };
    vec![
        taylor_moment_oracle(taylor_n),
        determinant_oracle(1000),
        factorization_oracle(fact_n),
        normalization_oracle(quad_n),
        prior_moment_oracle(prior_n),
    ]
}
