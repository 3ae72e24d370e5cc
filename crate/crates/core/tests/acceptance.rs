//! End-to-end acceptance checks. Each test prints one `criterion N:` line
//! with the measured quantities before asserting, so
//! `cargo test --test acceptance -- --nocapture` doubles as a report.
//!
//! Tests hold a shared lock so the wall-clock limits are measured without
//! interference from each other.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use christoffel::algorithms::{clopper_pearson_lower, validate_estimate, Run, DEFAULT_DELTA_V};
use christoffel::bounds::{
    classical_sample_bound, gaussian_kl_generic, gaussian_kl_kernel_dense, gaussian_kl_kernel_spectral,
    gaussian_kl_kernel_truncated, gaussian_kl_poly, kl_inverse_upper, CertificateStatus, KlVariant,
};
use christoffel::cli::run_config;
use christoffel::config::RunConfig;
use christoffel::estimators::{fit_kernel, fit_nystrom, fit_poly, LandmarkRule};
use christoffel::grid::{evaluate_grid, GridSpec};
use christoffel::kernel::KernelSpec;
use christoffel::linalg;
use christoffel::systems::{interval_hull, ReachSampler};
use christoffel::{basis_dimension, MultiIndexBasis};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

fn uniform_points(rng: &mut ChaCha8Rng, rows: usize, dim: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |_| rng.random_range(lo..hi))
}

// Dense reference linear algebra, kept apart from the LAPACK-backed paths.

fn oracle_cholesky(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        assert!(d > 0.0, "oracle matrix is not positive definite");
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    l
}

/// `A⁻¹ b` from the lower factor of `A`.
fn oracle_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[[i, k]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[[k, i]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    y
}

fn oracle_inverse(a: &Array2<f64>) -> Array2<f64> {
    let l = oracle_cholesky(a);
    let n = a.nrows();
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        inv.column_mut(j).assign(&oracle_solve(&l, e.view()));
    }
    (&inv + &inv.t()) * 0.5
}

fn se(x: ArrayView1<f64>, y: ArrayView1<f64>, lengthscale: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * lengthscale * lengthscale)).exp()
}

fn se_matrix(a: &Array2<f64>, b: &Array2<f64>, lengthscale: f64) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| se(a.row(i), b.row(j), lengthscale))
}

/// Posterior variance of a zero-mean GP with noise variance `noise` after
/// observing `data`, at `x`.
fn gp_posterior_variance(data: &Array2<f64>, lengthscale: f64, noise: f64, x: ArrayView1<f64>) -> f64 {
    let mut c = se_matrix(data, data, lengthscale);
    c.diag_mut().iter_mut().for_each(|v| *v += noise);
    let l = oracle_cholesky(&c);
    let k: Array1<f64> = data.rows().into_iter().map(|r| se(r, x, lengthscale)).collect();
    se(x, x, lengthscale) - k.dot(&oracle_solve(&l, k.view()))
}

fn bernoulli_kl_oracle(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(q, p) + term(1.0 - q, 1.0 - p)
}

/// Largest point of a uniform 10⁶-interval grid on `[q, 1]` whose KL from
/// `q` is within `gamma`. KL grows with `p` on that interval, so the scan is
/// a bisection over grid indices.
fn kl_inverse_grid(q: f64, gamma: f64) -> f64 {
    const STEPS: u64 = 1_000_000;
    let at = |j: u64| q + (1.0 - q) * j as f64 / STEPS as f64;
    let (mut lo, mut hi) = (0u64, STEPS);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if bernoulli_kl_oracle(q, at(mid)) <= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Points in a box with pairwise distance at least `gap`, so SE Gramians
/// stay well conditioned.
fn separated_points(rng: &mut ChaCha8Rng, rows: usize, half_width: f64, gap: f64) -> Array2<f64> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(rows);
    while pts.len() < rows {
        let p = [
            rng.random_range(-half_width..half_width),
            rng.random_range(-half_width..half_width),
        ];
        if pts.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= gap) {
            pts.push(p);
        }
    }
    Array2::from_shape_fn((rows, 2), |(i, j)| pts[i][j])
}

#[test]
fn criterion_01_classical_sample_sizes() {
    let _g = serial();
    let t = Instant::now();
    let duffing = classical_sample_bound(0.1, 1e-9, 231).unwrap();
    let quadrotor = classical_sample_bound(0.1, 1e-9, 45).unwrap();
    let elapsed = t.elapsed();
    let dims = (basis_dimension(2, 20).unwrap(), basis_dimension(2, 8).unwrap());
    report(
        1,
        duffing == 70307 && quadrotor == 14587 && dims == (231, 45) && elapsed < Duration::from_millis(1),
        format!("N(231)={duffing} N(45)={quadrotor} d={dims:?} time={:?}", elapsed),
    );
}

#[test]
fn criterion_02_poly_kernel_equivalence() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(0..=4);
        let rows = rng.random_range(1..=50);
        let s2 = rng.random_range(0.01..1.0);
        let data = uniform_points(&mut rng, rows, n, -1.0, 1.0);
        let queries = uniform_points(&mut rng, 100, n, -1.5, 1.5);
        let basis = MultiIndexBasis::new(n, m).unwrap();
        let poly = fit_poly(data.view(), &basis, s2 / rows as f64).unwrap();
        let kern = fit_kernel(data.view(), &KernelSpec::PolynomialInner { n, m }, s2, 1000).unwrap();
        let a = poly.eval_batch(queries.view()).unwrap();
        let b = kern.eval_batch(queries.view()).unwrap();
        for (p, k) in a.iter().zip(b.iter()) {
            let k = rows as f64 / s2 * k;
            worst = worst.max((p - k).abs() / p.abs());
        }
    }
    let elapsed = t.elapsed();
    report(
        2,
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "max relative deviation {worst:.3e} (tol 1e-6) over 50 datasets x 100 queries, time={}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_03_gp_posterior_variance() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = rng.random_range(1..=3);
        let rows = rng.random_range(5..=60);
        let lengthscale = rng.random_range(0.2..1.0);
        let noise = rng.random_range(0.01..1.0);
        let data = uniform_points(&mut rng, rows, dim, -1.0, 1.0);
        let queries = uniform_points(&mut rng, 50, dim, -1.5, 1.5);
        let est = fit_kernel(
            data.view(),
            &KernelSpec::SquaredExponential { lengthscale },
            noise,
            1000,
        )
        .unwrap();
        let got = est.eval_batch(queries.view()).unwrap();
        for (q, g) in queries.rows().into_iter().zip(got.iter()) {
            worst = worst.max((g - gp_posterior_variance(&data, lengthscale, noise, q)).abs());
        }
    }
    let elapsed = t.elapsed();
    report(
        3,
        worst <= 1e-10 && elapsed < Duration::from_secs(5),
        format!(
            "max |kernel - GP variance| {worst:.3e} (tol 1e-10) over 20 instances, time={}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_04_kl_identities() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_spectral = 0.0f64;
    let mut truncation_violations = 0;
    for _ in 0..20 {
        let n = rng.random_range(2..=50);
        let b = uniform_points(&mut rng, n, n, -1.0, 1.0);
        let k = b.dot(&b.t());
        let k = (&k + &k.t()) * 0.5;
        let s2 = rng.random_range(0.05..2.0);
        let dense = gaussian_kl_kernel_dense(k.view(), s2).unwrap();
        let mut eig = linalg::sym_eigenvalues(k.view()).unwrap().to_vec();
        eig.sort_by(|a, b| b.total_cmp(a));
        let spectral = gaussian_kl_kernel_spectral(&eig, s2).unwrap();
        worst_spectral = worst_spectral.max((dense - spectral).abs() / dense.abs());
        for p in 1..=n {
            if gaussian_kl_kernel_truncated(&eig[..p], n, s2).unwrap() < spectral * (1.0 - 1e-12) {
                truncation_violations += 1;
            }
        }
    }

    let mut worst_poly = 0.0f64;
    for case in 0..20 {
        let m = rng.random_range(1..=4);
        let basis = MultiIndexBasis::new(2, m).unwrap();
        assert!(basis.dim() <= 15);
        let rows = rng.random_range(5..=80);
        let s2 = rng.random_range(0.01..1.0);
        let data = uniform_points(&mut rng, rows, 2, -1.0, 1.0);
        let est = fit_poly(data.view(), &basis, s2).unwrap();
        let z = basis.features(data.view()).unwrap();
        let mut moment = z.t().dot(&z) / rows as f64;
        moment.diag_mut().iter_mut().for_each(|v| *v += s2);
        let d = basis.dim();
        let zero = Array1::zeros(d);
        let prior = Array2::from_diag_elem(d, 1.0 / s2);
        let (variant, covariance) = if case % 2 == 0 {
            (KlVariant::Moment, oracle_inverse(&moment))
        } else {
            let mut shifted = moment.clone();
            shifted.diag_mut().iter_mut().for_each(|v| *v += s2);
            (KlVariant::Lemma39, oracle_inverse(&shifted))
        };
        let fast = gaussian_kl_poly(est.factor(), s2, variant).unwrap();
        let generic = gaussian_kl_generic(zero.view(), covariance.view(), zero.view(), prior.view()).unwrap();
        worst_poly = worst_poly.max((fast - generic).abs() / generic.abs());
    }
    let elapsed = t.elapsed();
    report(
        4,
        worst_spectral <= 1e-10
            && truncation_violations == 0
            && worst_poly <= 1e-10
            && elapsed < Duration::from_secs(10),
        format!(
            "dense/spectral rel {worst_spectral:.3e}, truncated<exact {truncation_violations} times, \
             poly/generic rel {worst_poly:.3e} (tol 1e-10), time={}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_05_kl_inversion() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let q = if k % 10 == 0 { 0.0 } else { rng.random_range(0.0..0.999) };
        let gamma = 10f64.powf(rng.random_range(-5.0..0.7));
        worst = worst.max((kl_inverse_upper(q, gamma) - kl_inverse_grid(q, gamma)).abs());
    }
    let elapsed = t.elapsed();
    report(
        5,
        worst <= 1e-5 && elapsed < Duration::from_secs(10),
        format!(
            "max |inverse - grid oracle| {worst:.3e} (tol 1e-5) over 1000 pairs, time={}",
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_06_nystrom_soundness() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut above, mut exact_gap, mut oracle_gap) = (0.0f64, 0.0f64, 0.0f64);
    for instance in 0..20 {
        let data = separated_points(&mut rng, 200, 3.0, 0.12);
        let lengthscale = rng.random_range(0.2..0.5);
        let s2 = rng.random_range(0.1..1.0);
        let spec = KernelSpec::SquaredExponential { lengthscale };
        let queries = uniform_points(&mut rng, 100, 2, -3.5, 3.5);
        let full = fit_kernel(data.view(), &spec, s2, 1000)
            .unwrap()
            .eval_batch(queries.view())
            .unwrap();
        let kernel_all = se_matrix(&data, &data, lengthscale);
        let cross = se_matrix(&data, &queries, lengthscale);
        for r in [10, 50, 200] {
            let rule = if r == 200 {
                LandmarkRule::FirstR
            } else {
                LandmarkRule::UniformRandom { seed: instance }
            };
            let est = fit_nystrom(data.view(), &spec, s2, r, rule).unwrap();
            let got = est.eval_batch(queries.view()).unwrap();

            // Dense oracle: K̃ = K_Nr K_rr⁻¹ K_rN substituted into the kernel formula.
            let idx = est.landmarks();
            let k_nr = Array2::from_shape_fn((200, r), |(i, j)| kernel_all[[i, idx[j]]]);
            let k_rr = Array2::from_shape_fn((r, r), |(i, j)| kernel_all[[idx[i], idx[j]]]);
            let l_rr = oracle_cholesky(&k_rr);
            let mut solved = Array2::zeros((r, 200));
            for i in 0..200 {
                solved.column_mut(i).assign(&oracle_solve(&l_rr, k_nr.row(i)));
            }
            let mut a = k_nr.dot(&solved);
            a = (&a + &a.t()) * 0.5;
            a.diag_mut().iter_mut().for_each(|v| *v += s2);
            let l = oracle_cholesky(&a);
            for q in 0..queries.nrows() {
                let kd = cross.column(q);
                let oracle = (1.0 - kd.dot(&oracle_solve(&l, kd))).max(0.0);
                oracle_gap = oracle_gap.max((got[q] - oracle).abs());
                above = above.max(got[q] - full[q]);
                if r == 200 {
                    exact_gap = exact_gap.max((got[q] - full[q]).abs());
                }
            }
        }
    }
    let elapsed = t.elapsed();
    report(
        6,
        above <= 1e-8 && exact_gap <= 1e-8 && oracle_gap <= 1e-8 && elapsed < Duration::from_secs(30),
        format!(
            "max excess over kernel {above:.3e}, |r=N - kernel| {exact_gap:.3e}, |nystrom - dense oracle| \
             {oracle_gap:.3e} (tol 1e-8), time={}",
            secs(elapsed)
        ),
    );
}

struct DuffingRun {
    run: Run,
    fit_time: Duration,
}

fn duffing_alg3() -> &'static DuffingRun {
    static RUN: OnceLock<DuffingRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = RunConfig::preset("duffing").unwrap();
        let t = Instant::now();
        let run = run_config(&config).unwrap();
        DuffingRun {
            run,
            fit_time: t.elapsed(),
        }
    })
}

#[test]
fn criterion_07_duffing_end_to_end() {
    let _g = serial();
    let config = RunConfig::preset("duffing").unwrap();
    let p = &config.parameters;
    assert_eq!((p.m, p.epsilon, p.delta, p.n0, p.nb), (Some(10), 0.1, 1e-9, 1000, 1000));
    let DuffingRun { run, fit_time } = duffing_alg3();
    let cert = run.estimate.certificate();
    let t = Instant::now();
    let sampler = ReachSampler::new(config.problem.clone(), config.seed).unwrap();
    let report_v = validate_estimate(&run.estimate, &sampler, 100_000, DEFAULT_DELTA_V).unwrap();
    let total = *fit_time + t.elapsed();
    report(
        7,
        cert.status == CertificateStatus::Certified
            && cert.epsilon <= 0.1
            && (9000..=13000).contains(&cert.n_samples)
            && report_v.coverage >= 0.90
            && total < Duration::from_secs(300),
        format!(
            "status={:?} N={} epsilon={:.4} coverage={:.5} (lower bound {:.5}) on 1e5 samples, time={}",
            cert.status,
            cert.n_samples,
            cert.epsilon,
            report_v.coverage,
            report_v.lower_bound,
            secs(total)
        ),
    );
}

#[test]
fn criterion_08_duffing_excluded_region() {
    let _g = serial();
    let DuffingRun { run, .. } = duffing_alg3();
    let t = Instant::now();
    let spec: GridSpec = "-2:2:400,-2:2:400".parse().unwrap();
    let topo = evaluate_grid(&run.estimate, &spec).unwrap().topology().unwrap();
    let elapsed = t.elapsed();
    let has_excluded = topo.members < spec.len();
    report(
        8,
        has_excluded && topo.members > 0 && topo.excluded_inside_hull > 0 && elapsed < Duration::from_secs(60),
        format!(
            "members={} excluded cells strictly inside member hull={} (regions by flood fill={}), \
             fully enclosed holes={}, time={}",
            topo.members,
            topo.excluded_inside_hull,
            topo.excluded_regions_inside_hull,
            topo.enclosed_components,
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_09_quadrotor_classical() {
    let _g = serial();
    let config = RunConfig::preset("quadrotor").unwrap();
    assert_eq!(config.parameters.m, Some(4));
    let t = Instant::now();
    let run = run_config(&config).unwrap();
    let inside = run.estimate.contains_batch(run.samples.view()).unwrap();
    let misses = inside.iter().filter(|b| !**b).count();
    let elapsed = t.elapsed();
    report(
        9,
        run.samples.nrows() == 14587 && run.samples.ncols() == 2 && misses == 0 && elapsed < Duration::from_secs(120),
        format!(
            "samples={}x{} training misses={} time={}",
            run.samples.nrows(),
            run.samples.ncols(),
            misses,
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_10_traffic_hull_conservatism() {
    let _g = serial();
    let config = RunConfig::preset("traffic").unwrap();
    let t = Instant::now();
    let run = run_config(&config).unwrap();
    let hull = config.problem.corner_hull().unwrap();
    let spec = config.grid.clone().unwrap();
    let eval = evaluate_grid(&run.estimate, &spec).unwrap();
    let axes = spec.axes();
    let (rows, cols) = (axes[0].count, axes[1].count);
    let mut bbox = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    let mut on_edge = false;
    for (k, _) in eval.members.iter().enumerate().filter(|(_, m)| **m) {
        let (i, j) = (k / cols, k % cols);
        on_edge |= i == 0 || j == 0 || i + 1 == rows || j + 1 == cols;
        for (b, (axis, idx)) in bbox.iter_mut().zip([(&axes[0], i), (&axes[1], j)]) {
            let x = axis.coordinate(idx);
            b[0] = b[0].min(x);
            b[1] = b[1].max(x);
        }
    }
    let cell = axes[0].step() * axes[1].step();
    let members = eval.members.iter().filter(|m| **m).count();
    let area = members as f64 * cell;
    let hull_area = (hull[0][1] - hull[0][0]) * (hull[1][1] - hull[1][0]);
    let contained = (0..2).all(|a| hull[a][0] < bbox[a][0] && bbox[a][1] < hull[a][1]);
    let ratio = area / hull_area;
    let cloud = interval_hull(run.samples.view()).unwrap();
    let elapsed = t.elapsed();
    report(
        10,
        run.estimate.certificate().status == CertificateStatus::Certified
            && !on_edge
            && contained
            && ratio < 0.9
            && elapsed < Duration::from_secs(300),
        format!(
            "hull x5=[{:.3},{:.3}] x6=[{:.3},{:.3}], estimate bbox x5=[{:.3},{:.3}] x6=[{:.3},{:.3}] \
             strictly inside={contained}, area ratio={ratio:.3} (limit 0.9), sample range x6=[{:.3},{:.3}], \
             time={}",
            hull[0][0],
            hull[0][1],
            hull[1][0],
            hull[1][1],
            bbox[0][0],
            bbox[0][1],
            bbox[1][0],
            bbox[1][1],
            cloud[1][0],
            cloud[1][1],
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_11_scaled_kernel_run() {
    let _g = serial();
    let config = RunConfig::preset("duffing-kernel").unwrap();
    let p = &config.parameters;
    assert_eq!(p.epsilon, 0.2);
    assert!(p.n0 + p.max_iterations * p.nb <= 10_000);
    let t = Instant::now();
    let run = run_config(&config).unwrap();
    let cert = run.estimate.certificate().clone();
    let sampler = ReachSampler::new(config.problem.clone(), config.seed).unwrap();
    let v = validate_estimate(&run.estimate, &sampler, 10_000, DEFAULT_DELTA_V).unwrap();
    let elapsed = t.elapsed();
    assert_eq!(
        v.lower_bound,
        clopper_pearson_lower(v.hits, v.n, DEFAULT_DELTA_V).unwrap()
    );
    report(
        11,
        cert.status == CertificateStatus::Certified
            && cert.epsilon <= 0.2
            && cert.n_samples <= 10_000
            && v.coverage >= 0.8
            && elapsed < Duration::from_secs(600),
        format!(
            "status={:?} N={} epsilon={:.4} coverage={:.4} (lower bound {:.4}) on 1e4 samples, time={}",
            cert.status,
            cert.n_samples,
            cert.epsilon,
            v.coverage,
            v.lower_bound,
            secs(elapsed)
        ),
    );
}
