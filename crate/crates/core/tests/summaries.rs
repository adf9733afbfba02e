use gbc_core::exec::Execution;
use gbc_core::models::{
    generate_reference_table, FnSimulator, NormalNormalSimulator, PriorDist, PriorSpec, ReferenceTable,
};
use gbc_core::numerics::RngStream;
use gbc_core::stats::{mean, spearman};
use gbc_core::summaries::{fit_linear_summary, fit_posterior_mean_net, SummaryKind, SummaryNetSpec};
use gbc_core::train::TrainOptions;

/// Least squares with an explicit intercept column, solved by Gauss-Jordan
/// elimination with partial pivoting. Returns one coefficient row per θ
/// coordinate: `[intercept, b₁, …, bₙ]`.
fn augmented_ols(table: &ReferenceTable) -> Vec<Vec<f64>> {
    let p = table.y_dim() + 1;
    let d = table.theta_dim();
    let mut a = vec![vec![0.0; p + d]; p];
    for (y, t) in table.y.iter_rows().zip(table.theta.iter_rows()) {
        let x: Vec<f64> = std::iter::once(1.0).chain(y.iter().copied()).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += x[i] * x[j];
            }
            for k in 0..d {
                a[i][p + k] += x[i] * t[k];
            }
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, piv);
        let v = a[col][col];
        for e in a[col].iter_mut() {
            *e /= v;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (e, pv) in a[r].iter_mut().zip(&pivot_row) {
                    *e -= f * pv;
                }
            }
        }
    }
    (0..d).map(|k| (0..p).map(|i| a[i][p + k]).collect()).collect()
}

#[test]
fn linear_summary_matches_normal_equations() {
    let prior = PriorSpec::uniform_box(&[(-1.0, 1.0), (0.0, 2.0)]).unwrap();
    let sim = FnSimulator::new("mix", 2, 3, |t: &[f64], r: &mut RngStream| {
        Ok(vec![
            t[0] + 0.5 * t[1] + 0.3 * r.standard_normal(),
            t[1] - t[0] + 0.2 * r.standard_normal(),
            (t[0] * t[1]).sin() + r.standard_normal(),
        ])
    });
    let table = generate_reference_table(&prior, &sim, 2_000, &RngStream::new(11, 0), Execution::Parallel).unwrap();
    let s = fit_linear_summary(&table).unwrap();
    let SummaryKind::Linear { b, intercept } = &s.kind else {
        panic!("expected a linear map")
    };
    let oracle = augmented_ols(&table);
    for k in 0..2 {
        assert!((intercept[k] - oracle[k][0]).abs() < 1e-6, "{} vs {}", intercept[k], oracle[k][0]);
        for j in 0..3 {
            assert!((b.get(k, j) - oracle[k][j + 1]).abs() < 1e-6);
        }
    }
}

#[test]
fn single_index_direction_recovered() {
    let a = [0.6, -0.3, 0.0, 0.7, 0.25];
    let prior = PriorSpec::uniform_box(&[(-2.0, 2.0)]).unwrap();
    let sim = FnSimulator::new("index", 1, 5, move |t: &[f64], r: &mut RngStream| {
        Ok(a.iter().map(|ai| t[0] * ai + r.standard_normal()).collect())
    });
    let table = generate_reference_table(&prior, &sim, 100_000, &RngStream::new(2, 0), Execution::Parallel).unwrap();
    let s = fit_linear_summary(&table).unwrap();
    let SummaryKind::Linear { b, .. } = &s.kind else {
        panic!("expected a linear map")
    };
    // Population coefficient row is proportional to aᵀ.
    let row = b.row(0);
    let dot: f64 = row.iter().zip(&a).map(|(x, y)| x * y).sum();
    let nb = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(dot / (nb * na) > 0.95, "cosine {}", dot / (nb * na));
}

#[test]
fn normal_normal_slope_on_sample_mean() {
    let (alpha2, sigma2, n) = (5.0, 10.0, 100usize);
    let prior = PriorSpec::new(vec![PriorDist::Normal { mean: 0.0, variance: alpha2 }]).unwrap();
    let sim = NormalNormalSimulator::new(sigma2, n).unwrap();
    let table = generate_reference_table(&prior, &sim, 10_000, &RngStream::new(3, 0), Execution::Parallel).unwrap();
    let ybar: Vec<f64> = table.y.iter_rows().map(mean).collect();
    let theta = table.theta.column(0);
    let (mx, mt) = (mean(&ybar), mean(&theta));
    let sxy: f64 = ybar.iter().zip(&theta).map(|(x, t)| (x - mx) * (t - mt)).sum();
    let sxx: f64 = ybar.iter().map(|x| (x - mx).powi(2)).sum();
    let expected = alpha2 * n as f64 / (sigma2 + n as f64 * alpha2);
    // Residual sd of θ|ȳ is ~0.31, sd(ȳ) ~2.26: slope SE ≈ 0.0014.
    assert!((sxy / sxx - expected).abs() < 0.01, "slope {} vs {expected}", sxy / sxx);
}

#[test]
fn learned_summary_is_monotone_in_sample_mean() {
    let prior = PriorSpec::new(vec![PriorDist::Normal { mean: 0.0, variance: 5.0 }]).unwrap();
    let sim = NormalNormalSimulator::new(10.0, 100).unwrap();
    let table = generate_reference_table(&prior, &sim, 10_000, &RngStream::new(4, 0), Execution::Parallel).unwrap();
    let opts = TrainOptions {
        epochs: 20,
        seed: 4,
        ..TrainOptions::default()
    };
    let (s, report) = fit_posterior_mean_net(&table, &SummaryNetSpec::default(), &opts).unwrap();
    assert!(report.holdout_loss.unwrap().is_finite());
    let fresh = generate_reference_table(&prior, &sim, 2_000, &RngStream::new(40, 0), Execution::Parallel).unwrap();
    let learned = s.apply_rows(&fresh.y).unwrap().column(0);
    let ybar: Vec<f64> = fresh.y.iter_rows().map(mean).collect();
    let rho = spearman(&learned, &ybar);
    assert!(rho > 0.99, "rank correlation {rho}");
}

#[test]
fn linear_summary_of_replicates_is_near_identity_on_theta() {
    let prior = PriorSpec::uniform_box(&[(0.0, 1.0)]).unwrap();
    let sim = FnSimulator::new("copy", 1, 2, |t: &[f64], _r: &mut RngStream| Ok(vec![t[0], 2.0 * t[0] + 1.0]));
    let table = generate_reference_table(&prior, &sim, 500, &RngStream::new(5, 0), Execution::Sequential).unwrap();
    let s = fit_linear_summary(&table).unwrap();
    for theta in [0.1, 0.5, 0.9] {
        let v = s.apply(&[theta, 2.0 * theta + 1.0]).unwrap()[0];
        assert!((v - theta).abs() < 1e-4, "{v} vs {theta}");
    }
}
