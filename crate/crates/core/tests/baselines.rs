use ccnets_core::baselines::*;
use ccnets_core::curve::fit_log_curve;
use ccnets_core::data::{normalize, split_sequential, synth_imbalanced, SynthConfig, TabularDataset};
use ccnets_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logistic regression by Newton iterations; returns weights with the bias last.
fn logistic_fit(x: &Tensor, y: &Tensor, iters: usize) -> Vec<f64> {
    let d = x.cols() + 1;
    let mut w = vec![0.0; d];
    for _ in 0..iters {
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for r in 0..x.rows() {
            let row: Vec<f64> = x.row(r).iter().copied().chain([1.0]).collect();
            let z: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            let s = p * (1.0 - p);
            for i in 0..d {
                grad[i] += (p - y.get(r, 0)) * row[i];
                for j in 0..d {
                    hess[i][j] += s * row[i] * row[j];
                }
            }
        }
        for (i, h) in hess.iter_mut().enumerate() {
            h[i] += 1e-6;
        }
        let step = solve(hess, grad);
        w.iter_mut().zip(step).for_each(|(a, b)| *a -= b);
    }
    w
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn split(ds: &TabularDataset) -> (TabularDataset, TabularDataset) {
    let (tr, te) = split_sequential(ds, 0.3).unwrap();
    let (tr, te, _) = normalize(&tr, &te).unwrap();
    (tr, te)
}

#[test]
fn default_synthetic_data_sits_in_the_reference_f1_band() {
    let ds = synth_imbalanced(0, &SynthConfig::default()).unwrap();
    assert_eq!(ds.fraud_count(), 172);
    let (tr, te) = split(&ds);
    let w = logistic_fit(&tr.features, &tr.labels, 12);
    let pred: Vec<u8> = (0..te.len())
        .map(|r| {
            let z: f64 = te.features.row(r).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[w.len() - 1];
            (z >= 0.0) as u8
        })
        .collect();
    let m = compute_metrics(&te.label_vec(), &pred).unwrap();
    assert!((0.55..=0.95).contains(&m.f1), "{m:?}");
}

fn toy() -> (TabularDataset, TabularDataset) {
    let ds = synth_imbalanced(
        3,
        &SynthConfig {
            n: 10_000,
            fraud_rate: 0.02,
            observe_size: 30,
            separation: 4.0,
        },
    )
    .unwrap();
    split(&ds)
}

fn fast() -> BaselineConfig {
    BaselineConfig {
        epochs: 30,
        batch_size: 128,
        learning_rate: 1e-3,
        ..BaselineConfig::default()
    }
}

#[test]
fn mlp_learns_synthetic_fraud() {
    let (tr, te) = toy();
    let (mlp, hist) = train_mlp(&tr.features, &tr.labels, &fast(), 0, Some((&te.features, &te.labels))).unwrap();
    let m = compute_metrics(&te.label_vec(), &mlp.predict(&te.features, 0.5).unwrap()).unwrap();
    assert!(m.f1 > 0.5, "{m:?}");
    let train_curve: Vec<f64> = hist.iter().map(|h| h.train_loss).collect();
    assert!(fit_log_curve(&train_curve).unwrap().slope < 0.0);
    assert!(hist.iter().all(|h| h.test_loss.is_some()));
    assert!(mlp.probabilities(&te.features).unwrap().iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn autoencoder_flags_fraud_by_reconstruction_error() {
    let (tr, te) = toy();
    let normal = tr.filter_label(0.0);
    let (ae, hist) = train_autoencoder(&normal.features, &normal.labels, &fast(), 1).unwrap();
    assert!(hist[29].train_loss < hist[0].train_loss);
    assert_eq!(ae.encode(&te.features).unwrap().cols(), AUTOENCODER_LATENT);

    let err = ae.reconstruction_errors(&te.features).unwrap();
    let mean_of = |label: u8| {
        let v: Vec<f64> = te.label_vec().iter().zip(&err).filter(|(l, _)| **l == label).map(|(_, e)| *e).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_of(1) > mean_of(0));
}

/// Rows near a random 5-dimensional subspace of the 30-wide space.
fn low_rank(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let basis: Vec<f64> = (0..5 * 30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let basis = Tensor::from_vec(5, 30, basis).unwrap();
    let coef = Tensor::from_vec(n, 5, (0..n * 5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let mut x = coef.matmul(&basis).unwrap();
    x.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.01..0.01));
    x
}

#[test]
fn autoencoder_prefers_training_rows_over_equal_norm_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = low_rank(&mut rng, 2000);
    let (ae, _) = train_autoencoder(&x, &Tensor::zeros(2000, 1), &fast(), 4).unwrap();
    let rows = x.slice_rows(0, 200);
    let mut noise = Tensor::from_vec(200, 30, (0..6000).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for r in 0..200 {
        let k = norm(rows.row(r)) / norm(noise.row(r));
        noise.row_mut(r).iter_mut().for_each(|v| *v *= k);
    }
    let better = ae
        .reconstruction_errors(&rows)
        .unwrap()
        .iter()
        .zip(ae.reconstruction_errors(&noise).unwrap())
        .filter(|(a, b)| **a < *b)
        .count();
    assert!(better > 180, "{better}/200");
}

#[test]
fn latent_classifier_pipeline_runs() {
    let (tr, te) = toy();
    let normal = tr.filter_label(0.0);
    let (ae, _) = train_autoencoder(&normal.features, &normal.labels, &fast(), 1).unwrap();
    let codes = ae.encode(&tr.features).unwrap();
    let (mlp, _) = train_mlp(&codes, &tr.labels, &fast(), 2, None).unwrap();
    let pred = mlp.predict(&ae.encode(&te.features).unwrap(), 0.5).unwrap();
    let m = compute_metrics(&te.label_vec(), &pred).unwrap();
    assert!(m.f1 > 0.3, "{m:?}");
}
