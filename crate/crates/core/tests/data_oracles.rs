use std::io::Write;

use ndarray::array;
use scr::data::{generate_synthetic, load_csv, read_csv, split, write_csv_to, Dataset, Standardizer, SynthSpec};
use scr::metrics::pearson_r;

/// Solves the normal equations `(AᵀA) β = Aᵀy` by Gaussian elimination with partial pivoting.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut m = vec![vec![0.0; p + 1]; p];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                m[i][j] += r[i] * r[j];
            }
            m[i][p] += r[i] * t;
        }
    }
    for c in 0..p {
        let pivot = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, pivot);
        for r in c + 1..p {
            let f = m[r][c] / m[c][c];
            for k in c..=p {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for c in (0..p).rev() {
        let s: f64 = (c + 1..p).map(|k| m[c][k] * beta[k]).sum();
        beta[c] = (m[c][p] - s) / m[c][c];
    }
    beta
}

#[test]
fn held_out_least_squares_on_informative_columns_exceeds_point_eight() {
    for nonlinear in [false, true] {
        let spec = SynthSpec::with_random_informative(2000, 100, 10, 0.5, nonlinear, 17).unwrap();
        let (ds, truth) = generate_synthetic(&spec).unwrap();
        let design = |i: usize| {
            let mut r = vec![1.0];
            r.extend(truth.informative_indices.iter().map(|&j| ds.features()[[i, j]]));
            r
        };
        let sp = split(ds.n_samples(), 17).unwrap();
        let rows: Vec<Vec<f64>> = sp.train.iter().map(|&i| design(i)).collect();
        let y: Vec<f64> = sp.train.iter().map(|&i| ds.labels()[i]).collect();
        let beta = least_squares(&rows, &y);
        let pred: Vec<f64> = sp
            .test
            .iter()
            .map(|&i| design(i).iter().zip(&beta).map(|(a, b)| a * b).sum())
            .collect();
        let truth_y: Vec<f64> = sp.test.iter().map(|&i| ds.labels()[i]).collect();
        let r = pearson_r(&pred, &truth_y).unwrap();
        assert!(r > 0.8, "nonlinear={nonlinear}: held-out OLS r = {r}");
    }
}

#[test]
fn csv_round_trip_is_value_exact() {
    let spec = SynthSpec::with_random_informative(50, 7, 3, 0.3, true, 2).unwrap();
    let (ds, _) = generate_synthetic(&spec).unwrap();
    let mut buf = Vec::new();
    write_csv_to(&ds, &mut buf).unwrap();
    let back = read_csv(buf.as_slice(), ds.modality_tag()).unwrap();
    assert_eq!(back.features(), ds.features());
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.feature_names(), ds.feature_names());
}

#[test]
fn ingestion_rules_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("FA.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "label,c1,c2\n1.0,0.5,\n2.0,1e-1,3\n3.0,2,4").unwrap();
    drop(f);
    let ds = load_csv(&path).unwrap();
    assert_eq!(ds.modality_tag(), "FA");
    assert_eq!((ds.n_samples(), ds.n_features()), (3, 2));
    assert_eq!(ds.features()[[0, 1]], 0.0);
    assert_eq!(ds.features()[[1, 0]], 0.1);

    let one = read_csv("label,f1,f2\n1.0,2,3\n".as_bytes(), "x").unwrap();
    assert_eq!((one.n_samples(), one.n_features()), (1, 2));
    assert_eq!(one.labels(), &[1.0]);

    let err = read_csv("label,f1\n1.0,abc\n".as_bytes(), "x").unwrap_err();
    assert_eq!(err.kind(), "ingest");
    assert!(err.to_string().contains("row 2"), "{err}");
    assert!(read_csv("f1,f2\n1,2\n".as_bytes(), "x").is_err());

    let same = read_csv("label,a,b\n1,5,5\n2,5,5\n3,5,5\n".as_bytes(), "x").unwrap();
    let st = Standardizer::fit(&same, &[0, 1, 2]).unwrap();
    assert!(st.constant.iter().all(|&c| c));
    assert!(st.apply(&same).unwrap().features().iter().all(|&v| v == 0.0));
}

#[test]
fn split_of_one_hundred_is_seventy_ten_twenty() {
    for seed in 0..5 {
        let s = split(100, seed).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
    }
    assert_eq!(split(9, 0).unwrap_err().kind(), "split");
}

#[test]
fn standardized_training_columns_have_zero_mean_unit_std() {
    let ds = Dataset::from_parts(
        array![[1.0, 10.0], [2.0, 20.0], [3.0, 40.0], [4.0, 80.0], [100.0, -5.0]],
        vec![0.0; 5],
        "t",
    )
    .unwrap();
    let train = [0, 1, 2, 3];
    let st = Standardizer::fit(&ds, &train).unwrap();
    let out = st.apply(&ds).unwrap();
    for j in 0..2 {
        let col: Vec<f64> = train.iter().map(|&i| out.features()[[i, j]]).collect();
        let mean = col.iter().sum::<f64>() / 4.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-10 && (var.sqrt() - 1.0).abs() < 1e-10);
    }
    assert_eq!(out.labels(), ds.labels());
    assert!(st.apply(&out).is_err());
}
