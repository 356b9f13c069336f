//! Detrending and fluctuation-function values checked against a reference
//! computed with `numpy.polyfit` (see `fixtures/mfcca_reference.py`).

use qmst::detrend::{fluctuation, pair_pipeline, profile, segment_covariances, DetrendConfig};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn length_eight_linear_detrending() {
    let xp = [1.0, 3.0, 2.0, 5.0, 4.0, 4.0, 7.0, 6.0];
    let yp = [2.0, 1.0, 4.0, 3.0, 3.0, 6.0, 5.0, 8.0];
    let f2xy = [
        -0.7000000000000002,
        -0.6999999999999997,
        -0.7000000000000002,
        -0.6999999999999997,
    ];
    let f2xx = [
        0.6750000000000002,
        0.6749999999999997,
        0.6750000000000002,
        0.6749999999999997,
    ];
    let xy = segment_covariances(&xp, &yp, 4, 1).unwrap();
    let xx = segment_covariances(&xp, &xp, 4, 1).unwrap();
    assert_eq!(xy.values.len(), 4);
    for k in 0..4 {
        assert!(close(xy.values[k], f2xy[k], 1e-12), "{k}: {}", xy.values[k]);
        assert!(close(xx.values[k], f2xx[k], 1e-12), "{k}: {}", xx.values[k]);
    }
}

fn length_64_pair() -> (Vec<f64>, Vec<f64>) {
    (0..64)
        .map(|i| {
            let i = i as f64;
            (
                (0.7 * i).sin() + 0.05 * i + 0.3 * (2.1 * i).cos(),
                (1.3 * i).cos() - 0.02 * i + 0.5 * (0.37 * i).sin(),
            )
        })
        .unzip()
}

#[test]
fn length_64_fluctuation_functions() {
    // (s, q, Fxy, Fxx, Fyy)
    let reference = [
        (8, 1.0, 0.04779474289465449, 0.7389183289671768, 0.635082711719366),
        (8, 2.0, -0.06404265468702224, 0.7639880978900072, 0.6428456798420633),
        (8, 4.0, -0.3796706762013501, 0.8110114923369935, 0.6570891627801184),
        (16, 1.0, -0.39278864777504285, 1.089778491807298, 1.073696795552566),
        (16, 2.0, -0.565317013896553, 1.0906426245017347, 1.079963571364647),
        (16, 4.0, -0.6928366034263992, 1.0923144437170396, 1.0906843525164074),
    ];
    let (x, y) = length_64_pair();
    let cfg = DetrendConfig::new(1, vec![1.0, 2.0, 4.0], vec![8, 16]);
    let fs = pair_pipeline(&x, &y, &cfg).unwrap();
    for (s, q, fxy, fxx, fyy) in reference {
        let (qi, si) = (fs.q_index(q).unwrap(), fs.scale_index(s).unwrap());
        assert!(close(fs.fxy[qi][si], fxy, 1e-11), "s={s} q={q}: {}", fs.fxy[qi][si]);
        assert!(close(fs.fxx[qi][si], fxx, 1e-11), "s={s} q={q}: {}", fs.fxx[qi][si]);
        assert!(close(fs.fyy[qi][si], fyy, 1e-11), "s={s} q={q}: {}", fs.fyy[qi][si]);
    }
}

#[test]
fn self_pair_matches_univariate() {
    let (x, _) = length_64_pair();
    let cfg = DetrendConfig::new(1, vec![1.0, 2.0, 4.0], vec![8, 16]);
    let fs = pair_pipeline(&x, &x, &cfg).unwrap();
    assert_eq!(fs.fxy, fs.fxx);
    assert_eq!(fs.fxx, fs.fyy);
}

#[test]
fn fluctuation_examples() {
    assert_eq!(fluctuation(&[1.0, 1.0, 1.0, 1.0], 2.0), 1.0);
    assert_eq!(fluctuation(&[4.0, 0.0, 0.0, 0.0], 2.0), 1.0);
    assert_eq!(fluctuation(&[1.0, -1.0], 4.0), 0.0);
}

#[test]
fn profile_examples() {
    assert_eq!(profile(&[1.0, -1.0, 1.0, -1.0], true).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
    assert_eq!(profile(&[2.5, 2.5, 2.5], true).unwrap(), vec![0.0; 3]);
    assert_eq!(profile(&[1.0, 2.0, 3.0], true).unwrap(), vec![-1.0, -1.0, 0.0]);
}
