use clusterdet::dataset::{visdrone, ImageRecord, ObjectAnnotation};
use clusterdet::geometry::{BBox, ImageDims};
use clusterdet::synth::{oracle_detect, OracleConfig};

/// Mean |N(0, sd)| is sd·sqrt(2/π).
#[test]
fn center_jitter_matches_half_normal_mean() {
    let sd = 2.0;
    let mut rec = ImageRecord::new(1, ImageDims::new(4000.0, 4000.0));
    for i in 0..1000 {
        let (x, y) = ((i % 40) as f64 * 95.0 + 20.0, (i / 40) as f64 * 95.0 + 20.0);
        rec.annotations.push(ObjectAnnotation::new(BBox::new(x, y, 30.0, 30.0), visdrone::CAR));
    }
    let cfg = OracleConfig {
        center_jitter_sd: sd,
        seed: 11,
        ..Default::default()
    };
    let dets = oracle_detect(&rec, &rec.dims.as_box(), &cfg);
    assert_eq!(dets.len(), 1000);
    let expected = sd * (2.0 / std::f64::consts::PI).sqrt();
    let (mut sx, mut sy) = (0.0, 0.0);
    for (d, a) in dets.iter().zip(&rec.annotations) {
        let (dc, ac) = (d.bbox.center(), a.bbox.center());
        sx += (dc.0 - ac.0).abs();
        sy += (dc.1 - ac.1).abs();
        assert!((0.05..=1.0).contains(&d.score));
    }
    for mean in [sx / 1000.0, sy / 1000.0] {
        assert!((mean - expected).abs() <= 0.1 * expected, "mean {mean} vs {expected}");
    }
}

#[test]
fn misses_and_false_positives() {
    let mut rec = ImageRecord::new(1, ImageDims::new(1000.0, 1000.0));
    for i in 0..400 {
        let b = BBox::new((i % 20) as f64 * 50.0, (i / 20) as f64 * 50.0, 20.0, 20.0);
        rec.annotations.push(ObjectAnnotation::new(b, visdrone::CAR));
    }
    let half = OracleConfig {
        miss_rate: 0.5,
        seed: 1,
        ..Default::default()
    };
    let n = oracle_detect(&rec, &rec.dims.as_box(), &half).len();
    assert!((150..=250).contains(&n), "{n}");

    let noisy = OracleConfig {
        fp_rate_per_image: 50.0,
        seed: 2,
        ..Default::default()
    };
    let extra = oracle_detect(&rec, &rec.dims.as_box(), &noisy).len() - 400;
    assert!((25..=80).contains(&extra), "{extra}");
}
