use hybrid_coverage::geometry::{Spheroid, Vec3};
use hybrid_coverage::intruder::{
    ekf_init, ekf_step, measure, predict_impact, NoiseModel, ParticleTruth,
};
use nalgebra::Vector6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sph() -> Spheroid {
    Spheroid::new(80.0, 20.0).unwrap()
}

/// Impact time by bisection on the sign of the implicit function, after a
/// coarse forward scan for the first sign change.
fn bisect_impact(x: &Vector6<f64>, s: &Spheroid) -> Option<f64> {
    let at = |t: f64| s.implicit(&Vec3::new(x[0] + t * x[3], x[1] + t * x[4], x[2] + t * x[5]));
    let step = 0.01;
    let mut t = 0.0;
    while t < 2000.0 {
        if at(t + step) <= 0.0 {
            let (mut lo, mut hi) = (t, t + step);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if at(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        t += step;
    }
    None
}

#[test]
fn skew_impacts_match_bisection() {
    let s = sph();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut hits = 0;
    for _ in 0..200 {
        let p = Vec3::new(rng.random_range(-160.0..160.0), rng.random_range(-160.0..160.0), rng.random_range(-80.0..80.0));
        if s.implicit(&p) <= 0.0 {
            continue;
        }
        let target = s.point_from_geodetic(rng.random_range(-1.5..1.5), rng.random_range(-3.1..3.1));
        let jitter = Vec3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), rng.random_range(-5.0..5.0));
        let v = (target + jitter - p).normalize() * rng.random_range(0.3..3.0);
        let x = Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z);
        match (predict_impact(&x, &s, 3.0), bisect_impact(&x, &s)) {
            (Some(hit), Some(t)) => {
                assert!((hit.time - 3.0 - t).abs() < 1e-9, "{} vs {}", hit.time - 3.0, t);
                assert!(s.implicit(&hit.point).abs() < 1e-12);
                hits += 1;
            }
            (None, None) => {}
            (a, b) => {
                // Only near-grazing lines can disagree, where the scan step
                // straddles a shallow dip.
                let t = a.map(|h| h.time - 3.0).or(b).unwrap();
                let q = Vec3::new(x[0] + t * x[3], x[1] + t * x[4], x[2] + t * x[5]);
                let normal_speed = s.unit_normal(&q).dot(&v).abs() / v.norm();
                assert!(normal_speed < 1e-2, "{a:?} {b:?}");
            }
        }
    }
    assert!(hits > 100);
}

#[test]
fn truth_state_predicts_truth_impact() {
    let s = sph();
    let p = Vec3::new(130.0, 70.0, 45.0);
    let target = s.point_from_geodetic(0.3, 0.4);
    let v = (target - p).normalize() * 1.7;
    let tk = (target - p).norm() / 1.7;
    let truth = ParticleTruth {
        id: 0,
        state: Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z),
        epoch: 100.0,
        detect_time: 100.0,
        impact_time: 100.0 + tk,
        impact_point: target,
        alive: true,
    };
    let hit = predict_impact(&truth.state_at(130.0), &s, 130.0).unwrap();
    assert!((hit.time - truth.impact_time).abs() < 1e-9);
    assert!((hit.point - target).norm() < 1e-8);
}

/// 95% band of the mean of `n` independent χ²₆ draws, by the normal
/// approximation to χ²₆ₙ / n.
fn chi2_6_band(n: usize) -> (f64, f64) {
    let half = 1.96 * (12.0 / n as f64).sqrt();
    (6.0 - half, 6.0 + half)
}

fn random_truth(rng: &mut ChaCha8Rng) -> Vector6<f64> {
    let s = sph();
    let lat: f64 = rng.random_range(-0.9..0.9);
    let lon: f64 = rng.random_range(-3.1..3.1);
    let dir = Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
    let p = dir * 170.0;
    let target = s.point_from_geodetic(rng.random_range(-1.2..1.2), rng.random_range(-3.1..3.1));
    let v = (target - p).normalize() * rng.random_range(0.3..0.7);
    Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z)
}

fn advance(x: &Vector6<f64>, t: f64) -> Vector6<f64> {
    let mut y = *x;
    for i in 0..3 {
        y[i] += t * x[i + 3];
    }
    y
}

fn pos(x: &Vector6<f64>) -> Vec3 {
    Vec3::new(x[0], x[1], x[2])
}

#[test]
fn initial_nees_is_consistent() {
    let noise = NoiseModel::nominal();
    let dt = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trials = 500;
    let mut total = 0.0;
    for _ in 0..trials {
        let x = random_truth(&mut rng);
        let z0 = measure(&pos(&x), &noise.sample(&mut rng));
        let x1 = advance(&x, dt);
        let z1 = measure(&pos(&x1), &noise.sample(&mut rng));
        let est = ekf_init(&z0, &z1, dt, dt, &noise, 1.0).unwrap();
        total += est.nees(&x1);
    }
    let mean = total / trials as f64;
    let (lo, hi) = chi2_6_band(trials);
    assert!(mean > lo && mean < hi, "mean init NEES {mean} outside [{lo}, {hi}]");
}

#[test]
fn tracking_nees_is_consistent() {
    let noise = NoiseModel::nominal();
    let dt = 0.05;
    let steps = 1200;
    let runs = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nees = vec![0.0; steps];
    let mut impact_err = vec![0.0; steps];
    let s = sph();
    for _ in 0..runs {
        let x = random_truth(&mut rng);
        let t_imp = predict_impact(&x, &s, 0.0).map(|h| h.point);
        let z0 = measure(&pos(&x), &noise.sample(&mut rng));
        let z1 = measure(&pos(&advance(&x, dt)), &noise.sample(&mut rng));
        let mut est = ekf_init(&z0, &z1, dt, dt, &noise, 1.0).unwrap();
        for k in 0..steps {
            let t = (k + 2) as f64 * dt;
            let truth = advance(&x, t);
            let z = measure(&pos(&truth), &noise.sample(&mut rng));
            est = ekf_step(&est, Some(&z), dt, &noise).unwrap().0;
            nees[k] += est.nees(&truth) / runs as f64;
            if let (Some(want), Some(hit)) = (t_imp, predict_impact(&est.x, &s, t)) {
                impact_err[k] += (hit.point - want).norm() / runs as f64;
            }
        }
    }
    let avg = nees.iter().sum::<f64>() / steps as f64;
    let (lo, hi) = chi2_6_band(runs);
    assert!(avg > lo && avg < hi, "time-averaged NEES {avg} outside [{lo}, {hi}]");
    // Impact point error shrinks in trend: compare successive quarters.
    let q = steps / 4;
    let quarter = |i: usize| impact_err[i * q..(i + 1) * q].iter().sum::<f64>() / q as f64;
    for i in 0..3 {
        assert!(quarter(i + 1) < quarter(i), "{} vs {}", quarter(i + 1), quarter(i));
    }
}
