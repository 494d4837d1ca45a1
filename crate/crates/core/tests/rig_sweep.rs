use hybrid_damping::damping::{damping_from_u, regen_power_from_u, BrakingScheme};
use hybrid_damping::switch_sim::{default_u_grid, simulate_rig, sweep, RigParams};

fn quiet(pwm_freq: f64) -> RigParams {
    RigParams {
        measurement_noise: 0.0,
        pwm_freq,
        ..Default::default()
    }
}

fn worst_damping_gap(rig: &RigParams) -> f64 {
    let module = rig.validate().unwrap();
    default_u_grid()
        .into_iter()
        .map(|u| {
            let sim = simulate_rig(rig, u, 2.0).unwrap().damping();
            let model = damping_from_u(BrakingScheme::Hybrid, &module, u, None).unwrap();
            if model == 0.0 {
                sim.abs() / module.d_bar1()
            } else {
                (sim - model).abs() / model
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn cycle_average_tracks_analytic_damping() {
    let gap = worst_damping_gap(&quiet(10_000.0));
    assert!(gap < 0.02, "worst relative gap {gap:e}");
}

#[test]
fn gap_shrinks_with_pwm_frequency() {
    let slow = worst_damping_gap(&quiet(1_000.0));
    let fast = worst_damping_gap(&quiet(10_000.0));
    assert!(fast < 0.5 * slow, "1 kHz {slow:e}, 10 kHz {fast:e}");
}

#[test]
fn noiseless_sweep_shape() {
    let rig = quiet(10_000.0);
    let table = sweep(&rig, &default_u_grid(), 1, 2.0, 7).unwrap();
    let d: Vec<f64> = table.rows.iter().map(|r| r.d_mean).collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
    let p: Vec<f64> = table.rows.iter().map(|r| r.p_mean).collect();
    let imax = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    assert_eq!(table.rows[imax].u, 0.5);
    assert!(p.iter().enumerate().all(|(i, &v)| i == imax || v < p[imax]));

    // slopes either side of the crossover follow the two braking regimes
    let module = rig.validate().unwrap();
    let below = (d[5] - d[0]) / 0.5;
    let above = (d[10] - d[5]) / 0.5;
    assert!((below - module.d_bar2() / module.u_r()).abs() < 0.02 * below);
    assert!((above - module.alpha() * module.d_bar3() / (1.0 - module.u_r())).abs() < 0.02 * above);
}

#[test]
fn normalised_power_matches_module() {
    let rig = quiet(10_000.0);
    let module = rig.validate().unwrap();
    let table = sweep(&rig, &default_u_grid(), 1, 2.0, 7).unwrap();
    for row in &table.rows {
        let model = regen_power_from_u(BrakingScheme::Hybrid, &module, row.u, 1.0).unwrap();
        let tol = 0.02 * module.alpha() * module.d_bar2();
        assert!((row.p_mean - model).abs() < tol, "u = {}: {} vs {}", row.u, row.p_mean, model);
    }
}

#[test]
fn noisy_sweep_row_count() {
    let table = sweep(&RigParams::default(), &default_u_grid(), 10, 2.0, 42).unwrap();
    assert_eq!(table.point_count(), 110);
    let mut buf = Vec::new();
    table.write_points_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let data = text.lines().filter(|l| !l.starts_with('#')).skip(1).count();
    assert_eq!(data, 110);
}
