use proplab::expr::{num, parse_expression, Expr};
use proplab::geometry::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frw() -> MetricChart {
    MetricChart::frw(parse_expression("exp(x0)").unwrap()).unwrap()
}

fn frw_slow() -> MetricChart {
    MetricChart::frw(parse_expression("exp(0.1*x0)").unwrap())
        .unwrap()
        .with_box(vec![(-40.0, 40.0), (-100.0, 100.0)])
        .unwrap()
}

#[test]
fn minkowski_metric_data() {
    let md = metric_data(&MetricChart::minkowski(2), &[0.3, -0.1]).unwrap();
    assert_eq!(md.ginv[(0, 0)], -1.0);
    assert_eq!(md.ginv[(1, 1)], 1.0);
    assert!(md.dginv.iter().all(|m| m.iter().all(|v| *v == 0.0)));
    assert!(md.christoffel.iter().all(|m| m.iter().all(|v| *v == 0.0)));
}

#[test]
fn frw_inverse_metric() {
    let md = metric_data(&frw(), &[0.4, 2.0]).unwrap();
    assert!((md.ginv[(1, 1)] - (-0.8f64).exp()).abs() < 1e-15);
    assert_eq!(md.ginv[(0, 0)], -1.0);
}

#[test]
fn perturbed_minkowski_inverse_is_an_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 3;
    let mut g: Vec<Expr> = Vec::new();
    let mut pert = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-0.05..0.05);
            pert[i][j] = v;
            pert[j][i] = v;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let base = if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 };
            let s = format!("{} + {}*sin(x{})", base, pert[i][j], (i + j) % n);
            g.push(parse_expression(&s).unwrap());
        }
    }
    let chart = MetricChart::new("pert", n, g, vec![(-2.0, 2.0); n]).unwrap();
    let md = metric_data(&chart, &[0.3, -0.7, 1.1]).unwrap();
    let id = &md.g * &md.ginv;
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((id[(i, j)] - e).abs() < 1e-12);
        }
    }
}

#[test]
fn out_of_chart_and_singular() {
    let chart = frw();
    assert!(matches!(metric_data(&chart, &[6.0, 0.0]), Err(GeometryError::OutOfChart { .. })));
    let g = vec![num(-1.0), num(0.0), num(0.0), parse_expression("x0^2").unwrap()];
    // Degenerate at x0 = 0, so construction fails.
    assert!(MetricChart::new("deg", 2, g, vec![(-1.0, 1.0); 2]).is_err());
}

#[test]
fn hamiltonian_field_examples() {
    let chart = MetricChart::minkowski(2);
    let (xd, xid) = hamiltonian_field(&chart, &PhasePoint::new(vec![0.0, 0.0], vec![1.0, 1.0])).unwrap();
    assert_eq!(xd, vec![2.0, -2.0]);
    assert_eq!(xid, vec![0.0, 0.0]);
    let chart = frw();
    let pt = PhasePoint::new(vec![0.2, 0.5], vec![0.7, -0.4]);
    let (a, b) = hamiltonian_field(&chart, &pt).unwrap();
    let pt2 = PhasePoint::new(pt.x.clone(), pt.xi.iter().map(|v| 2.0 * v).collect());
    let (a2, b2) = hamiltonian_field(&chart, &pt2).unwrap();
    for i in 0..2 {
        assert!((a2[i] - 2.0 * a[i]).abs() < 1e-14);
        assert!((b2[i] - 4.0 * b[i]).abs() < 1e-14);
    }
}

#[test]
fn hamiltonian_field_matches_finite_differences_of_p() {
    let chart = frw();
    let pt = null_completion(&chart, &[0.3, 1.0], &[0.8], true).unwrap();
    let (xd, xid) = hamiltonian_field(&chart, &pt).unwrap();
    let p = |x: &[f64], k: &[f64]| chart.principal(x, k).unwrap();
    let h = 1e-5;
    for mu in 0..2 {
        let mut kp = pt.xi.clone();
        let mut km = pt.xi.clone();
        kp[mu] += h;
        km[mu] -= h;
        let dpdxi = (p(&pt.x, &kp) - p(&pt.x, &km)) / (2.0 * h);
        let mut xp = pt.x.clone();
        let mut xm = pt.x.clone();
        xp[mu] += h;
        xm[mu] -= h;
        let dpdx = (p(&xp, &pt.xi) - p(&xm, &pt.xi)) / (2.0 * h);
        // X_□ = −(∂_ξp, −∂_xp).
        assert!((xd[mu] + dpdxi).abs() < 1e-6 * (1.0 + dpdxi.abs()));
        assert!((xid[mu] - dpdx).abs() < 1e-6 * (1.0 + dpdx.abs()));
    }
}

#[test]
fn minkowski_straight_characteristics() {
    let chart = MetricChart::minkowski(2);
    let pt = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let bic = flow_bicharacteristic(&chart, &pt, &linspace_params(10.0, 20), &FlowOptions::default()).unwrap();
    for smp in &bic.samples {
        assert!((smp.x[0] - 2.0 * smp.s).abs() < 1e-12);
        assert!((smp.x[1] + 2.0 * smp.s).abs() < 1e-12);
        assert_eq!(smp.xi, vec![1.0, 1.0]);
    }
}

#[test]
fn null_drift_on_frw() {
    let chart = frw_slow();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let k = rng.gen_range(0.2..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let pt = null_completion(&chart, &x, &[k], true).unwrap();
        let opts = FlowOptions {
            require_null: true,
            ..FlowOptions::default()
        };
        let bic = flow_bicharacteristic(&chart, &pt, &linspace_params(10.0, 10), &opts).unwrap();
        assert!(bic.max_rel_p <= 1e-9, "{}", bic.max_rel_p);
    }
}

#[test]
fn frw_self_convergence_and_group_property() {
    let chart = frw_slow();
    let pt = null_completion(&chart, &[0.0, 0.0], &[1.0], true).unwrap();
    let loose = FlowOptions {
        rtol: 1e-10,
        atol: 1e-12,
        ..FlowOptions::default()
    };
    let tight = FlowOptions {
        rtol: 1e-13,
        atol: 1e-15,
        ..FlowOptions::default()
    };
    let a = flow_bicharacteristic(&chart, &pt, &[5.0], &loose).unwrap();
    let b = flow_bicharacteristic(&chart, &pt, &[5.0], &tight).unwrap();
    for i in 0..2 {
        assert!((a.last().x[i] - b.last().x[i]).abs() < 1e-7);
        assert!((a.last().xi[i] - b.last().xi[i]).abs() < 1e-7);
    }
    let mid = flow_bicharacteristic(&chart, &pt, &[2.0], &FlowOptions::default()).unwrap();
    let c = flow_bicharacteristic(&chart, &mid.last().point(), &[3.0], &FlowOptions::default()).unwrap();
    for i in 0..2 {
        assert!((c.last().x[i] - b.last().x[i]).abs() < 1e-7);
    }
}

#[test]
fn projection_flag_keeps_constraint() {
    let chart = frw_slow();
    let pt = null_completion(&chart, &[0.2, 0.0], &[0.9], true).unwrap();
    let opts = FlowOptions {
        project: true,
        rtol: 1e-8,
        atol: 1e-10,
        ..FlowOptions::default()
    };
    let bic = flow_bicharacteristic(&chart, &pt, &linspace_params(5.0, 5), &opts).unwrap();
    assert!(bic.samples.iter().all(|s| s.p.abs() < 1e-12));
}

#[test]
fn chart_exit_returns_partial_curve() {
    let chart = MetricChart::minkowski(2).with_box(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let pt = PhasePoint::new(vec![0.0, 0.0], vec![-1.0, 1.0]);
    match flow_bicharacteristic(&chart, &pt, &linspace_params(2.0, 20), &FlowOptions::default()) {
        Err(GeometryError::ChartExit(partial)) => {
            assert!(partial.chart_exit);
            assert!(partial.samples.len() >= 5);
            assert!(partial.last().x[0].abs() <= 1.0);
        }
        other => panic!("expected chart exit, got {other:?}"),
    }
}

#[test]
fn non_null_seed_rejected_when_required() {
    let chart = MetricChart::minkowski(2);
    let pt = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
    let opts = FlowOptions {
        require_null: true,
        ..FlowOptions::default()
    };
    assert!(matches!(
        flow_bicharacteristic(&chart, &pt, &[1.0], &opts),
        Err(GeometryError::NonNullPoint { .. })
    ));
}

#[test]
fn covector_classes() {
    let m = MetricChart::minkowski(2);
    let cls = |chart: &MetricChart, x: Vec<f64>, xi: Vec<f64>| {
        classify_covector(chart, &PhasePoint::new(x, xi)).unwrap()
    };
    // g⁻¹(ξ, dx⁰) = −ξ₀: ξ = (−1, 0) lies in the cone opposite to dx⁰.
    assert_eq!(cls(&m, vec![0.0, 0.0], vec![-1.0, 0.0]), CovectorClass::TimelikePast);
    assert_eq!(cls(&m, vec![0.0, 0.0], vec![1.0, 0.0]), CovectorClass::TimelikeFuture);
    assert_eq!(cls(&m, vec![0.0, 0.0], vec![1.0, 1.0]), CovectorClass::NullFuture);
    assert_eq!(cls(&m, vec![0.0, 0.0], vec![-1.0, 1.0]), CovectorClass::NullPast);
    assert_eq!(cls(&m, vec![0.0, 0.0], vec![0.2, 1.0]), CovectorClass::Spacelike);
    let f = frw();
    assert_eq!(cls(&f, vec![0.0, 0.0], vec![1.0, 0.5]), CovectorClass::TimelikeFuture);
    for lambda in [0.1, 3.0, 1e4] {
        assert_eq!(cls(&m, vec![0.0, 0.0], vec![lambda, lambda]), CovectorClass::NullFuture);
    }
}

#[test]
fn future_null_covectors_flow_forward_in_time() {
    let chart = frw_slow();
    let pt = null_completion(&chart, &[0.0, 0.0], &[0.5], true).unwrap();
    let bic = flow_bicharacteristic(&chart, &pt, &[1.0], &FlowOptions::default()).unwrap();
    assert!(bic.last().x[0] > 0.0);
}

#[test]
fn relations_on_minkowski() {
    let chart = MetricChart::minkowski(2);
    let b = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let a = flow_bicharacteristic(&chart, &b, &[1.0], &FlowOptions::default())
        .unwrap()
        .last()
        .point();
    let opts = RelationOptions::default();
    let r = relation_test(&chart, &a, &b, &opts).unwrap();
    assert_eq!(r.kind, RelationKind::CPlus);
    assert!((r.s.unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(relation_test(&chart, &b, &a, &opts).unwrap().kind, RelationKind::CMinus);
    assert_eq!(relation_test(&chart, &b, &b, &opts).unwrap().kind, RelationKind::Diagonal);
    // Conic matching: a rescaled covector on the same ray is still related.
    let scaled = PhasePoint::new(a.x.clone(), vec![3.0, 3.0]);
    assert_eq!(relation_test(&chart, &scaled, &b, &opts).unwrap().kind, RelationKind::CPlus);
    // Spatially offset base point: no s on a fine grid comes close.
    let off = PhasePoint::new(vec![2.0, -1.0], vec![1.0, 1.0]);
    let r = relation_test(&chart, &off, &b, &opts).unwrap();
    assert_eq!(r.kind, RelationKind::Unrelated);
    let brute = linspace_params(20.0, 4000)
        .into_iter()
        .chain(linspace_params(-20.0, 4000))
        .map(|s| phase_distance(&off, &[2.0 * s, -2.0 * s], &[1.0, 1.0]))
        .fold(f64::INFINITY, f64::min);
    assert!(brute > 0.1);
}

#[test]
fn relations_are_antisymmetric_on_frw() {
    let chart = frw_slow();
    let b = null_completion(&chart, &[0.0, 0.0], &[0.7], true).unwrap();
    let a = flow_bicharacteristic(&chart, &b, &[2.5], &FlowOptions::default())
        .unwrap()
        .last()
        .point();
    let opts = RelationOptions::default();
    assert_eq!(relation_test(&chart, &a, &b, &opts).unwrap().kind, RelationKind::CPlus);
    assert_eq!(relation_test(&chart, &b, &a, &opts).unwrap().kind, RelationKind::CMinus);
}

#[test]
fn relation_inconclusive_on_early_exit() {
    let chart = MetricChart::minkowski(2).with_box(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let b = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let a = PhasePoint::new(vec![0.5, 0.0], vec![1.0, 1.0]);
    assert!(matches!(
        relation_test(&chart, &a, &b, &RelationOptions::default()),
        Err(GeometryError::Inconclusive)
    ));
}
