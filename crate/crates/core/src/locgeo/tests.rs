use super::io::*;
use super::synth::*;
use super::*;
use crate::oracle::random_direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simple_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
}

#[test]
fn projection_examples() {
    let k = simple_intrinsics();
    let id = Pose::identity();
    assert_eq!(project(&k, &id, &Vec3::new(0.0, 0.0, 1.0)), Some(Vec2::new(50.0, 50.0)));
    assert_eq!(project(&k, &id, &Vec3::new(1.0, 0.0, 1.0)), Some(Vec2::new(150.0, 50.0)));
    assert_eq!(project(&k, &id, &Vec3::new(0.0, 0.0, -1.0)), None);
    assert_eq!(project(&k, &id, &Vec3::new(0.0, 0.0, 0.0)), None);
}

#[test]
fn backprojection_round_trip() {
    let k = simple_intrinsics();
    assert_eq!(backproject(&k, &Vec2::new(50.0, 50.0), 2.0).unwrap(), Vec3::new(0.0, 0.0, 2.0));
    assert!(backproject(&k, &Vec2::new(50.0, 50.0), 0.0).is_err());
    assert!(backproject(&k, &Vec2::new(50.0, 50.0), -1.0).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let px = Vec2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let d = rng.random_range(0.01..100.0);
        let x = backproject(&k, &px, d).unwrap();
        let back = project(&k, &Pose::identity(), &x).unwrap();
        assert!((back - px).norm() < 1e-9);
    }
}

#[test]
fn intrinsics_are_validated() {
    assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
    assert!(CameraIntrinsics::new(1.0, 1.0, 11.0, 1.0, 10, 10).is_err());
    assert_eq!(simple_intrinsics().matrix()[(0, 2)], 50.0);
}

#[test]
fn pose_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_pose(&mut rng, 2.0);
    let b = random_pose(&mut rng, 2.0);
    let x = Vec3::new(0.3, -1.0, 2.0);
    assert!((a.compose(&b).apply(&x) - a.apply(&b.apply(&x))).norm() < 1e-12);
    assert!((a.inverse().apply(&a.apply(&x)) - x).norm() < 1e-12);
    assert!(Pose::new(a.rot, a.trans).is_ok());
    assert!(Pose::new(a.rot * 1.01, a.trans).is_err());
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let sc = pnp_scenario(seed, 8, 0.0, 0.0);
        let pose = perturb(&sc.truth, 10.0, 0.05, &mut rng);
        let j = pnp_jacobian(&sc.corrs, &sc.intrinsics, &pose);
        for k in 0..6 {
            let mut step = Vector6::zeros();
            step[k] = h;
            let hi = pnp_residuals(&sc.corrs, &sc.intrinsics, &retract(&pose, &step));
            let lo = pnp_residuals(&sc.corrs, &sc.intrinsics, &retract(&pose, &(-step)));
            for row in 0..j.len() {
                let fd = (hi[row] - lo[row]) / (2.0 * h);
                // relative to the pixel scale of the derivative
                worst = worst.max((fd - j[row][k]).abs() / j[row][k].abs().max(1.0));
            }
        }
    }
    assert!(worst <= 1e-5, "worst {worst}");
}

#[test]
fn refine_at_truth_takes_no_steps() {
    let sc = pnp_scenario(4, 30, 0.0, 0.0);
    let r = pnp_refine_detailed(&sc.corrs, &sc.intrinsics, &sc.truth, &LmSettings::default()).unwrap();
    assert_eq!(r.iterations, 0);
    assert!(r.cost < 1e-18);
    assert!(r.pose.rotation_error_deg(&sc.truth) < 1e-9);
}

#[test]
fn refine_recovers_perturbed_pose() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..50 {
        let sc = pnp_scenario(seed, 50, 0.0, 0.0);
        let init = perturb(&sc.truth, 20.0, 0.1, &mut rng);
        let pose = pnp_refine(&sc.corrs, &sc.intrinsics, &init, 100, 1e-10).unwrap();
        assert!(pose.rotation_error_deg(&sc.truth) < 1e-6, "seed {seed}: {}", pose.rotation_error_deg(&sc.truth));
        assert!(pose.translation_error(&sc.truth) < 1e-8, "seed {seed}: {}", pose.translation_error(&sc.truth));
        assert!(rotation_deviation(&pose.rot) < 1e-12);
    }
}

#[test]
fn refine_under_pixel_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..100 {
        let sc = pnp_scenario(1000 + seed, 100, 0.5, 0.0);
        let init = perturb(&sc.truth, 20.0, 0.1, &mut rng);
        let pose = pnp_refine(&sc.corrs, &sc.intrinsics, &init, 100, 1e-10).unwrap();
        assert!(pose.rotation_error_deg(&sc.truth) < 0.3);
        // points span roughly 6 units of depth
        assert!(pose.translation_error(&sc.truth) < 0.06);
    }
}

#[test]
fn refine_rejects_bad_input() {
    let sc = pnp_scenario(7, 10, 0.0, 0.0);
    let k = sc.intrinsics;
    assert!(matches!(
        pnp_refine(&sc.corrs[..3], &k, &sc.truth, 100, 1e-10),
        Err(LocError::InsufficientData { needed: 4, got: 3 })
    ));
    let line: Vec<Correspondence2D3D> = (0..6)
        .map(|i| Correspondence2D3D {
            pixel: Vec2::new(i as f64, 0.0),
            point: Vec3::new(i as f64, 0.0, 3.0),
        })
        .collect();
    assert!(matches!(pnp_refine(&line, &k, &Pose::identity(), 100, 1e-10), Err(LocError::Degenerate(_))));
}

#[test]
fn refine_is_frame_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sc = pnp_scenario(9, 40, 0.3, 0.0);
    let init = perturb(&sc.truth, 10.0, 0.05, &mut rng);
    let g = random_pose(&mut rng, 3.0);
    let moved: Vec<Correspondence2D3D> = sc
        .corrs
        .iter()
        .map(|c| Correspondence2D3D {
            pixel: c.pixel,
            point: g.apply(&c.point),
        })
        .collect();
    let a = pnp_refine(&sc.corrs, &sc.intrinsics, &init, 100, 1e-10).unwrap();
    let b = pnp_refine(&moved, &sc.intrinsics, &init.compose(&g.inverse()), 100, 1e-10).unwrap();
    let expected = a.compose(&g.inverse());
    assert!(b.rotation_error_deg(&expected) < 1e-6);
    assert!(b.translation_error(&expected) < 1e-7);
}

#[test]
fn ransac_without_outliers_keeps_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sc = pnp_scenario(11, 40, 0.0, 0.0);
    let init = perturb(&sc.truth, 20.0, 0.1, &mut rng);
    let (pose, mask) = pnp_ransac(&sc.corrs, &sc.intrinsics, &init, 2.0, 50, 0).unwrap();
    assert!(mask.iter().all(|m| *m));
    let refined = pnp_refine(&sc.corrs, &sc.intrinsics, &init, 100, 1e-10).unwrap();
    assert!(pose.rotation_error_deg(&refined) < 1e-6);
}

#[test]
fn ransac_with_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..10 {
        let sc = pnp_scenario(100 + seed, 100, 0.0, 0.3);
        let init = perturb(&sc.truth, 20.0, 0.1, &mut rng);
        let (pose, mask) = pnp_ransac(&sc.corrs, &sc.intrinsics, &init, 2.0, 500, seed).unwrap();
        for (m, truth) in mask.iter().zip(&sc.inlier) {
            if *truth {
                assert!(*m);
            }
        }
        assert!(pose.rotation_error_deg(&sc.truth) < 1e-4);
        // deterministic for a fixed seed
        let again = pnp_ransac(&sc.corrs, &sc.intrinsics, &init, 2.0, 500, seed).unwrap();
        assert_eq!(again, (pose, mask));
    }
}

#[test]
fn ransac_on_pure_noise_fails() {
    let sc = pnp_scenario(13, 40, 0.0, 1.0);
    let err = pnp_ransac(&sc.corrs, &sc.intrinsics, &sc.truth, 0.5, 100, 0).unwrap_err();
    assert!(matches!(err, LocError::NoConsensus { .. }));
    assert!(pnp_ransac(&sc.corrs, &sc.intrinsics, &sc.truth, 0.0, 100, 0).is_err());
}

#[test]
fn umeyama_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pts: Vec<Vec3> = (0..20).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
    let same: Vec<Correspondence3D3D> = pts.iter().map(|p| Correspondence3D3D { p: *p, q: *p }).collect();
    let id = umeyama(&same).unwrap();
    assert!((id.rot - Mat3::identity()).amax() < 1e-12 && id.trans.norm() < 1e-12);
    for _ in 0..100 {
        let t = random_pose(&mut rng, 5.0);
        let corrs: Vec<Correspondence3D3D> = pts.iter().map(|q| Correspondence3D3D { p: t.apply(q), q: *q }).collect();
        let est = umeyama(&corrs).unwrap();
        assert!((est.rot - t.rot).amax() < 1e-12);
        assert!((est.trans - t.trans).amax() < 1e-12);
    }
    let line: Vec<Correspondence3D3D> = (0..5)
        .map(|i| Correspondence3D3D {
            p: Vec3::new(i as f64, 0.0, 0.0),
            q: Vec3::new(i as f64, 0.0, 0.0),
        })
        .collect();
    assert!(matches!(umeyama(&line), Err(LocError::Rank(_))));
    assert!(matches!(umeyama(&line[..2]), Err(LocError::InsufficientData { .. })));
}

#[test]
fn umeyama_never_returns_a_reflection() {
    // a planar set mirrored through its plane: the unconstrained optimum is a
    // reflection, the proper rotation is a half turn in the plane
    let q = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, -2.0, 0.0)];
    let corrs: Vec<Correspondence3D3D> = q
        .iter()
        .map(|v| Correspondence3D3D {
            p: Vec3::new(v.x, -v.y, v.z),
            q: *v,
        })
        .collect();
    let est = umeyama(&corrs).unwrap();
    assert!((est.rot.determinant() - 1.0).abs() < 1e-12);
    // noise-free antipodal cloud through a reflection about x
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cloud: Vec<Correspondence3D3D> = (0..10)
        .flat_map(|_| {
            let v = random_direction(&mut rng);
            [v, -v]
        })
        .map(|v| Correspondence3D3D {
            p: Vec3::new(-v.x, v.y, v.z),
            q: v,
        })
        .collect();
    let est = umeyama(&cloud).unwrap();
    assert!((est.rot.determinant() - 1.0).abs() < 1e-12);
    assert!(rotation_deviation(&est.rot) < 1e-12);
}

#[test]
fn umeyama_is_frame_equivariant() {
    let sc = registration_scenario(16, 50, 2.0, 0.01, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = random_pose(&mut rng, 3.0);
    let est = umeyama(&sc.corrs).unwrap();
    let moved: Vec<Correspondence3D3D> = sc
        .corrs
        .iter()
        .map(|c| Correspondence3D3D { p: g.apply(&c.p), q: c.q })
        .collect();
    let est_g = umeyama(&moved).unwrap();
    let expected = g.compose(&est);
    assert!((est_g.rot - expected.rot).amax() < 1e-12);
    assert!((est_g.trans - expected.trans).amax() < 1e-11);
}

#[test]
fn registration_ransac() {
    let clean = registration_scenario(18, 100, 2.0, 0.0, 0.0);
    let (pose, mask) = register_ransac(&clean.corrs, 0.05, 0.1, 100, 0).unwrap();
    assert!(mask.iter().all(|m| *m));
    assert!((pose.rot - clean.truth.rot).amax() < 1e-12);

    for seed in 0..5 {
        let sc = registration_scenario(200 + seed, 200, 2.0, 0.005, 0.5);
        let thr = 0.05;
        let (pose, mask) = register_ransac(&sc.corrs, thr, 0.1, 1000, seed).unwrap();
        for (m, truth) in mask.iter().zip(&sc.inlier) {
            if *truth {
                assert!(*m);
            }
        }
        // residuals of true inliers bound the pose error over the cloud
        for (c, truth) in sc.corrs.iter().zip(&sc.inlier) {
            if *truth {
                assert!((c.p - pose.apply(&c.q)).norm() <= thr);
            }
        }
        assert_eq!(register_ransac(&sc.corrs, thr, 0.1, 1000, seed).unwrap(), (pose, mask));
    }
    let noise = registration_scenario(19, 50, 2.0, 0.0, 1.0);
    assert!(matches!(register_ransac(&noise.corrs, 1e-6, 0.0, 50, 0), Err(LocError::NoConsensus { .. })));
}

#[test]
fn edge_filter_rejects_random_triplets() {
    let sc = registration_scenario(20, 1000, 2.0, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trials = 10_000;
    let mut rejected = 0;
    for _ in 0..trials {
        let idx = rand::seq::index::sample(&mut rng, sc.corrs.len(), 3);
        let tri = [sc.corrs[idx.index(0)], sc.corrs[idx.index(1)], sc.corrs[idx.index(2)]];
        if !edge_compatible(&tri, 0.1) {
            rejected += 1;
        }
    }
    assert!(rejected as f64 > 0.9 * trials as f64, "{rejected}");
    let clean = registration_scenario(22, 3, 2.0, 0.0, 0.0);
    assert!(edge_compatible(&[clean.corrs[0], clean.corrs[1], clean.corrs[2]], 1e-12));
}

#[test]
fn correspondence_files() {
    let sc = pnp_scenario(23, 5, 0.0, 0.0);
    let text = write_correspondences_2d3d(&sc.corrs);
    assert_eq!(parse_correspondences_2d3d(&text).unwrap(), sc.corrs);
    let json = r#"[{"pixel": [1, 2], "point": [3, 4, 5]}]"#;
    assert_eq!(parse_correspondences_2d3d(json).unwrap()[0].point, Vec3::new(3.0, 4.0, 5.0));
    assert!(parse_correspondences_2d3d("1,2,3\n").is_err());

    let reg = registration_scenario(24, 5, 1.0, 0.0, 0.0);
    let text = write_correspondences_3d3d(&reg.corrs);
    assert_eq!(parse_correspondences_3d3d(&text).unwrap(), reg.corrs);
    let json = r#"[{"p": [1, 2, 3], "q": [4, 5, 6]}]"#;
    assert_eq!(parse_correspondences_3d3d(json).unwrap()[0].q, Vec3::new(4.0, 5.0, 6.0));

    let k = parse_intrinsics(r#"{"fx": 100, "fy": 100, "cx": 50, "cy": 50, "width": 100, "height": 100}"#).unwrap();
    assert_eq!(k, simple_intrinsics());
    assert!(parse_intrinsics(r#"{"fx": -1, "fy": 100, "cx": 50, "cy": 50, "width": 100, "height": 100}"#).is_err());
}
