//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use autocam::arm::protocol::{encode_command, encode_report, parse_command, parse_report, ArmReport};
use autocam::arm::{forward_kinematics, inverse_kinematics, ArmParams, ArmState};
use autocam::control::{decide_pan_tilt, decide_zoom, plan_command, CameraCommand, ControlParams, Pan, Tilt, Zoom};
use autocam::eval::{accuracy_table, format_accuracy_table, GroundTruthObject, LabelGrouping};
use autocam::geometry::{build_pose, horizontal_offset, triangulate, CameraPose, StereoRig};
use autocam::matching::{pair_detections, BBox, Detection, Eye, ObjectLabel, PairedObservation};
use autocam::sim::{pinhole_project, random_scene, render_scene, run_closed_loop, LoopConfig, SceneObject};
use autocam::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// A random pose and a point inside its stereo frustum at the given depth.
struct FrustumSample {
    pose: CameraPose,
    point: Vec3,
    depth: f64,
}

fn frustum_samples(n: usize, seed: u64, rig: &StereoRig) -> Vec<FrustumSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(rig.image_width), f64::from(rig.image_height));
    (0..n)
        .map(|_| {
            let pos = Vec3::new(
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
            );
            let pose = build_pose(pos, rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0)).unwrap();
            let depth = rng.random_range(200.0..=1500.0);
            let disp = rig.focal_px * rig.baseline_mm / depth;
            // right eye pixel chosen so the left eye also lands in the image
            let rx = rng.random_range(0.0..=w - disp);
            let y = rng.random_range(0.0..=h);
            let horiz = (rx - rig.cx()) * depth / rig.focal_px + rig.baseline_mm / 2.0;
            let vert = (rig.cy() - y) * depth / rig.focal_px;
            let point = pose.position + depth * pose.normal + horiz * pose.horizontal + vert * pose.vertical;
            FrustumSample { pose, point, depth }
        })
        .collect()
}

fn observe(s: &FrustumSample, rig: &StereoRig, round: bool) -> PairedObservation {
    let (l, r) = pinhole_project(&s.point, &s.pose, rig).unwrap();
    let q = |p: [f64; 2]| if round { [p[0].round(), p[1].round()] } else { p };
    PairedObservation {
        label: ObjectLabel::RedBlock,
        left_center: q(l),
        right_center: q(r),
    }
}

fn triangulation_round_trip() -> Outcome {
    let rig = StereoRig::default();
    let start = Instant::now();
    let samples = frustum_samples(1000, 2024, &rig);
    let mut worst = 0.0f64;
    for s in &samples {
        let e = triangulate(&observe(s, &rig, false), &s.pose, &rig).map_err(|e| e.to_string())?;
        worst = worst.max((e.position - s.point).norm());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-6, || format!("max error {worst:e} mm"))?;
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!("max error {worst:.3e} mm over 1000 points in {elapsed:?}"))
}

fn quantization_bound() -> Outcome {
    let rig = StereoRig::default();
    let fs = rig.focal_px * rig.baseline_mm;
    let samples = frustum_samples(1000, 2024, &rig);
    let mut violations = Vec::new();
    let mut worst_ratio = 0.0f64;
    for (i, s) in samples.iter().enumerate() {
        let e = triangulate(&observe(s, &rig, true), &s.pose, &rig).map_err(|e| e.to_string())?;
        let err = (e.depth_mm - s.depth).abs();
        // exact for a disparity error of at most one pixel
        let exact = s.depth * e.depth_mm / fs + 1e-6;
        ensure(err <= exact, || format!("point {i}: depth error {err} > d*d_est/(fS) = {exact}"))?;
        let bound = s.depth * s.depth / fs + 1e-6;
        worst_ratio = worst_ratio.max(err / bound);
        if err > bound {
            let disp = fs / s.depth;
            violations.push(format!(
                "point {i}: d {:.3} mm, disparity {disp:.3} px -> {:.3} px, error {err:.4} > {bound:.4}",
                s.depth,
                fs / e.depth_mm
            ));
        }
    }
    if violations.is_empty() {
        Ok(format!("worst error / bound = {worst_ratio:.3}"))
    } else {
        Err(format!(
            "{} of 1000 points exceed d^2/(fS): {}; d*d_est/(fS) holds at all points",
            violations.len(),
            violations.join("; ")
        ))
    }
}

fn center_offset() -> Outcome {
    let rig = StereoRig::default();
    for disp in [0.5, 1.0, 7.0, 29.4, 100.0, 220.5, 639.0] {
        let h = horizontal_offset(640.0 + disp, 640.0, &rig).map_err(|e| e.to_string())?;
        ensure(h == 31.5, || format!("disparity {disp}: {h}"))?;
    }
    Ok("31.5 mm exactly at 7 disparities".into())
}

fn det(eye: Eye, cx: f64, cy: f64) -> Detection {
    Detection {
        frame_id: "f".into(),
        eye,
        label: ObjectLabel::GreenBlock,
        bbox: BBox::new(cx - 10.0, cy - 10.0, cx + 10.0, cy + 10.0),
        score: 0.9,
    }
}

fn pairing_tolerance() -> Outcome {
    let left = [det(Eye::Left, 700.0, 300.0)];
    let ok = pair_detections(&left, &[det(Eye::Right, 650.0, 320.0)], 20.0).map_err(|e| e.to_string())?;
    ensure(ok.pairs.len() == 1 && ok.discarded.is_empty(), || "dy = 20 rejected".into())?;
    let no = pair_detections(&left, &[det(Eye::Right, 650.0, 321.0)], 20.0).map_err(|e| e.to_string())?;
    ensure(no.pairs.is_empty() && no.discarded.len() == 2, || "dy = 21 accepted".into())?;
    Ok("dy 20 paired, dy 21 discarded".into())
}

fn table_fixture() -> (Vec<Detection>, Vec<GroundTruthObject>) {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut add = |i: usize, label: ObjectLabel, outcome: u8| {
        let frame = format!("img{i:04}");
        let c = [200.0 + (i % 40) as f64 * 20.0, 200.0 + (i % 13) as f64 * 20.0];
        gts.push(GroundTruthObject {
            frame_id: frame.clone(),
            eye: if i % 2 == 0 { Eye::Left } else { Eye::Right },
            label,
            center: c,
        });
        let eye = gts.last().unwrap().eye;
        let bbox = BBox::new(c[0] - 12.0, c[1] - 9.0, c[0] + 14.0, c[1] + 11.0);
        let wrong = if label.as_str().ends_with("Grasper") {
            ObjectLabel::GreenBlock
        } else {
            ObjectLabel::LeftGrasper
        };
        match outcome {
            // localized with a label of the same group (graspers swapped)
            0 => preds.push(Detection {
                frame_id: frame,
                eye,
                label: match label {
                    ObjectLabel::LeftGrasper => ObjectLabel::RightGrasper,
                    l => l,
                },
                bbox,
                score: 0.8,
            }),
            // localized but the wrong group
            1 => preds.push(Detection { frame_id: frame, eye, label: wrong, bbox, score: 0.7 }),
            // right group, box misses the center
            2 => preds.push(Detection {
                frame_id: frame,
                eye,
                label,
                bbox: BBox::new(c[0] + 5.0, c[1] + 5.0, c[0] + 40.0, c[1] + 40.0),
                score: 0.6,
            }),
            _ => {}
        }
    };
    let mut i = 0;
    for (labels, correct, total) in [
        ([ObjectLabel::LeftGrasper, ObjectLabel::RightGrasper], 84, 104),
        ([ObjectLabel::RedBlock, ObjectLabel::GreenBlock], 129, 244),
    ] {
        for k in 0..total {
            let outcome = if k < correct { 0 } else { (k % 3) as u8 + 1 };
            add(i, labels[k % 2], outcome);
            i += 1;
        }
    }
    (preds, gts)
}

fn table_arithmetic() -> Outcome {
    let (preds, gts) = table_fixture();
    let rows = accuracy_table(&preds, &gts, &LabelGrouping::default());
    let got: Vec<_> = rows.iter().map(|r| (r.correct, r.total, r.percent_string())).collect();
    let want = vec![
        (84, 104, "80.77".to_string()),
        (129, 244, "52.87".to_string()),
        (213, 348, "61.21".to_string()),
    ];
    ensure(got == want, || format!("{got:?}"))?;
    let table = format_accuracy_table(&rows);
    for p in ["80.77", "52.87", "61.21"] {
        ensure(table.contains(p), || format!("table lacks {p}:\n{table}"))?;
    }
    Ok("80.77 / 52.87 / 61.21".into())
}

fn low_right_scene() -> Outcome {
    let cfg = LoopConfig::with_defaults();
    let pose = forward_kinematics(&ArmState::default(), &cfg.arm).map_err(|e| e.to_string())?;
    let at = |d: f64, h: f64, v: f64| pose.position + d * pose.normal + h * pose.horizontal + v * pose.vertical;
    // tight cluster low and to the right of the optical axis
    let scene = [
        SceneObject::new(ObjectLabel::LeftGrasper, at(400.0, 130.0, -120.0)),
        SceneObject::new(ObjectLabel::RightGrasper, at(400.0, 175.0, -135.0)),
        SceneObject::new(ObjectLabel::RedBlock, at(420.0, 150.0, -160.0)),
        SceneObject::new(ObjectLabel::GreenBlock, at(380.0, 160.0, -150.0)),
    ];
    let (left, right) = render_scene(&scene, &pose, &cfg.rig, "low_right", None);
    let pairing = pair_detections(&left, &right, cfg.pairing_tol_px).map_err(|e| e.to_string())?;
    ensure(pairing.pairs.len() == 4, || format!("{} pairs", pairing.pairs.len()))?;
    let ests: Vec<_> = pairing
        .pairs
        .iter()
        .map(|p| triangulate(p, &pose, &cfg.rig))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (cmd, _) = plan_command(&ests, &pose, &cfg.rig, &cfg.control).map_err(|e| e.to_string())?;
    let want = CameraCommand::new(Zoom::In, Tilt::Down, Pan::Right);
    ensure(cmd == want, || cmd.to_string())?;
    Ok(cmd.to_string())
}

fn fk_ik_grid() -> Outcome {
    let params = ArmParams::default();
    let reach_max = params.l2_mm + params.ext_range_mm[1];
    let reach_min = params.l2_mm + params.ext_range_mm[0];
    // independent reachability test with a margin: some bottom-servo angle
    // puts the target inside the upper link's annulus and top-servo range
    // with the camera off vertical
    let reachable = |r: f64, h: f64| {
        (0..=1800).any(|i| {
            let t1 = f64::from(i) * 0.1;
            let (s, c) = t1.to_radians().sin_cos();
            let (dx, dy) = (r - params.l1_mm * c, h - params.l1_mm * s);
            let dist = dx.hypot(dy);
            let mut rel = dy.atan2(dx).to_degrees() - t1;
            while rel > 180.0 {
                rel -= 360.0;
            }
            while rel <= -180.0 {
                rel += 360.0;
            }
            let pitch = t1 + rel + params.bracket_pitch_deg;
            dist >= reach_min + 2.0 && dist <= reach_max - 2.0 && rel.abs() <= 168.0 && pitch.abs() <= 88.0
        })
    };
    let current = ArmState::default();
    let mut checked = 0;
    let mut worst = 0.0f64;
    for yaw in [-75.0f64, -30.0, 0.0, 45.0, 90.0] {
        let (sb, cb) = yaw.to_radians().sin_cos();
        for ri in 1..=45 {
            for hi in -45..=45 {
                let (r, h) = (f64::from(ri) * 10.0, f64::from(hi) * 10.0);
                if !reachable(r, h) {
                    continue;
                }
                let target = Vec3::new(r * cb, h + params.base_height_mm, r * sb);
                let s = inverse_kinematics(&target, &current, &params)
                    .map_err(|e| format!("({r}, {h}) at yaw {yaw}: {e}"))?;
                let again = inverse_kinematics(&target, &current, &params).unwrap();
                ensure(s == again, || format!("({r}, {h}) nondeterministic"))?;
                let pose = forward_kinematics(&s, &params).map_err(|e| e.to_string())?;
                let err = (pose.position - target).norm();
                ensure(err <= 1e-3, || format!("({r}, {h}) at yaw {yaw}: error {err}"))?;
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    ensure(checked > 1000, || format!("only {checked} grid points"))?;
    Ok(format!("{checked} grid points, max error {worst:.3e} mm"))
}

fn codec() -> Outcome {
    let params = ArmParams::default();
    let mut states = 0;
    for tb in [-90.0, -45.5, 0.0, 12.25, 90.0] {
        for t1 in [0.0, 45.0, 90.0, 133.33, 180.0] {
            for t2 in [-170.0, -90.0, -0.01, 60.5, 170.0] {
                for ext in [0.0, 33.3, 66.67, 100.0] {
                    let s = ArmState {
                        theta_base_deg: tb,
                        theta_bottom_deg: t1,
                        theta_top_deg: t2,
                        extension_mm: ext,
                        pitch_offset_deg: 0.0,
                    };
                    let report = ArmReport::from_state(&s, &params).map_err(|e| e.to_string())?;
                    let line = report.encode();
                    if let Ok(pose) = forward_kinematics(&s, &params) {
                        ensure(encode_report(&s, &pose) == line, || line.clone())?;
                    }
                    let parsed = parse_report(&line).map_err(|e| format!("{line:?}: {e}"))?;
                    ensure(parsed.encode() == line, || format!("{line:?} re-encodes differently"))?;
                    ensure(parse_report(&parsed.encode()) == Ok(parsed), || line.clone())?;
                    states += 1;
                }
            }
        }
    }
    ensure(states == 500, || format!("{states} states"))?;
    for z in Zoom::ALL {
        for t in Tilt::ALL {
            for p in Pan::ALL {
                let c = CameraCommand::new(z, t, p);
                let line = encode_command(&c);
                ensure(parse_command(&line) == Ok(c), || line.clone())?;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let alphabet = b"POSMV,. -+0123456789\nx\r";
    let seeds = ["POS,0.00,90.00,-90.00,50.00,200.00,200.00,0.00\n", "MOV + 0 -\n"];
    let (mut valid, mut rejected) = (0, 0);
    for i in 0..10_000 {
        let line: String = if i % 2 == 0 {
            let n = rng.random_range(0..60);
            (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect()
        } else {
            let mut b = seeds[rng.random_range(0..2)].as_bytes().to_vec();
            for _ in 0..rng.random_range(1..4) {
                let at = rng.random_range(0..b.len());
                match rng.random_range(0..3) {
                    0 => b[at] = alphabet[rng.random_range(0..alphabet.len())],
                    1 => {
                        b.remove(at);
                    }
                    _ => b.insert(at, alphabet[rng.random_range(0..alphabet.len())]),
                }
                if b.is_empty() {
                    break;
                }
            }
            String::from_utf8(b).unwrap()
        };
        let outcome = catch_unwind(|| (parse_report(&line), parse_command(&line)))
            .map_err(|_| format!("parser panicked on {line:?}"))?;
        let body_len = line.len();
        match outcome.0 {
            Ok(r) => {
                ensure(r.encode().trim_end() == line.trim_end_matches('\n'), || format!("{line:?}"))?;
                valid += 1;
            }
            Err(e) => {
                ensure(e.offset <= body_len, || format!("{line:?}: offset {}", e.offset))?;
                rejected += 1;
            }
        }
        match outcome.1 {
            Ok(c) => {
                ensure(encode_command(&c).trim_end() == line.trim_end_matches('\n'), || format!("{line:?}"))?;
                valid += 1;
            }
            Err(e) => {
                ensure(e.offset <= body_len, || format!("{line:?}: offset {}", e.offset))?;
                rejected += 1;
            }
        }
    }
    Ok(format!("500 states byte-exact; fuzz: {valid} valid parses, {rejected} MalformedLine"))
}

fn closed_loop() -> Outcome {
    let cfg = LoopConfig::with_defaults();
    let mut steps = Vec::new();
    for seed in 0..20 {
        let scene = random_scene(seed, &forward_kinematics(&cfg.sim.initial_state, &cfg.arm).unwrap(), &cfg.sim.workspace);
        let res = run_closed_loop(&scene, &cfg.sim.initial_state, 200, &cfg)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(res.converged, || format!("seed {seed}: not converged after {} steps", res.steps))?;
        let mut state = res.final_state;
        for extra in 1..=5 {
            let more = run_closed_loop(&scene, &state, 1, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
            ensure(more.converged && more.trajectory[0].command.is_none(), || {
                format!("seed {seed}: left convergence {extra} steps later")
            })?;
            state = more.final_state;
        }
        ensure(state == res.final_state, || format!("seed {seed}: state drifted"))?;
        steps.push(res.steps);
    }
    Ok(format!("20 scenes converged, steps {steps:?}"))
}

fn dead_band() -> Outcome {
    let p = ControlParams::default();
    for h in [50.0, 181.865, 230.94, 363.73, 1000.0 / 3.0, 866.03] {
        let t = p.recenter_frac * h;
        for (uv, axis) in [([t, 0.0], "u"), ([-t, 0.0], "u"), ([0.0, t], "v"), ([0.0, -t], "v")] {
            let (tilt, pan) = decide_pan_tilt(uv, h, &p).map_err(|e| e.to_string())?;
            ensure((tilt, pan) == (Tilt::None, Pan::None), || format!("h {h}, |{axis}| = t: {tilt} {pan}"))?;
        }
        // the other axis still acts at the boundary of this one
        let (tilt, pan) = decide_pan_tilt([t, -2.0 * t], h, &p).map_err(|e| e.to_string())?;
        ensure((tilt, pan) == (Tilt::Down, Pan::None), || format!("h {h}: {tilt} {pan}"))?;
        let z = decide_zoom(p.ring_center_frac * h, h, &p).map_err(|e| e.to_string())?;
        ensure(z == Zoom::None, || format!("h {h}: ratio at ring center gives {z}"))?;
    }
    Ok("boundaries give none on the boundary axis; ring center gives zoom none".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("triangulation round trip", triangulation_round_trip),
        ("pixel quantization bound", quantization_bound),
        ("center horizontal offset", center_offset),
        ("pairing tolerance boundary", pairing_tolerance),
        ("accuracy table arithmetic", table_arithmetic),
        ("low-right scene command", low_right_scene),
        ("fk/ik grid round trip", fk_ik_grid),
        ("serial codec", codec),
        ("closed loop convergence", closed_loop),
        ("control dead bands", dead_band),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
