//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Exits
//! nonzero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use grasp_core::contours::{contour_to_mask, dilate_mask, evolve_snake_traced, extreme_points, EdgeField};
use grasp_core::descriptors::{chi_square, compute_vfh, knn_classify, train_model, TrainingSample};
use grasp_core::eval::{evaluate, iou, ImageDetection, Rect};
use grasp_core::geometry::{depth_to_cloud, estimate_normals};
use grasp_core::io::{generate_scene, parse_pcd, write_pcd, GarmentClass, PcdData, PcdErrorKind, SyntheticSceneSpec};
use grasp_core::pipeline::{
    detect_grasp_points, point_to_line_distance, select_points_neck, select_points_waist, DetectError, PointSelection,
};
use grasp_core::wrinkle::{
    entropy_filter, multiscale_vesselness, orientation_bin, orientation_histogram, ridge_crests, Peak, Threshold,
};
use grasp_core::{
    CameraIntrinsics, Contour, DepthImage, GarmentLabel, KnnModel, Mask, NormalMap, PeakList, PipelineConfig, Pixel,
    PointCloud, SnakeParams, VesselnessParams, VfhDescriptor,
};
use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
type Malformed = (&'static str, String, fn(&PcdErrorKind) -> bool);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 1. Filter oracles
// ---------------------------------------------------------------------------

fn filters() -> Check {
    let t = Instant::now();
    let window = 15;
    // Table seen head-on.
    let k = CameraIntrinsics::centered(120, 90);
    let plane = DepthImage::filled(120, 90, 1.0).unwrap();
    let normals = estimate_normals(&depth_to_cloud(&plane, &k).unwrap(), 0.02).unwrap();
    let e = entropy_filter(&normals, window).unwrap();
    let half = window / 2;
    let mut worst = 0.0f64;
    for y in half..90 - half {
        for x in half..120 - half {
            worst = worst.max(e.map.get(x, y).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("flat-plane entropy reaches {worst:e}"))?;

    // Four normals in four distinct bins, one each.
    let dirs: Vec<Vector3<f64>> =
        [0.0f64, 1.5, 3.0, -1.5].iter().map(|&az| Vector3::new(0.8 * az.cos(), 0.8 * az.sin(), -0.6)).collect();
    let mut bins: Vec<usize> = dirs.iter().map(orientation_bin).collect();
    bins.sort_unstable();
    bins.dedup();
    ensure(bins.len() == 4, || "fixture normals share a bin".into())?;
    let nmap = NormalMap { normals: dirs, valid: vec![true; 4], organized: Some((2, 2)) };
    let h = orientation_histogram(&nmap, Pixel::new(0, 0), 3).unwrap().entropy();
    ensure(h == 2.0, || format!("uniform 4-bin entropy {h}"))?;

    let ramp = DepthImage::from_fn(80, 60, |x, y| 0.8 + 0.002 * x as f64 - 0.001 * y as f64).unwrap();
    let v = multiscale_vesselness(&ramp, &VesselnessParams::default()).unwrap();
    let vmax = v.map.values.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
    ensure(vmax == 0.0, || format!("ramp vesselness reaches {vmax:e}"))?;
    within(t.elapsed(), 5.0)?;
    Ok(format!("plane max {worst:e}, 4-bin {h}, ramp max {vmax}"))
}

// ---------------------------------------------------------------------------
// 2. Ridge detection
// ---------------------------------------------------------------------------

fn ridges() -> Check {
    let t = Instant::now();
    let params = VesselnessParams::default();
    let scales = params.scales.clone();
    let scale_index = |s: f64| {
        scales
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.ln() - s.ln()).abs().total_cmp(&(b.1.ln() - s.ln()).abs()))
            .unwrap()
            .0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, margin) = (128usize, 24.0);
    let (mut hit, mut total, mut scale_ok, mut ridges) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..20 {
        // Three parallel crests toward the sensor, 32 px apart, on a gently
        // tilted table.
        let sigmas: Vec<f64> = (0..3).map(|_| rng.gen_range(3..=9usize) as f64 / 2.0).collect();
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (nx, ny) = (-angle.sin(), angle.cos());
        let shift = rng.gen_range(-4.0..4.0);
        let offsets = [-32.0 + shift, shift, 32.0 + shift];
        let across = |x: usize, y: usize| (x as f64 - 64.0) * nx + (y as f64 - 64.0) * ny;
        let img = DepthImage::from_fn(n, n, |x, y| {
            let d = across(x, y);
            let bumps: f64 = sigmas.iter().zip(&offsets).map(|(s, o)| (-(d - o).powi(2) / (2.0 * s * s)).exp()).sum();
            1.0 + 0.0002 * x as f64 - 0.01 * bumps
        })
        .unwrap();
        let v = multiscale_vesselness(&img, &params).unwrap();
        let crests = ridge_crests(&v, Threshold::Percentile(0.5).resolve(&v.map));
        for (sigma, off) in sigmas.iter().zip(&offsets) {
            let centerline: Vec<Pixel> = (0..n * n)
                .map(|i| Pixel::new((i % n) as i32, (i / n) as i32))
                .filter(|p| {
                    let inner = [p.x, p.y].iter().all(|&c| c as f64 >= margin && c as f64 <= n as f64 - 1.0 - margin);
                    (across(p.x as usize, p.y as usize) - off).abs() <= 0.5 && inner
                })
                .collect();
            if centerline.is_empty() {
                continue;
            }
            ridges += 1;
            for p in &centerline {
                total += 1;
                if crests.iter().any(|c| c.distance(*p) <= 2.0) {
                    hit += 1;
                }
            }
            let mid = centerline[centerline.len() / 2];
            let best = v.best_scale[mid.y as usize * n + mid.x as usize];
            if scale_index(best).abs_diff(scale_index(*sigma)) <= 1 {
                scale_ok += 1;
            }
        }
    }
    let frac = hit as f64 / total as f64;
    let scale_frac = scale_ok as f64 / ridges as f64;
    ensure(frac >= 0.9, || format!("centerline coverage {:.1}%", 100.0 * frac))?;
    ensure(scale_frac >= 0.8, || format!("best scale matched on {scale_ok}/{ridges} ridges"))?;
    within(t.elapsed(), 30.0)?;
    Ok(format!("coverage {:.1}%, scale {scale_ok}/{ridges} ridges", 100.0 * frac))
}

// ---------------------------------------------------------------------------
// 3. Descriptor contract
// ---------------------------------------------------------------------------

fn random_cloud(rng: &mut impl Rng, n: usize) -> (PointCloud, NormalMap) {
    let points: Vec<Point3<f64>> = (0..n)
        .map(|_| Point3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(0.8..1.2)))
        .collect();
    let normals: Vec<Vector3<f64>> =
        (0..n).map(|_| Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -1.0).normalize()).collect();
    (PointCloud::from_points(points), NormalMap { valid: vec![true; n], normals, organized: None })
}

/// Linear-scan k-NN with its own chi-square and ranking.
fn knn_oracle(model: &[(Vec<f64>, GarmentLabel)], q: &[f64], k: usize) -> GarmentLabel {
    let dist = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            if a[i] + q[i] > 0.0 {
                s += (a[i] - q[i]).powi(2) / (a[i] + q[i]);
            }
        }
        s
    };
    let mut ranked: Vec<(f64, usize)> = model.iter().enumerate().map(|(i, (d, _))| (dist(d), i)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut tally: Vec<(GarmentLabel, usize, f64)> = Vec::new();
    for &(d, i) in ranked.iter().take(k) {
        let label = model[i].1;
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((label, 1, d)),
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.code().cmp(b.0.code())));
    tally[0].0
}

fn random_hist(rng: &mut impl Rng) -> Vec<f64> {
    // Sparse, so some bins are empty in both operands.
    let mut v: Vec<f64> = (0..308).map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
    for (lo, hi) in [(0, 45), (45, 90), (90, 135), (135, 180), (180, 308)] {
        let s: f64 = v[lo..hi].iter().sum();
        if s > 0.0 {
            v[lo..hi].iter_mut().for_each(|x| *x /= s);
        }
    }
    v
}

fn descriptors() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let viewpoint = Point3::origin();
    for trial in 0..50 {
        let n = rng.gen_range(2..400);
        let (cloud, normals) = random_cloud(&mut rng, n);
        let d = compute_vfh(&cloud, &normals, &viewpoint).map_err(|e| format!("vfh failed: {e}"))?;
        ensure(d.bins().len() == 308, || format!("length {}", d.bins().len()))?;
        for b in 0..5 {
            let s: f64 = d.block(b).iter().sum();
            ensure((s - 1.0).abs() <= 1e-9, || format!("trial {trial} block {b} sums to {s}"))?;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled = PointCloud::from_points(order.iter().map(|&i| cloud.points[i]).collect());
        let snormals = NormalMap {
            normals: order.iter().map(|&i| normals.normals[i]).collect(),
            valid: vec![true; n],
            organized: None,
        };
        let p = compute_vfh(&shuffled, &snormals, &viewpoint).unwrap();
        let diff = d.bins().iter().zip(p.bins()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(diff <= 1e-12, || format!("permutation moved a bin by {diff:e}"))?;
    }

    let labels = [GarmentLabel::NeckShirt, GarmentLabel::NeckTShirt, GarmentLabel::WaistPant];
    let mut queries = 0;
    for m in 0..100 {
        let size = rng.gen_range(1..40);
        let raw: Vec<(Vec<f64>, GarmentLabel)> =
            (0..size).map(|_| (random_hist(&mut rng), *labels.choose(&mut rng).unwrap())).collect();
        let model = KnnModel::new(raw.iter().map(|(h, l)| (VfhDescriptor::new(h.clone()).unwrap(), *l)).collect());
        for _ in 0..5 {
            let q = random_hist(&mut rng);
            let qd = VfhDescriptor::new(q.clone()).unwrap();
            for k in [1, 10] {
                let got = knn_classify(&model, &qd, k).unwrap().label;
                let want = knn_oracle(&raw, &q, k);
                ensure(got == want, || format!("model {m} k={k}: got {got}, oracle {want}"))?;
                queries += 1;
            }
        }
    }

    // Vote ties: equal votes with different sums, then fully equal.
    let (a, b, c) = (random_hist(&mut rng), random_hist(&mut rng), random_hist(&mut rng));
    let q = a.clone();
    let ties: Vec<Vec<(Vec<f64>, GarmentLabel)>> = vec![
        vec![(a.clone(), GarmentLabel::WaistPant), (b.clone(), GarmentLabel::NeckShirt)],
        vec![
            (b.clone(), GarmentLabel::WaistPant),
            (b.clone(), GarmentLabel::NeckTShirt),
            (c.clone(), GarmentLabel::NeckShirt),
        ],
        vec![(b.clone(), GarmentLabel::NeckTShirt), (b.clone(), GarmentLabel::NeckShirt)],
        vec![
            (a.clone(), GarmentLabel::WaistPant),
            (b.clone(), GarmentLabel::NeckShirt),
            (b.clone(), GarmentLabel::NeckShirt),
            (a.clone(), GarmentLabel::WaistPant),
        ],
    ];
    for (i, raw) in ties.iter().enumerate() {
        let model = KnnModel::new(raw.iter().map(|(h, l)| (VfhDescriptor::new(h.clone()).unwrap(), *l)).collect());
        for k in [1, 2, 10] {
            let got = knn_classify(&model, &VfhDescriptor::new(q.clone()).unwrap(), k).unwrap().label;
            let want = knn_oracle(raw, &q, k);
            ensure(got == want, || format!("tie fixture {i} k={k}: got {got}, oracle {want}"))?;
        }
    }
    // The library's chi-square agrees with the oracle's on a sample.
    let (x, y) = (random_hist(&mut rng), random_hist(&mut rng));
    let mine: f64 = (0..308).filter(|&i| x[i] + y[i] > 0.0).map(|i| (x[i] - y[i]).powi(2) / (x[i] + y[i])).sum();
    ensure((chi_square(&x, &y) - mine).abs() <= 1e-12, || "chi-square disagrees".into())?;
    Ok(format!("50 clouds, {queries} k-NN queries + {} tie fixtures", ties.len()))
}

// ---------------------------------------------------------------------------
// 4. Geometry oracles
// ---------------------------------------------------------------------------

fn random_blob(rng: &mut impl Rng, w: usize, h: usize) -> Mask {
    let disks: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..4))
        .map(|_| {
            (rng.gen_range(25.0..55.0), rng.gen_range(25.0..55.0), rng.gen_range(5.0..15.0), rng.gen_range(0.5..1.5))
        })
        .collect();
    Mask::from_fn(w, h, |x, y| {
        disks.iter().any(|&(cx, cy, r, e)| ((x as f64 - cx) / e).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    })
}

fn random_peaks(rng: &mut impl Rng, w: usize, h: usize) -> PeakList {
    let mut peaks: Vec<Peak> = (0..rng.gen_range(2..25))
        .map(|_| Peak {
            pixel: Pixel::new(rng.gen_range(0..w as i32), rng.gen_range(0..h as i32)),
            value: rng.gen_range(0.1..1.0),
        })
        .collect();
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value));
    PeakList { peaks }
}

fn dilation_oracle(m: &Mask, r: usize) -> Mask {
    let set: Vec<Pixel> = m.pixels().collect();
    let r2 = (r * r) as i64;
    Mask::from_fn(m.width, m.height, |x, y| {
        set.iter().any(|p| (i64::from(p.x) - x as i64).pow(2) + (i64::from(p.y) - y as i64).pow(2) <= r2)
    })
}

fn mean_center(m: &Mask) -> Pixel {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for p in m.pixels() {
        sx += p.x as f64;
        sy += p.y as f64;
        n += 1.0;
    }
    Pixel::new((sx / n).round() as i32, (sy / n).round() as i32)
}

fn line_dist(p: Pixel, a: Pixel, b: Pixel) -> f64 {
    if a == b {
        return p.distance(a);
    }
    let (dx, dy) = (f64::from(b.x - a.x), f64::from(b.y - a.y));
    (dx * f64::from(p.y - a.y) - dy * f64::from(p.x - a.x)).abs() / dx.hypot(dy)
}

/// Minimum of `score` over unordered candidate pairs.
fn brute_pair(c: &[Pixel], score: impl Fn(Pixel, Pixel) -> f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i != j {
                let s = score(c[i], c[j]);
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        }
    }
    best
}

fn geometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (w, h) = (100usize, 80usize);
    for i in 0..100 {
        let mk = |rng: &mut ChaCha8Rng| {
            let side = 2 * rng.gen_range(0..30) + 1;
            Rect::new(Pixel::new(rng.gen_range(-10..110), rng.gen_range(-10..90)), side, w, h)
        };
        let (a, b) = (mk(&mut rng), mk(&mut rng));
        let inside = |r: &Rect, x: i64, y: i64| {
            let half = (r.side / 2) as i64;
            (x - i64::from(r.center.x)).abs() <= half && (y - i64::from(r.center.y)).abs() <= half
        };
        let (mut inter, mut union) = (0usize, 0usize);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (ia, ib) = (inside(&a, x, y), inside(&b, x, y));
                inter += usize::from(ia && ib);
                union += usize::from(ia || ib);
            }
        }
        let want = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        let got = iou(&a, &b);
        ensure(got == want, || format!("rect pair {i}: iou {got}, enumeration {want}"))?;
    }

    for i in 0..30 {
        let m = random_blob(&mut rng, w, h);
        let (p, q) = extreme_points(&m).unwrap();
        let set: Vec<Pixel> = m.pixels().collect();
        let mut max_d2 = 0i64;
        for a in &set {
            for b in &set {
                max_d2 = max_d2.max(i64::from(a.x - b.x).pow(2) + i64::from(a.y - b.y).pow(2));
            }
        }
        let d2 = i64::from(p.x - q.x).pow(2) + i64::from(p.y - q.y).pow(2);
        ensure(m.contains(p) && m.contains(q) && d2 == max_d2, || format!("extreme fixture {i}: {d2} vs {max_d2}"))?;

        let r = rng.gen_range(1..8);
        ensure(dilate_mask(&m, r) == dilation_oracle(&m, r), || format!("dilation fixture {i} radius {r}"))?;
    }

    for i in 0..30 {
        let m = random_blob(&mut rng, w, h);
        let peaks = random_peaks(&mut rng, w, h);
        let r = rng.gen_range(3..10);
        let ring = dilation_oracle(&m, r);
        let center = mean_center(&m);
        let cands: Vec<Pixel> = peaks.pixels().filter(|p| ring.contains(*p) && !m.contains(*p)).collect();
        let want = brute_pair(&cands, |a, b| line_dist(center, a, b));
        let got = select_points_neck(&m, &peaks, r).unwrap();
        check_selection(&format!("neck fixture {i}"), got, want, &cands, |a, b| point_to_line_distance(center, a, b))?;
    }
    for i in 0..30 {
        let m = random_blob(&mut rng, w, h);
        let mut peaks = random_peaks(&mut rng, w, h);
        // Make sure some land inside.
        let inside: Vec<Pixel> = m.pixels().collect();
        for p in peaks.peaks.iter_mut().step_by(2) {
            p.pixel = *inside.choose(&mut rng).unwrap();
        }
        let (e1, e2) = extreme_points(&m).unwrap();
        let cands: Vec<Pixel> = peaks.pixels().filter(|p| m.contains(*p)).collect();
        let score = |a: Pixel, b: Pixel| a.distance(e1) + b.distance(e2);
        let want = brute_pair(&cands, score);
        let got = select_points_waist(&m, &peaks).unwrap();
        if let PointSelection::Pair { a, b, .. } = got {
            ensure(a.distance(e1) + b.distance(e2) <= a.distance(e2) + b.distance(e1) + 1e-12, || {
                format!("waist fixture {i}: point a is not matched with the first extreme")
            })?;
        }
        check_selection(&format!("waist fixture {i}"), got, want, &cands, |a, b| score(a, b).min(score(b, a)))?;
    }
    Ok("100 rect pairs, 30 fixtures each for extremes, dilation, neck, waist".into())
}

fn check_selection(
    name: &str,
    got: PointSelection,
    want: Option<f64>,
    cands: &[Pixel],
    score: impl Fn(Pixel, Pixel) -> f64,
) -> Result<(), String> {
    match (got, want) {
        (PointSelection::Pair { a, b, score: s }, Some(best)) => {
            ensure(cands.contains(&a) && cands.contains(&b) && a != b, || format!("{name}: pair not from candidates"))?;
            ensure((s - best).abs() <= 1e-9 && (score(a, b) - best).abs() <= 1e-9, || {
                format!("{name}: score {s}, brute force {best}")
            })
        }
        (PointSelection::Single(p), None) => ensure(cands == [p], || format!("{name}: single {p:?} vs {cands:?}")),
        (PointSelection::NoCandidates, None) => ensure(cands.is_empty(), || format!("{name}: missed candidates")),
        (got, want) => Err(format!("{name}: got {got:?}, brute force {want:?}")),
    }
}

// ---------------------------------------------------------------------------
// 5. Snake convergence
// ---------------------------------------------------------------------------

fn snake() -> Check {
    let img = DepthImage::from_fn(200, 200, |x, y| {
        let r = (x as f64 - 100.0).hypot(y as f64 - 100.0);
        if r <= 40.0 {
            0.9
        } else {
            1.0
        }
    })
    .unwrap();
    let params = SnakeParams { init_radius: 60.0, ..Default::default() };
    let field = EdgeField::new(&img, params.edge_sigma);
    let trace = evolve_snake_traced(&field, Pixel::new(100, 100), &params).map_err(|e| e.to_string())?;
    let vs = trace.contour.vertices();
    let mean_r = vs.iter().map(|v| (v.x - 100.0).hypot(v.y - 100.0)).sum::<f64>() / vs.len() as f64;
    ensure((37.0..=43.0).contains(&mean_r), || format!("mean radius {mean_r:.3}"))?;
    let rises = trace.energies.windows(2).filter(|p| p[1] > p[0]).count();
    ensure(rises == 0, || format!("energy rose {rises} times"))?;
    Ok(format!("mean radius {mean_r:.3}, {} iterations, converged {}", trace.iterations, trace.converged))
}

// ---------------------------------------------------------------------------
// 6. End-to-end synthetic benchmark
// ---------------------------------------------------------------------------

const CLASSES: [GarmentClass; 3] = [GarmentClass::Shirt, GarmentClass::TShirt, GarmentClass::Pant];

fn key_part_region(scene: &grasp_core::io::SyntheticScene) -> Mask {
    let outline = Contour::from_pixels(&scene.annotation.polygon).unwrap();
    contour_to_mask(&outline, scene.depth.width(), scene.depth.height())
}

fn benchmark() -> Check {
    let t = Instant::now();
    let cfg = PipelineConfig::default();
    let mut samples = Vec::new();
    for (ci, class) in CLASSES.iter().enumerate() {
        for i in 0..20 {
            let s = generate_scene(&SyntheticSceneSpec::new(*class, 1000 + (ci * 100 + i) as u64)).unwrap();
            samples.push(TrainingSample { region: key_part_region(&s), depth: s.depth, label: s.annotation.label });
        }
    }
    let (model, _) = train_model(&samples, &cfg.region).map_err(|e| e.to_string())?;
    let (mut detections, mut truth) = (Vec::new(), Vec::new());
    for (ci, class) in CLASSES.iter().enumerate() {
        // 13 + 13 + 14 held-out scenes.
        for i in 0..if ci == 2 { 14 } else { 13 } {
            let s = generate_scene(&SyntheticSceneSpec::new(*class, 5000 + (ci * 100 + i) as u64)).unwrap();
            let (label, points) = match detect_grasp_points(&s.depth, &model, &cfg) {
                Ok(g) => (g.detection.label, vec![g.point_a, g.point_b]),
                Err(DetectError::NoKeyPart) => (GarmentLabel::NoDetection, vec![]),
                Err(DetectError::NoGraspCandidates { label }) => (label, vec![]),
                Err(e) => return Err(format!("{}: {e}", s.annotation.id)),
            };
            detections.push(ImageDetection { id: s.annotation.id.clone(), label, points });
            truth.push(s.annotation);
        }
    }
    let report = evaluate(&detections, &truth, 640, 480).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for label in &GarmentLabel::ALL[..3] {
        let c = &report.per_class[label.index()];
        summary.push(format!(
            "{} best {:.3} recall1 {:.1}% recall2 {:.1}%",
            label.code(),
            c.best_iou,
            c.recall_one,
            c.recall_two
        ));
        if c.best_iou < 0.5 || c.recall_one < 50.0 {
            failures.push(label.code());
        }
    }
    let elapsed = t.elapsed();
    let summary = format!("{} in {:.0}s", summary.join(", "), elapsed.as_secs_f64());
    ensure(failures.is_empty(), || format!("{summary}; below target: {failures:?}"))?;
    within(elapsed, 600.0)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 7. Format robustness
// ---------------------------------------------------------------------------

fn pcd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (w, h) = (17, 9);
    let mut cloud = PointCloud::from_points(
        (0..w * h)
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.3..3.0)))
            .collect(),
    );
    cloud.organized = Some((w, h));
    for i in (0..w * h).step_by(7) {
        cloud.valid[i] = false;
    }
    for mode in [PcdData::Ascii, PcdData::Binary] {
        let bytes = write_pcd(&cloud, mode);
        let back = parse_pcd(&bytes).map_err(|e| format!("{mode:?}: {e}"))?;
        ensure(write_pcd(&back, mode) == bytes, || format!("{mode:?} rewrite differs"))?;
        ensure(back.organized == Some((w, h)), || format!("{mode:?} lost the layout"))?;
        for i in 0..w * h {
            ensure(back.valid[i] == cloud.valid[i], || format!("{mode:?} validity of point {i}"))?;
            if cloud.valid[i] {
                let (a, b) = (cloud.points[i], back.points[i]);
                let same = [(a.x, b.x), (a.y, b.y), (a.z, b.z)]
                    .iter()
                    .all(|(u, v)| (*u as f32).to_bits() == (*v as f32).to_bits());
                ensure(same, || format!("{mode:?} point {i} changed"))?;
            }
        }
    }

    let good = String::from_utf8(write_pcd(&cloud, PcdData::Ascii)).unwrap();
    let cases: [Malformed; 4] = [
        ("version", good.replace("VERSION 0.7", "VERSION .5"), |k| matches!(k, PcdErrorKind::UnsupportedVersion(_))),
        ("data mode", good.replace("DATA ascii", "DATA binary_compressed"), |k| {
            matches!(k, PcdErrorKind::UnsupportedData(_))
        }),
        ("field/size", good.replace("SIZE 4 4 4", "SIZE 4 4"), |k| matches!(k, PcdErrorKind::FieldMismatch(_))),
        ("truncated", good.lines().take(good.lines().count() - 20).collect::<Vec<_>>().join("\n"), |k| {
            matches!(k, PcdErrorKind::Truncated { .. })
        }),
    ];
    for (name, text, expect) in cases {
        match parse_pcd(text.as_bytes()) {
            Err(e) if expect(&e.kind) => {}
            other => return Err(format!("{name} fixture gave {other:?}")),
        }
    }
    Ok("ascii and binary round trips; version, data-mode, field/size and truncation rejected".into())
}

// ---------------------------------------------------------------------------
// 8. Determinism
// ---------------------------------------------------------------------------

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_grasp");
    let run = |args: &[&str]| -> Result<std::process::Output, String> {
        let out = Command::new(bin).args(args).current_dir(dir.path()).output().map_err(|e| e.to_string())?;
        match out.status.code() {
            Some(0) | Some(3) => Ok(out),
            code => Err(format!("{args:?} exited {code:?}: {}", String::from_utf8_lossy(&out.stderr))),
        }
    };
    for class in ["pant", "shirt", "tshirt"] {
        run(&["synth", "--class", class, "--seed", "300", "--count", "3", "--out", "data"])?;
    }
    run(&["train", "--annotations", "data/annotations.txt", "--data", "data", "--out", "model.txt"])?;
    let mut outputs = Vec::new();
    for dump in ["maps1", "maps2"] {
        let out = run(&["detect", "--model", "model.txt", "--input", "data/tshirt-00301.pgm", "--dump-maps", dump])?;
        outputs.push(out.stdout);
    }
    ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || "detect output differs between runs".into())?;
    for f in ["entropy.pgm", "vesselness.pgm", "overlay.pgm"] {
        let a = std::fs::read(dir.path().join("maps1").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.path().join("maps2").join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} bytes of output identical, maps identical", outputs[0].len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 filter oracles", filters),
        ("2 ridge detection", ridges),
        ("3 descriptor contract", descriptors),
        ("4 geometry oracles", geometry),
        ("5 snake convergence", snake),
        ("6 synthetic benchmark", benchmark),
        ("7 format robustness", pcd),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let result = f();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
