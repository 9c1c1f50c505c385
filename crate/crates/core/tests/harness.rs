use patchseg::eigenpatch::GdConfig;
use patchseg::harness::*;
use patchseg::{ImageGrid, LabelMap, RegionMask};

fn masked_values(img: &ImageGrid, mask: &RegionMask) -> Vec<f64> {
    img.as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &h)| h)
        .map(|(&v, _)| v)
        .collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

#[test]
fn textures_stay_within_their_amplitude() {
    let d = TextureDescriptor::sinusoid(30.0, 0.1)
        .with_contrast(0.4)
        .with_level(0.2);
    let img = d.render(50, 40).unwrap();
    assert!(img.min() >= 0.2 - 0.2 - 1e-12 && img.max() <= 0.2 + 0.2 + 1e-12);
    let c = TextureDescriptor::checker(8.0).render(32, 32).unwrap();
    let mut values: Vec<f64> = c.as_slice().to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    assert_eq!(values, vec![0.25, 0.75]);
    assert_eq!(c.get(0, 0), c.get(3, 3));
    assert_ne!(c.get(0, 0), c.get(4, 0));
}

#[test]
fn bandpass_matches_the_variance_of_a_single_wave() {
    let amp: f64 = 0.25;
    let img = TextureDescriptor::bandpass(0.0, 0.15, 20.0, 3)
        .render(128, 128)
        .unwrap();
    let (_, var) = mean_var(img.as_slice());
    let want = amp * amp / 2.0;
    assert!((var / want - 1.0).abs() < 0.3, "variance {var} vs {want}");
    let again = TextureDescriptor::bandpass(0.0, 0.15, 20.0, 3)
        .render(128, 128)
        .unwrap();
    assert_eq!(img, again);
    let other = TextureDescriptor::bandpass(0.0, 0.15, 20.0, 4)
        .render(128, 128)
        .unwrap();
    assert_ne!(img, other);
}

#[test]
fn texture_parameters_are_validated() {
    assert!(TextureDescriptor::sinusoid(0.0, 0.45).render(8, 8).is_err());
    assert!(TextureDescriptor::sinusoid(0.0, 0.0).render(8, 8).is_err());
    assert!(TextureDescriptor::checker(1.0).render(8, 8).is_err());
    assert!(TextureDescriptor::bandpass(0.0, 0.1, 120.0, 0)
        .render(8, 8)
        .is_err());
    assert!(TextureDescriptor::sinusoid(0.0, 0.1)
        .with_contrast(0.0)
        .render(8, 8)
        .is_err());
}

#[test]
fn flat_mosaic_thresholds_to_its_template() {
    for template in [Template::RightHalf, Template::Disk] {
        let spec = MosaicSpec::new(TextureDescriptor::flat(0.3), TextureDescriptor::flat(0.7))
            .template(template)
            .size(64);
        let (img, truth) = make_mosaic(&spec).unwrap();
        assert_eq!(RegionMask::threshold(&img, 0.5), truth);
    }
    let disk = Template::Disk.render(120).unwrap();
    let share = disk.count() as f64 / disk.len() as f64;
    assert!((share - 1.0 / 3.0).abs() < 0.01, "{share}");
}

#[test]
fn zero_mean_removes_region_means_and_keeps_variance() {
    let a = TextureDescriptor::checker(6.0).with_level(0.8);
    let b = TextureDescriptor::bandpass(45.0, 0.2, 20.0, 1).with_level(0.1);
    let raw = MosaicSpec::new(a.clone(), b.clone()).size(64);
    let (img0, truth) = make_mosaic(&raw).unwrap();
    let (img1, _) = make_mosaic(&raw.clone().zero_mean(true)).unwrap();
    for region in [truth.clone(), truth.complement()] {
        let (m0, v0) = mean_var(&masked_values(&img0, &region));
        let (m1, v1) = mean_var(&masked_values(&img1, &region));
        assert!(m1.abs() < 1e-6, "mean {m1}");
        assert!((v0 - v1).abs() <= 1e-12 * v0.max(1.0), "{v0} vs {v1}");
        assert!(m0.abs() > 0.05);
    }
}

#[test]
fn noise_is_seeded_with_the_requested_spread() {
    let spec = MosaicSpec::new(TextureDescriptor::flat(0.5), TextureDescriptor::flat(0.5))
        .size(96)
        .noise(0.05, 11);
    let (a, _) = make_mosaic(&spec).unwrap();
    let (b, _) = make_mosaic(&spec).unwrap();
    assert_eq!(a, b);
    let (mean, var) = mean_var(a.as_slice());
    assert!((mean - 0.5).abs() < 0.005);
    assert!((var.sqrt() - 0.05).abs() < 0.005);
    assert!(make_mosaic(&spec.clone().noise(-1.0, 0)).is_err());
    assert!(spec.clone().size(40).validate(13).is_err());
    assert!(spec.validate(13).is_ok());
}

#[test]
fn mask_evaluation_is_label_symmetric() {
    let truth = RegionMask::from_fn(32, 32, |x, _| x >= 16);
    let same = evaluate_mask(&truth, &truth).unwrap();
    assert_eq!(same.error_rate, 0.0);
    assert_eq!(
        evaluate_mask(&truth.complement(), &truth)
            .unwrap()
            .error_rate,
        0.0
    );
    let checker = RegionMask::from_fn(32, 32, |x, y| (x + y) % 2 == 0);
    let m = evaluate_mask(&checker, &truth).unwrap();
    assert_eq!(m.error_rate, 0.5);
    assert!((m.error_rate_per_region.iter().sum::<f64>() - 0.5).abs() < 1e-12);
    let shifted = RegionMask::from_fn(32, 32, |x, _| x >= 20);
    let m = evaluate_mask(&shifted, &truth).unwrap();
    assert_eq!(m.error_rate, 4.0 / 32.0);
    assert_eq!(m.error_rate_per_region, vec![4.0 / 32.0, 0.0]);
    assert!(evaluate_mask(&truth, &RegionMask::filled(8, 8, true)).is_err());
}

#[test]
fn label_evaluation_counts_each_true_region() {
    let truth = cross_template(30);
    assert_eq!(truth.num_labels(), 5);
    assert_eq!(evaluate_labels(&truth, &truth).unwrap().error_rate, 0.0);
    let all_zero = LabelMap::new(30, 30, vec![0; 900]).unwrap();
    let m = evaluate_labels(&all_zero, &truth).unwrap();
    assert_eq!(m.error_rate_per_region[0], 0.0);
    assert!((m.error_rate - (1.0 - truth.region(0).count() as f64 / 900.0)).abs() < 1e-12);
    assert!((m.error_rate_per_region.iter().sum::<f64>() - m.error_rate).abs() < 1e-12);
}

#[test]
fn cross_layout_and_seeds() {
    let layout = cross_template(128);
    let sizes: Vec<usize> = (0..5).map(|i| layout.region(i).count()).collect();
    assert_eq!(sizes.iter().sum::<usize>(), 128 * 128);
    assert_eq!(sizes[0], sizes[1]);
    assert_eq!(sizes[2], sizes[3]);
    assert_eq!(layout.get(64, 64), 4);
    assert_eq!(layout.get(64, 0), 0);
    assert_eq!(layout.get(64, 127), 1);
    assert_eq!(layout.get(0, 64), 2);
    assert_eq!(layout.get(127, 64), 3);
    for i in 0..5 {
        let region = layout.region(i);
        let seed = interior_seed(&region, 12).unwrap();
        assert_eq!(seed.count(), 25 * 25);
        assert_eq!(seed.and(&region).unwrap().count(), seed.count());
    }
    let textures: Vec<TextureSource> = (0..5)
        .map(|i| TextureDescriptor::flat(i as f64 / 4.0).into())
        .collect();
    let img = make_region_mosaic(&textures, &layout, false, 0.0, 0).unwrap();
    assert_eq!(img.get(64, 64), 1.0);
    assert_eq!(img.get(0, 64), 0.5);
    assert!(make_region_mosaic(&textures[..3], &layout, false, 0.0, 0).is_err());
}

#[test]
fn benchmark_normalises_by_the_worst_cell() {
    let images: Vec<ImageGrid> = (0..2)
        .map(|s| {
            TextureDescriptor::bandpass(30.0 * s as f64, 0.2, 30.0, s)
                .render(32, 32)
                .unwrap()
        })
        .collect();
    let gd = GdConfig {
        max_iters: 400,
        ..GdConfig::default()
    };
    let rows = run_benchmark_gd_vs_svd(&images, 5, &[1, 2, 25], &gd).unwrap();
    assert_eq!(rows.len(), 6);
    for img in 0..2 {
        let cells: Vec<&BenchRow> = rows.iter().filter(|r| r.image == img).collect();
        let top = cells
            .iter()
            .map(|r| r.gd_normalized.max(r.oracle_normalized))
            .fold(0.0, f64::max);
        assert!((top - 1.0).abs() < 1e-12);
        let full = cells.iter().find(|r| r.k == 25).unwrap();
        assert!(full.gd_normalized < 1e-8 && full.oracle_normalized < 1e-8);
    }
    let csv = bench_csv(&rows);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("image,k,"));
    assert!(run_benchmark_gd_vs_svd(&images, 5, &[26], &gd).is_err());
}

#[test]
fn constant_image_benchmark_is_exact_with_one_basis() {
    let img = ImageGrid::filled(24, 24, 0.6);
    let rows = run_benchmark_gd_vs_svd(&[img], 5, &[1], &GdConfig::default()).unwrap();
    assert!(rows[0].oracle_error < 1e-12);
    assert!(rows[0].gd_error < 1e-6 * 0.36, "{}", rows[0].gd_error);
    assert_eq!(rows[0].gd_normalized, 0.0);
}

#[test]
fn initial_contours_split_the_image() {
    let rect = InitContour::default().render(100, 100).unwrap();
    assert!(rect.get(60, 50) && !rect.get(20, 50) && !rect.get(60, 2));
    assert_eq!(rect.count(), 50 * 80);
    let circle = InitContour::Circle {
        cx: 0.5,
        cy: 0.5,
        r: 0.25,
    }
    .render(100, 100)
    .unwrap();
    let area = std::f64::consts::PI * 25.0 * 25.0;
    assert!((circle.count() as f64 - area).abs() < 0.02 * area);
    let grid = InitContour::CircleGrid {
        radius: 4.0,
        spacing: 16.0,
    }
    .render(64, 64)
    .unwrap();
    assert!(grid.get(8, 8) && !grid.get(0, 0));
    let bad = InitContour::Rectangle {
        x0: 0.6,
        y0: 0.1,
        x1: 0.5,
        y1: 0.9,
    };
    assert!(bad.render(10, 10).is_err());
    assert!(InitContour::Circle {
        cx: 0.5,
        cy: 0.5,
        r: 0.0
    }
    .render(10, 10)
    .is_err());
    let json = r#"{"shape": "rectangle", "x0": 0.1, "y0": 0.1, "x1": 0.5, "y1": 0.5}"#;
    let parsed: InitContour = serde_json::from_str(json).unwrap();
    assert_eq!(parsed.render(10, 10).unwrap().count(), 16);
}

#[test]
fn structure_suite_pairs_share_their_mean() {
    let suite = structure_only_suite();
    assert_eq!(suite.len(), 10);
    for spec in &suite {
        let (img, truth) = make_mosaic(spec).unwrap();
        assert_eq!(img.dims(), (128, 128));
        for region in [truth.clone(), truth.complement()] {
            assert!(mean_var(&masked_values(&img, &region)).0.abs() < 1e-6);
        }
    }
}

#[test]
fn mosaic_specs_round_trip_through_json() {
    let spec = MosaicSpec::new(
        TextureDescriptor::checker(8.0),
        TextureDescriptor::bandpass(10.0, 0.2, 15.0, 4),
    )
    .zero_mean(true)
    .noise(0.01, 3)
    .template(Template::Disk);
    let text = serde_json::to_string(&spec).unwrap();
    let back: MosaicSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    let short: MosaicSpec = serde_json::from_str(
        r#"{"texture_a": {"kind": "sinusoid", "orientation": 0, "frequency": 0.1},
            "texture_b": {"kind": "checker", "period": 8}}"#,
    )
    .unwrap();
    assert_eq!(short.size, 128);
    assert_eq!(short.template, Template::RightHalf);
}

#[test]
fn alpha_sweep_reports_every_cell() {
    let specs =
        vec![MosaicSpec::new(TextureDescriptor::flat(0.2), TextureDescriptor::flat(0.8)).size(48)];
    let cfg = patchseg::SegmentationConfig {
        m: 5,
        k: 2,
        max_steps: 30,
        ..Default::default()
    };
    let init = InitContour::Rectangle {
        x0: 0.45,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };
    let rows = run_alpha_sweep(&specs, &[0.5, 1.0], &cfg, &init).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.pair == 0 && r.error_rate <= 0.1));
    assert_eq!(sweep_csv(&rows).lines().count(), 3);
    assert!(run_alpha_sweep(&specs, &[1.5], &cfg, &init).is_err());
}
