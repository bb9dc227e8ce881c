use geega::dsp::{band_power, psd, BandDefinition};
use geega::features::{grid_coordinates, spectrogram, topomap, TopoGrid, TopoOptions};
use geega::signal_io::{segment, synthesize, Montage, Segment, SyntheticSpec};
use proptest::prelude::*;

fn seg(data: Vec<Vec<f64>>) -> Segment {
    Segment {
        data,
        label: 0,
        subject_id: "S".into(),
        sample_rate_hz: 256.0,
    }
}

fn noise_channels(seed: u64, channels: usize, len: usize) -> Vec<Vec<f64>> {
    // small LCG keeps the test independent of generator internals
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..channels)
        .map(|_| {
            (0..len)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                })
                .collect()
        })
        .collect()
}

#[test]
fn node_values_are_reproduced_at_electrodes() {
    let m = Montage::headband4();
    let grid = TopoGrid::new(&m).unwrap();
    let nodes: Vec<_> = m.electrodes.iter().map(|e| (e.x, e.y)).collect();
    let f = geega::features::rbf_fit(&nodes, &[1.0, 2.0, 3.0, 4.0], geega::features::mean_nearest_neighbor(&nodes)).unwrap();
    for (p, want) in nodes.iter().zip([1.0, 2.0, 3.0, 4.0]) {
        assert!((f.eval(p.0, p.1) - want).abs() < 1e-6);
    }
    // the grid renderer agrees with the fitted interpolant inside the disc
    let img = grid.render(&[1.0, 2.0, 3.0, 4.0], "Alpha").unwrap();
    for (p, v) in grid_coordinates().iter().zip(&img) {
        if p.0.hypot(p.1) <= 1.0 {
            assert!((f.eval(p.0, p.1) - v).abs() < 1e-9);
        }
    }
}

#[test]
fn class_one_alpha_map_is_frontal() {
    let spec = SyntheticSpec {
        n_subjects: 1,
        duration_seconds: 10.0,
        ..SyntheticSpec::default()
    };
    let rec = synthesize(&spec, 21).unwrap().remove(1);
    let s = segment(&rec, 10.0).unwrap().remove(0);
    assert_eq!(s.label, 1);
    let bands = BandDefinition::standard();
    let alpha = &bands[2];
    // oracle: AF7/AF8 (channels 1, 2) carry more Alpha than TP9/TP10
    let ap: Vec<f64> = s
        .data
        .iter()
        .map(|x| band_power(&psd(x, 256.0, 1.0, 0.5).unwrap(), alpha).unwrap())
        .collect();
    assert!(ap[1].min(ap[2]) > ap[0].max(ap[3]));
    let grid = TopoGrid::new(&Montage::headband4()).unwrap();
    let maps = topomap(&s, &grid, &bands, &TopoOptions::default()).unwrap();
    let alpha_map = &maps[2 * 1024..3 * 1024];
    let (mut front, mut back) = (Vec::new(), Vec::new());
    for (p, v) in grid_coordinates().iter().zip(alpha_map) {
        if p.0.hypot(p.1) > 1.0 {
            continue;
        }
        if p.1 > p.0.abs() {
            front.push(*v);
        } else if p.1 < -p.0.abs() {
            back.push(*v);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&front) > mean(&back));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn topomap_is_invariant_to_joint_relabeling(seed in 0u64..1000, rot in 1usize..4) {
        let m = Montage::headband4();
        let data = noise_channels(seed, 4, 1024);
        let bands = BandDefinition::standard();
        let a = topomap(&seg(data.clone()), &TopoGrid::new(&m).unwrap(), &bands, &TopoOptions::default()).unwrap();
        let order: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
        let pm = Montage::new("p", order.iter().map(|&i| m.electrodes[i].clone()).collect()).unwrap();
        let pd: Vec<Vec<f64>> = order.iter().map(|&i| data[i].clone()).collect();
        let b = topomap(&seg(pd), &TopoGrid::new(&pm).unwrap(), &bands, &TopoOptions::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn topomap_scales_with_band_power(seed in 0u64..1000, s in 0.1f64..10.0) {
        let grid = TopoGrid::new(&Montage::bci2a22()).unwrap();
        let bands = BandDefinition::standard();
        let data = noise_channels(seed, 22, 512);
        let scaled: Vec<Vec<f64>> = data.iter().map(|c| c.iter().map(|v| v * s.sqrt()).collect()).collect();
        let a = topomap(&seg(data), &grid, &bands, &TopoOptions::default()).unwrap();
        let b = topomap(&seg(scaled), &grid, &bands, &TopoOptions::default()).unwrap();
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((s * x - y).abs() <= 1e-9 * s * peak);
        }
    }

    #[test]
    fn spectrogram_ignores_sign(seed in 0u64..1000) {
        let data = noise_channels(seed, 2, 1024);
        let flipped: Vec<Vec<f64>> = data.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
        prop_assert_eq!(spectrogram(&seg(data)).unwrap(), spectrogram(&seg(flipped)).unwrap());
    }

    #[test]
    fn outputs_are_finite(seed in 0u64..1000, amp in prop::sample::select(vec![1e-6, 1.0, 1e4])) {
        let data: Vec<Vec<f64>> = noise_channels(seed, 4, 768).into_iter().map(|c| c.into_iter().map(|v| v * amp).collect()).collect();
        let grid = TopoGrid::new(&Montage::headband4()).unwrap();
        let s = seg(data);
        let t = topomap(&s, &grid, &BandDefinition::standard(), &TopoOptions::default()).unwrap();
        prop_assert!(t.iter().all(|v| v.is_finite()));
        let log_opts = TopoOptions { log_power: true, ..TopoOptions::default() };
        prop_assert!(topomap(&s, &grid, &BandDefinition::standard(), &log_opts).unwrap().iter().all(|v| v.is_finite()));
        prop_assert!(spectrogram(&s).unwrap().iter().all(|v| v.is_finite()));
    }
}
