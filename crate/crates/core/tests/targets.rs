mod common;

use common::{brute_squared_edt, mask_from};
use nucseg::edt::squared_edt;
use nucseg::targets::{contour_map, make_targets, signed_distance, ContourParams, DistanceParams};
use nucseg::volume::{LabelVolume, Shape, VoxelSize};
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = (Shape, Vec<bool>)> {
    (1..=max, 1..=max, 1..=max, 0.02f64..0.9).prop_flat_map(|(z, y, x, p)| {
        let s = Shape::new(z, y, x);
        proptest::collection::vec(proptest::bool::weighted(p), s.len()).prop_map(move |b| (s, b))
    })
}

fn labels_strategy(max: usize) -> impl Strategy<Value = LabelVolume> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(z, y, x)| {
        let s = Shape::new(z, y, x);
        proptest::collection::vec(prop_oneof![3 => Just(0u32), 1 => 1u32..4], s.len())
            .prop_map(move |d| LabelVolume::new(s, VoxelSize::UNIT, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edt_matches_brute_force((shape, bits) in mask_strategy(16)) {
        prop_assume!(bits.iter().any(|&b| b));
        let got = squared_edt(&mask_from(shape, &bits), VoxelSize::UNIT, false).unwrap();
        let want = brute_squared_edt(shape, &bits, [1.0; 3]);
        for (g, w) in got.data().iter().zip(&want) {
            prop_assert_eq!(*g as f64, *w);
        }
    }

    #[test]
    fn anisotropic_edt_matches_brute_force((shape, bits) in mask_strategy(8)) {
        prop_assume!(bits.iter().any(|&b| b));
        let vs = VoxelSize([0.72, 0.51, 0.48]);
        let got = squared_edt(&mask_from(shape, &bits), vs, true).unwrap();
        let want = brute_squared_edt(shape, &bits, vs.0);
        for (g, w) in got.data().iter().zip(&want) {
            prop_assert!((*g as f64 - w).abs() <= 1e-5 * w.max(1.0));
        }
    }

    #[test]
    fn signed_distance_sign_follows_labels(labels in labels_strategy(8)) {
        let sd = signed_distance(&labels, DistanceParams::default(), VoxelSize::UNIT, false).unwrap();
        for (&l, &d) in labels.data().iter().zip(sd.data()) {
            if l != 0 {
                prop_assert!(d > 0.0);
            } else {
                prop_assert!(d < 0.0);
            }
            prop_assert!((-1.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn signed_distance_scales_inversely_with_alpha(labels in labels_strategy(8), k in 1.0f64..4.0) {
        let fg = labels.data().iter().any(|&l| l != 0);
        let bg = labels.data().iter().any(|&l| l == 0);
        prop_assume!(fg && bg);
        let p = DistanceParams { alpha: 2.0, beta: 3.0, clamp: false };
        let q = DistanceParams { alpha: 2.0 * k, beta: 3.0 * k, clamp: false };
        let a = signed_distance(&labels, p, VoxelSize::UNIT, false).unwrap();
        let b = signed_distance(&labels, q, VoxelSize::UNIT, false).unwrap();
        for (&x, &y) in a.data().iter().zip(b.data()) {
            prop_assert!((x as f64 - y as f64 * k).abs() < 1e-5 * (x.abs() as f64).max(1.0));
        }
    }

    #[test]
    fn signed_distance_is_monotone_in_depth(labels in labels_strategy(8)) {
        // foreground value grows with distance to background, background
        // value falls with distance to foreground
        let sd = signed_distance(&labels, DistanceParams::default(), VoxelSize::UNIT, false);
        prop_assume!(sd.is_ok());
        let sd = sd.unwrap();
        let shape = labels.shape();
        let fg: Vec<bool> = labels.data().iter().map(|&l| l != 0).collect();
        let bg: Vec<bool> = fg.iter().map(|f| !f).collect();
        let to_bg = brute_squared_edt(shape, &bg, [1.0; 3]);
        let to_fg = brute_squared_edt(shape, &fg, [1.0; 3]);
        for i in 0..shape.len() {
            for j in 0..shape.len() {
                if fg[i] && fg[j] && to_bg[i] < to_bg[j] {
                    prop_assert!(sd.data()[i] <= sd.data()[j]);
                }
                if bg[i] && bg[j] && to_fg[i] < to_fg[j] {
                    prop_assert!(sd.data()[i] >= sd.data()[j]);
                }
            }
        }
    }

    #[test]
    fn contour_is_subset_of_foreground(labels in labels_strategy(8), t in 1usize..3) {
        let ct = contour_map(&labels, ContourParams { thickness: t, include_background_boundary: true }).unwrap();
        let inner = contour_map(&labels, ContourParams { thickness: t, include_background_boundary: false }).unwrap();
        for ((&l, &c), &ci) in labels.data().iter().zip(ct.data()).zip(inner.data()) {
            if l == 0 {
                prop_assert_eq!(c, 0.0);
            }
            prop_assert!(ci <= c);
        }
    }
}

#[test]
fn single_voxel_spot_values() {
    let labels = LabelVolume::from_fn(Shape::cube(5), VoxelSize::UNIT, |z, y, x| {
        (z == 2 && y == 2 && x == 2) as u32
    })
    .unwrap();
    let sd = signed_distance(&labels, DistanceParams::default(), VoxelSize::UNIT, false).unwrap();
    assert!((sd.get(2, 2, 2) - 0.125).abs() < 1e-6);
    assert!((sd.get(2, 2, 3) + 0.02).abs() < 1e-6);
    assert!((sd.get(1, 1, 1) as f64 + 3f64.sqrt() / 50.0).abs() < 1e-6);
}

#[test]
fn anisotropy_changes_units() {
    let labels = LabelVolume::from_fn(Shape::new(3, 3, 3), VoxelSize([2.0, 1.0, 1.0]), |z, y, x| {
        (z == 1 && y == 1 && x == 1) as u32
    })
    .unwrap();
    let vs = labels.voxel_size();
    let t = make_targets(&labels, DistanceParams::default(), ContourParams::default(), vs, true).unwrap();
    // nearest background is one voxel away in y/x: 1 µm
    assert!((t.distance.get(1, 1, 1) - 1.0 / 8.0).abs() < 1e-6);
    // z neighbour is 2 µm from the foreground voxel
    assert!((t.distance.get(0, 1, 1) + 2.0 / 50.0).abs() < 1e-6);
    assert!((t.distance.get(1, 1, 0) + 1.0 / 50.0).abs() < 1e-6);
}
