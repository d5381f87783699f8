use nucseg::volume::{
    apply_roi, read_typed, read_volume, write_volume, ElemKind, LabelVolume, RoiMask, Shape, Volume, VoxelSize,
};
use nucseg::Error;
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Shape> {
    (1usize..6, 1usize..6, 1usize..6).prop_map(|(z, y, x)| Shape::new(z, y, x))
}

fn labels_strategy() -> impl Strategy<Value = LabelVolume> {
    shape_strategy().prop_flat_map(|s| {
        proptest::collection::vec(0u32..5, s.len())
            .prop_map(move |d| LabelVolume::new(s, VoxelSize([0.48, 0.51, 0.51]), d).unwrap())
    })
}

proptest! {
    #[test]
    fn label_round_trip(v in labels_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        write_volume(&v, &path).unwrap();
        let back: LabelVolume = read_typed(&path).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn float_round_trip(data in proptest::collection::vec(-1.0f32..=1.0, 24)) {
        let v = Volume::new(Shape::new(2, 3, 4), VoxelSize::UNIT, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        write_volume(&v, &path).unwrap();
        let any = read_volume(&path).unwrap();
        prop_assert_eq!(any.kind(), ElemKind::F32);
        let back: Volume<f32> = any.into_typed().unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn crop_composes(v in labels_strategy(), a in any::<[u8; 12]>()) {
        let s = v.shape().0;
        let pick = |n: usize, k: u8| k as usize % n;
        // outer crop
        let o1: [usize; 3] = std::array::from_fn(|i| pick(s[i], a[i]));
        let s1: [usize; 3] = std::array::from_fn(|i| 1 + pick(s[i] - o1[i], a[3 + i]));
        // inner crop, relative to the outer one
        let o2: [usize; 3] = std::array::from_fn(|i| pick(s1[i], a[6 + i]));
        let s2: [usize; 3] = std::array::from_fn(|i| 1 + pick(s1[i] - o2[i], a[9 + i]));

        let nested = v.crop(o1, s1).unwrap().crop(o2, s2).unwrap();
        let direct = v.crop(std::array::from_fn(|i| o1[i] + o2[i]), s2).unwrap();
        prop_assert_eq!(nested, direct);
    }

    #[test]
    fn roi_is_idempotent(v in labels_strategy(), seed in any::<u64>()) {
        let roi_data: Vec<u8> = (0..v.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let roi = RoiMask::new(v.shape(), v.voxel_size(), roi_data).unwrap();
        let once = apply_roi(&v, &roi).unwrap();
        let twice = apply_roi(&once, &roi).unwrap();
        prop_assert_eq!(&once, &twice);
        for ((&m, &l), &r) in once.data().iter().zip(v.data()).zip(roi.data()) {
            prop_assert_eq!(m, if r == 0 { 0 } else { l });
        }
    }
}

#[test]
fn full_crop_is_identity() {
    let v = LabelVolume::from_fn(Shape::new(3, 4, 5), VoxelSize::UNIT, |z, y, x| (z * 20 + y * 5 + x) as u32).unwrap();
    assert_eq!(v.crop([0, 0, 0], [3, 4, 5]).unwrap(), v);
    assert!(matches!(v.crop([1, 0, 0], [3, 4, 5]), Err(Error::OutOfBounds { .. })));
    assert!(v.crop([0, 0, 0], [0, 4, 5]).is_err());
}

#[test]
fn header_is_canonical() {
    let v = LabelVolume::filled(Shape::new(1, 2, 3), VoxelSize::NUCMM_Z, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.json");
    write_volume(&v, &path).unwrap();
    let header: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(header["shape"], serde_json::json!([1, 2, 3]));
    assert_eq!(header["elem"], "uint32");
    assert_eq!(header["order"], "C");
    assert_eq!(header["endianness"], "little");
    assert_eq!(header["data_file"], "labels.raw");
    let raw = std::fs::read(dir.path().join("labels.raw")).unwrap();
    assert_eq!(raw.len(), 6 * 4);
    assert_eq!(&raw[..4], &7u32.to_le_bytes());
}

#[test]
fn read_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert!(matches!(read_volume(&missing), Err(Error::MissingFile(_))));

    let v = LabelVolume::filled(Shape::new(2, 2, 2), VoxelSize::UNIT, 1).unwrap();
    let path = dir.path().join("v.json");
    write_volume(&v, &path).unwrap();
    std::fs::write(dir.path().join("v.raw"), [0u8; 5]).unwrap();
    assert!(matches!(read_volume(&path), Err(Error::SizeMismatch { .. })));

    write_volume(&v, &path).unwrap();
    assert!(matches!(read_typed::<f32>(&path), Err(Error::ElemMismatch { .. })));

    std::fs::write(&path, "{\"shape\": [2, 2]}").unwrap();
    assert!(matches!(read_volume(&path), Err(Error::MalformedHeader { .. })));
}
