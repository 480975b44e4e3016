mod common;

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use uvtc_core::frame::{BoolMap, Frame, VideoVolume};
use uvtc_core::media_io::{
    decode_flo, decode_pfm, decode_tensor4, encode_flo, encode_pfm, encode_tensor4, DepthMap,
    FlowDirection, FlowField, Tensor4,
};
use uvtc_core::noise::{ain_align, plane_stats};
use uvtc_core::uvt::{build_keys, gather, propagate_flow_ids, scatter, KeyConfig};

fn video_strategy() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>)> {
    (2usize..5, 2usize..7, 2usize..7).prop_flat_map(|(t, h, w)| {
        (
            Just(t),
            Just(h),
            Just(w),
            prop::collection::vec(0.0f64..1.0, t * h * w * 3),
        )
    })
}

fn make_video(t: usize, h: usize, w: usize, data: &[f64]) -> VideoVolume {
    let n = h * w * 3;
    VideoVolume::new(
        (0..t)
            .map(|k| Frame::new(h, w, data[k * n..(k + 1) * n].to_vec()).unwrap())
            .collect(),
    )
    .unwrap()
}

fn flows_and_masks(t: usize, h: usize, w: usize, seed: u64, p_true: f64) -> (Vec<FlowField>, Vec<BoolMap>) {
    use rand::Rng;
    let mut r = common::rng(seed);
    let flows = (0..t - 1)
        .map(|k| common::random_flow(h, w, 2.0, FlowDirection::Forward, k, &mut r))
        .collect();
    let masks = (0..t - 1)
        .map(|_| BoolMap::new(h, w, (0..h * w).map(|_| r.gen_bool(p_true)).collect()).unwrap())
        .collect();
    (flows, masks)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn flo_round_trip(h in 8usize..16, w in 8usize..16, seed in any::<u64>()) {
        let f = common::random_flow(h, w, 7.5, FlowDirection::Backward, 3, &mut common::rng(seed));
        let back = decode_flo(&encode_flo(&f), FlowDirection::Backward, 3).unwrap();
        prop_assert_eq!(back.data(), f.data());
        prop_assert_eq!(back.dims(), (h, w));
    }

    #[test]
    fn pfm_round_trip(h in 1usize..9, w in 1usize..9, vals in prop::collection::vec(-1e4f32..1e4, 64)) {
        let values: Vec<f32> = (0..h * w).map(|i| vals[i % vals.len()]).collect();
        let d = DepthMap::new(h, w, values).unwrap();
        let back = decode_pfm(&encode_pfm(&d)).unwrap();
        prop_assert_eq!(back.values(), d.values());
    }

    #[test]
    fn tensor_round_trip(shape in (1usize..3, 1usize..4, 1usize..5, 1usize..5), seed in any::<u32>()) {
        let s = [shape.0, shape.1, shape.2, shape.3];
        let t = Tensor4::from_fn(s, |[a, b, c, d]| {
            ((a * 7 + b * 5 + c * 3 + d) as u32 ^ seed) as f32 * 1e-3 - 2.0
        }).unwrap();
        let back = decode_tensor4(&encode_tensor4(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn gather_of_scatter_is_stable((t, h, w, data) in video_strategy(), seed in any::<u64>()) {
        let video = make_video(t, h, w, &data);
        let (flows, masks) = flows_and_masks(t, h, w, seed, 0.7);
        let cfg = KeyConfig { use_flow: true, use_rgb: false, voxel_size: None };
        let keys = Arc::new(build_keys(&video, &flows, &masks, None, &cfg).unwrap());
        let uvt = gather(&video, keys.clone()).unwrap();
        let again = gather(&scatter(&uvt), keys).unwrap();
        for (a, b) in uvt.values().iter().zip(again.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scattered_value_is_member_mean((t, h, w, data) in video_strategy(), seed in any::<u64>()) {
        let video = make_video(t, h, w, &data);
        let (flows, masks) = flows_and_masks(t, h, w, seed, 0.8);
        let cfg = KeyConfig { use_flow: true, use_rgb: false, voxel_size: None };
        let keys = Arc::new(build_keys(&video, &flows, &masks, None, &cfg).unwrap());
        let out = scatter(&gather(&video, keys.clone()).unwrap());
        let hw = h * w;
        let index = keys.index_map();
        for n in 0..keys.len() {
            let members: Vec<usize> = (0..t * hw).filter(|&g| index[g] as usize == n).collect();
            prop_assert!(!members.is_empty());
            for c in 0..3 {
                let mean = members.iter().map(|&g| video.frame(g / hw).data()[(g % hw) * 3 + c]).sum::<f64>()
                    / members.len() as f64;
                for &g in &members {
                    prop_assert!((out.frame(g / hw).data()[(g % hw) * 3 + c] - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flow_id_count_bounds(t in 2usize..6, h in 3usize..8, w in 3usize..8, seed in any::<u64>(), p in 0.0f64..1.0) {
        let (flows, masks) = flows_and_masks(t, h, w, seed, p);
        let ids = propagate_flow_ids(&flows, &masks).unwrap();
        let hw = h * w;
        prop_assert_eq!(ids.len(), t * hw);
        let first: Vec<u64> = ids[..hw].to_vec();
        prop_assert_eq!(first, (0..hw as u64).collect::<Vec<_>>());
        let distinct: HashSet<u64> = ids.iter().copied().collect();
        prop_assert!(distinct.len() >= hw && distinct.len() <= t * hw);
        // IDs within a frame never collide
        for k in 0..t {
            let frame: HashSet<u64> = ids[k * hw..(k + 1) * hw].iter().copied().collect();
            prop_assert_eq!(frame.len(), hw);
        }
    }

    #[test]
    fn ain_is_idempotent(seed in any::<u64>(), scale in 0.1f32..5.0, shift in -3.0f32..3.0) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let shape = [2, 3, 6, 7];
        let xy = Tensor4::from_fn(shape, |_| r.gen_range(-1.0f32..1.0) * scale + shift).unwrap();
        let yt = Tensor4::from_fn(shape, |_| r.gen_range(-2.0f32..2.0)).unwrap();
        let once = ain_align(&yt, &xy).unwrap();
        let twice = ain_align(&once, &xy).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() < 1e-4 * scale.max(1.0));
        }
        for f in 0..2 {
            for c in 0..3 {
                let (m0, s0) = plane_stats(xy.plane(f, c));
                let (m1, s1) = plane_stats(once.plane(f, c));
                prop_assert!((m0 - m1).abs() < 1e-4 * scale as f64);
                prop_assert!((s0 - s1).abs() < 1e-4 * scale as f64);
            }
        }
    }
}
