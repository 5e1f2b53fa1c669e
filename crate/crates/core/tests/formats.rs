mod common;

use common::*;
use lamp_core::dataset::{Dataset, Record};
use lamp_core::eval::{build_grid_baseline, build_node_baseline, GridMapBaseline, NodeMapBaseline};
use lamp_core::field::{FieldArchitecture, FieldModel, PositionBounds, PositionalEncodingSpec};
use lamp_core::geometry::Pose;
use lamp_core::graph::{build_graph, TopoGraph};
use lamp_core::query::{query_from_bytes, query_to_bytes};
use lamp_core::world::{gen_dataset, gen_world, Extent, ObservationModel, WorldSpec};
use proptest::prelude::*;
use rand::Rng;

fn dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let records = (0..n)
        .map(|_| Record {
            pose: random_pose(&mut r),
            z: random_unit(&mut r, d),
        })
        .collect();
    Dataset::new(d, records).unwrap()
}

fn planar_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let records = (0..n)
        .map(|_| Record {
            pose: Pose::from_yaw(
                [r.random_range(0.0..30.0), r.random_range(0.0..30.0), 1.5],
                r.random_range(-3.0..3.0),
            ),
            z: random_unit(&mut r, d),
        })
        .collect();
    Dataset::new(d, records).unwrap()
}

/// Every strict prefix must be rejected and every single-byte change must
/// decode or fail without panicking.
fn check_corruption<T>(
    bytes: &[u8],
    decode: impl Fn(&[u8]) -> lamp_core::Result<T>,
    flips: &[(usize, u8)],
) {
    for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            decode(&bytes[..cut]).is_err(),
            "prefix of {cut} bytes decoded"
        );
    }
    for &(at, mask) in flips {
        let mut b = bytes.to_vec();
        let i = at % b.len();
        b[i] ^= mask.max(1);
        let _ = decode(&b);
    }
}

/// Training on a reloaded dataset must match training on the generated one.
#[test]
fn generated_dataset_and_graph_equal_their_decoded_files() {
    let world = gen_world(3, Extent::square(50.0).unwrap(), 5, 24, 0.5).unwrap();
    let data = gen_dataset(&world, &ObservationModel::default(), 2_000, 4).unwrap();
    assert_eq!(Dataset::from_bytes(&data.to_bytes()).unwrap(), data);
    let graph = build_graph(data.poses(), 2.0, 4.5).unwrap();
    assert_eq!(
        TopoGraph::from_json(&graph.to_json().unwrap()).unwrap(),
        graph
    );
}

/// Every checked-in fuzz seed is a valid file for its target.
#[test]
fn fuzz_corpus_seeds_decode() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let decoders: [(&str, fn(&[u8]) -> bool); 8] = [
        ("dataset_decode", |b| Dataset::from_bytes(b).is_ok()),
        ("model_decode", |b| FieldModel::from_bytes(b).is_ok()),
        ("query_decode", |b| query_from_bytes(b).is_ok()),
        ("grid_decode", |b| GridMapBaseline::from_bytes(b).is_ok()),
        ("node_decode", |b| NodeMapBaseline::from_bytes(b).is_ok()),
        ("world_json", |b| {
            std::str::from_utf8(b).is_ok_and(|s| WorldSpec::from_json(s).is_ok())
        }),
        ("graph_json", |b| {
            std::str::from_utf8(b).is_ok_and(|s| TopoGraph::from_json(s).is_ok())
        }),
        ("report_json", |b| {
            std::str::from_utf8(b).is_ok_and(|s| lamp_core::eval::EvalReport::from_json(s).is_ok())
        }),
    ];
    for (target, decode) in decoders {
        let entries: Vec<_> = std::fs::read_dir(root.join(target))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        assert!(!entries.is_empty(), "{target} has no seeds");
        for path in entries {
            assert!(decode(&std::fs::read(&path).unwrap()), "{}", path.display());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dataset_bytes_round_trip(n in 1usize..40, d in 2usize..40, seed in any::<u64>(), flips in prop::collection::vec((any::<usize>(), any::<u8>()), 8)) {
        let bytes = dataset(n, d, seed).to_bytes();
        let back = Dataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        prop_assert_eq!(back.byte_len(), bytes.len());
        prop_assert_eq!(Dataset::from_bytes(&bytes).unwrap(), back);
        check_corruption(&bytes, Dataset::from_bytes, &flips);
    }

    #[test]
    fn model_bytes_round_trip(d in 2usize..24, width in 1usize..24, depth in 1usize..4, l_pos in 0u32..5, seed in any::<u64>(), flips in prop::collection::vec((any::<usize>(), any::<u8>()), 8)) {
        let arch = FieldArchitecture {
            encoding: PositionalEncodingSpec { l_pos, l_quat: 1, include_identity: true },
            hidden: vec![width; depth],
            skip: (depth > 1).then_some(1),
        };
        let bounds = PositionBounds::new([-1.0, -2.0, 0.0], [3.0, 4.0, 2.5]).unwrap();
        let m = FieldModel::new(&arch, bounds, d, seed).unwrap();
        let bytes = m.to_bytes();
        prop_assert_eq!(bytes.len(), m.byte_len());
        let back = FieldModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        let x = Pose::from_yaw([0.5, 0.5, 1.0], 0.3);
        prop_assert_eq!(format!("{:?}", back.forward(&x)), format!("{:?}", m.forward(&x)));
        check_corruption(&bytes, FieldModel::from_bytes, &flips);
    }

    #[test]
    fn query_bytes_round_trip(d in 2usize..64, seed in any::<u64>(), flips in prop::collection::vec((any::<usize>(), any::<u8>()), 8)) {
        let z = random_unit(&mut rng(seed), d);
        let bytes = query_to_bytes(&z);
        let back = query_from_bytes(&bytes).unwrap();
        prop_assert_eq!(query_to_bytes(&back), bytes.clone());
        check_corruption(&bytes, query_from_bytes, &flips);
    }

    #[test]
    fn world_json_round_trip(n in 1usize..8, d in 12usize..24, seed in any::<u64>()) {
        let w = gen_world(seed, Extent::square(60.0).unwrap(), n, d, 0.5).unwrap();
        let json = w.to_json().unwrap();
        let back = WorldSpec::from_json(&json).unwrap();
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(back.content_hash(), w.content_hash());
        prop_assert!(WorldSpec::from_json(&json[..json.len() / 2]).is_err());
    }

    #[test]
    fn graph_json_round_trip(n in 1usize..60, seed in any::<u64>()) {
        let g = random_connected_graph(n, seed);
        let json = g.to_json().unwrap();
        let back = TopoGraph::from_json(&json).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.serialized_len(), g.serialized_len());
        prop_assert!(TopoGraph::from_json(&json[..json.len() / 2]).is_err());
    }

    #[test]
    fn grid_and_node_bytes_round_trip(n in 1usize..200, d in 2usize..16, cell in 0.5f64..8.0, seed in any::<u64>(), flips in prop::collection::vec((any::<usize>(), any::<u8>()), 8)) {
        let data = planar_dataset(n, d, seed);
        let grid = build_grid_baseline(&data, cell).unwrap();
        let bytes = grid.to_bytes();
        prop_assert_eq!(bytes.len(), grid.byte_len());
        let back = GridMapBaseline::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        check_corruption(&bytes, GridMapBaseline::from_bytes, &flips);

        let graph = build_graph(data.poses(), cell, 2.0 * cell).unwrap();
        let nodes = build_node_baseline(&graph, &data).unwrap();
        let bytes = nodes.to_bytes();
        prop_assert_eq!(bytes.len(), nodes.byte_len());
        let back = NodeMapBaseline::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        check_corruption(&bytes, NodeMapBaseline::from_bytes, &flips);
    }

    #[test]
    fn decoders_reject_arbitrary_bytes(raw in prop::collection::vec(any::<u8>(), 0..256)) {
        prop_assert!(Dataset::from_bytes(&raw).is_err());
        prop_assert!(FieldModel::from_bytes(&raw).is_err());
        prop_assert!(GridMapBaseline::from_bytes(&raw).is_err());
        prop_assert!(NodeMapBaseline::from_bytes(&raw).is_err());
        prop_assert!(query_from_bytes(&raw).is_err());
        let text = String::from_utf8_lossy(&raw);
        prop_assert!(WorldSpec::from_json(&text).is_err());
        prop_assert!(TopoGraph::from_json(&text).is_err());
    }
}
