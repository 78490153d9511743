use std::io::Cursor;

use coldstart_al::distill::ProjectionHead;
use coldstart_al::io::{self, ClustersFile};
use coldstart_al::model::ClassifierHead;
use coldstart_al::{cluster, Dataset, EmbeddingMatrix, Error, ErrorKind, Split};
use proptest::prelude::*;

/// Bytes laid out by hand: magic, version, n and dim as little-endian u32,
/// then row-major little-endian f32.
fn hand_encoded(rows: &[[f32; 3]]) -> Vec<u8> {
    let mut b = b"ALEB".to_vec();
    b.push(1);
    b.extend((rows.len() as u32).to_le_bytes());
    b.extend(3u32.to_le_bytes());
    for r in rows {
        for v in r {
            b.extend(v.to_le_bytes());
        }
    }
    b
}

#[test]
fn exporter_layout_reads_and_clusters_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let rows = [[1.0, 0.0, 0.0], [0.9, 0.1, 0.0], [0.0, 0.0, 1.0]];
    let emb = dir.path().join("teacher.aleb");
    std::fs::write(&emb, hand_encoded(&rows)).unwrap();
    let labels = dir.path().join("labels.jsonl");
    std::fs::write(
        &labels,
        concat!(
            "{\"id\":0,\"labels\":[\"a\"],\"split\":\"train\",\"text\":\"first clause\"}\n",
            "{\"id\":1,\"labels\":[\"a\"],\"split\":\"train\",\"text\":\"a first clause\"}\n",
            "{\"id\":2,\"labels\":[],\"split\":\"test\",\"text\":\"unrelated\"}\n",
        ),
    )
    .unwrap();

    let m = io::read_embeddings(&emb).unwrap();
    assert_eq!((m.n(), m.dim()), (3, 3));
    assert_eq!(m.row(1), &[0.9, 0.1, 0.0]);
    let records = io::read_labels_for(&labels, m.n()).unwrap();
    let ds = Dataset::new(m.clone(), records).unwrap();
    assert_eq!(ds.ids_in(Split::Train), vec![0, 1]);
    let r = cluster::kmeans(&m.normalized().unwrap(), 2, 0, 100, 1e-9).unwrap();
    assert_eq!(r.assignments[0], r.assignments[1]);
    assert_ne!(r.assignments[0], r.assignments[2]);
    assert_eq!(io::encode_embeddings(&m), hand_encoded(&rows));
}

#[test]
fn embedding_errors_are_data_errors() {
    let good = hand_encoded(&[[1.0, 2.0, 3.0]]);
    let cases: Vec<(Vec<u8>, &str)> = vec![
        ({ let mut b = good.clone(); b[0] = b'X'; b }, "bad magic"),
        ({ let mut b = good.clone(); b[4] = 2; b }, "version"),
        (good[..good.len() - 1].to_vec(), "truncated"),
        (good[..7].to_vec(), "truncated"),
        ({ let mut b = good.clone(); b.push(0); b }, "trailing"),
        ({ let mut b = good.clone(); b[13..17].copy_from_slice(&f32::NAN.to_le_bytes()); b }, "non-finite"),
    ];
    for (bytes, what) in cases {
        let err = io::decode_embeddings(&bytes).unwrap_err();
        assert!(err.to_string().contains(what), "{what}: {err}");
        assert_eq!(err.kind(), ErrorKind::Data, "{err}");
    }
}

#[test]
fn label_errors() {
    let parse = |s: &str| io::parse_labels(Cursor::new(s.to_string()));
    assert!(matches!(
        parse("{\"id\":0,\"labels\":[],\"split\":\"train\"}\n{\"id\":0,\"labels\":[],\"split\":\"dev\"}\n"),
        Err(Error::DuplicateId(0))
    ));
    assert!(matches!(
        parse("{\"id\":0,\"labels\":[],\"split\":\"holdout\"}\n"),
        Err(Error::UnknownSplit { .. })
    ));
    assert!(matches!(
        parse("\n{\"id\":0,\"labels\":[],\"split\":\"train\",\"extra\":1}\n"),
        Err(Error::LabelParse { line: 2, .. })
    ));
    assert_eq!(parse("\n\n").unwrap().len(), 0);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.jsonl");
    std::fs::write(&p, "{\"id\":5,\"labels\":[],\"split\":\"train\"}\n").unwrap();
    assert!(matches!(io::read_labels_for(&p, 3), Err(Error::IdOutOfRange { id: 5, n: 3 })));
    let missing = io::read_labels(dir.path().join("nope.jsonl")).unwrap_err();
    assert_eq!(missing.kind(), ErrorKind::Data);
}

#[test]
fn heads_and_clusters_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let proj = ProjectionHead::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, -0.5, 0.0]).unwrap();
    proj.save(dir.path().join("p.alpj")).unwrap();
    assert_eq!(ProjectionHead::load(dir.path().join("p.alpj")).unwrap(), proj);
    assert!(matches!(
        ProjectionHead::decode(&io::encode_embeddings(&EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap())),
        Err(Error::BadMagic { .. })
    ));

    let head = ClassifierHead::init(4, 3, 0.25, 9).unwrap();
    head.save(dir.path().join("h.alch")).unwrap();
    let loaded = ClassifierHead::load(dir.path().join("h.alch")).unwrap();
    let rounded: Vec<f64> = head.params().iter().map(|&p| f64::from(p as f32)).collect();
    assert_eq!(loaded.params(), rounded.as_slice());
    assert_eq!((loaded.input_dim(), loaded.hidden_dim(), loaded.dropout_rate()), (4, 3, 0.25));
    assert_eq!(ClassifierHead::decode(&loaded.encode()).unwrap(), loaded);

    let file = ClustersFile { k: 2, seed: 1, inertia: 0.25, assignments: vec![0, -1, 1], medoid_ids: vec![0, 2] };
    io::write_json(dir.path().join("c/clusters.json"), &file).unwrap();
    let back: ClustersFile = io::read_json(dir.path().join("c/clusters.json")).unwrap();
    assert_eq!(back, file);
}

fn matrix() -> impl Strategy<Value = EmbeddingMatrix> {
    (1usize..20, 1usize..12).prop_flat_map(|(n, dim)| {
        prop::collection::vec(-1e6f32..1e6, n * dim)
            .prop_map(move |data| EmbeddingMatrix::new(n, dim, data).unwrap())
    })
}

proptest! {
    #[test]
    fn embeddings_round_trip_bit_exact(m in matrix()) {
        let bytes = io::encode_embeddings(&m);
        prop_assert_eq!(bytes.len(), io::HEADER_LEN + 4 * m.n() * m.dim());
        let back = io::decode_embeddings(&bytes).unwrap();
        prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!((back.n(), back.dim()), (m.n(), m.dim()));
    }

    #[test]
    fn labels_round_trip(
        cats in prop::collection::vec(prop::collection::btree_set("[a-z ]{1,8}", 0..3), 1..30),
        split_seed in 0u64..3,
    ) {
        let records: Vec<_> = cats
            .into_iter()
            .enumerate()
            .map(|(id, categories)| coldstart_al::SampleRecord {
                id,
                categories,
                split: Split::ALL[(id as u64 + split_seed) as usize % 3],
                text: (id % 2 == 0).then(|| format!("segment {id}")),
            })
            .collect();
        let bytes = io::encode_labels(&records).unwrap();
        let back = io::parse_labels(Cursor::new(bytes.clone())).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(io::encode_labels(&back).unwrap(), bytes);
    }

    #[test]
    fn json_floats_round_trip_exactly(v in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL, 1..20)) {
        let bytes = io::to_json_bytes(&v).unwrap();
        let back: Vec<f64> = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
