use okaem::archive::{
    read_archive, write_archive, ArchiveEntry, KnowledgeArchive, Provenance, FIXED_HEADER_BYTES,
};
use okaem::gradengine::Tensor2;
use okaem::model::fitness_ranking;
use okaem::{rng, Error, FormatError};
use proptest::prelude::*;
use rand::Rng;

fn random_archive(k: usize, t: usize, n: usize, d: usize, seed: u64) -> KnowledgeArchive {
    let mut r = rng::seeded(seed);
    let entries = (0..k * t)
        .map(|_| {
            let pop = Tensor2::from_fn(n, d, |_, _| r.gen::<f64>());
            let fit = Tensor2::from_fn(n, 1, |_, _| r.gen_range(-1e3..1e3));
            let order = fitness_ranking(fit.data());
            ArchiveEntry {
                population: pop.select_rows(&order),
                fitness: fit.select_rows(&order),
            }
        })
        .collect();
    KnowledgeArchive::new(
        k,
        t,
        n,
        d,
        entries,
        Provenance {
            optimizer: "ga".into(),
            seed,
            descriptor_hash: seed.rotate_left(17),
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn write_read_write_is_byte_identical(
        k in 1usize..4, t in 1usize..5, n in 1usize..6, d in 1usize..6, seed in any::<u64>()
    ) {
        let a = random_archive(k, t, n, d, seed);
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.okar");
        let second = dir.path().join("b.okar");
        write_archive(&a, &first).unwrap();
        let back = read_archive(&first).unwrap();
        write_archive(&back, &second).unwrap();
        prop_assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
        prop_assert_eq!(back.encoded_len(), a.encoded_len());
        prop_assert_eq!(back, a);
    }

    #[test]
    fn any_single_byte_corruption_is_rejected(
        seed in any::<u64>(), pos in any::<prop::sample::Index>(), flip in 1u8..=255
    ) {
        let archive = random_archive(2, 3, 4, 3, seed);
        let bytes = archive.encode();
        let i = pos.index(bytes.len());
        let mut bad = bytes.clone();
        bad[i] ^= flip;
        let err = KnowledgeArchive::decode(&bad).unwrap_err();
        prop_assert!(matches!(err, Error::Format(_)), "byte {} gave {:?}", i, err);
        // Header fields may instead surface as a length or magic error.
        let header = FIXED_HEADER_BYTES + archive.provenance().optimizer.len();
        if i >= header {
            prop_assert!(
                matches!(err, Error::Format(FormatError::ChecksumMismatch { .. })),
                "byte {} gave {:?}", i, err
            );
        }
    }
}

#[test]
fn truncation_is_reported() {
    let bytes = random_archive(1, 2, 2, 2, 0).encode();
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(KnowledgeArchive::decode(&bytes[..cut]).is_err());
    }
}
