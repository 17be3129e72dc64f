mod common;

use common::sample_chain;
use gridtwin::ledger::{
    consensus_time, decode_chain, encode_chain, export_json, load_chain_bytes, save_chain, verify_bytes, verify_chain,
    FileVerdict, Ledger, LedgerError, NetParams, TxKind, Verdict,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_byte_mutation_is_detected(seed in 0u64..4, pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let bytes = encode_chain(sample_chain(10, seed).blocks());
        let mut tampered = bytes.clone();
        let i = pos.index(bytes.len());
        tampered[i] ^= flip;
        prop_assert!(!verify_bytes(&tampered).is_ok(), "mutation at byte {} undetected", i);
    }

    #[test]
    fn consensus_time_is_exact(n in 0usize..100_000, r in 1e-3f64..1e6, lat in 0.0f64..100.0) {
        let t = consensus_time(n, &NetParams { throughput: r, latency: lat }).unwrap();
        prop_assert_eq!(t.to_bits(), (n as f64 / r + lat).to_bits());
    }

    #[test]
    fn encoding_round_trips(seed in any::<u64>(), blocks in 1usize..8) {
        let ledger = sample_chain(blocks, seed);
        let decoded = decode_chain(&encode_chain(ledger.blocks())).unwrap();
        prop_assert_eq!(decoded.as_slice(), ledger.blocks());
    }
}

#[test]
fn payload_flip_reports_its_block() {
    let ledger = sample_chain(10, 1);
    let mut blocks = ledger.blocks().to_vec();
    blocks[1].transactions[0].payload[0] ^= 1;
    assert_eq!(verify_chain(&blocks), Verdict::BadBlock(1));
    let mut blocks = ledger.blocks().to_vec();
    blocks[7].transactions[0].payload[3] ^= 0x40;
    assert_eq!(verify_chain(&blocks), Verdict::BadBlock(7));
}

#[test]
fn swapped_blocks_break_linkage() {
    let mut blocks = sample_chain(10, 2).blocks().to_vec();
    blocks.swap(1, 2);
    assert_eq!(verify_chain(&blocks), Verdict::BadBlock(1));
}

#[test]
fn untouched_chain_verifies() {
    let ledger = sample_chain(10, 3);
    assert_eq!(ledger.verify(), Verdict::Ok);
    assert_eq!(verify_bytes(&encode_chain(ledger.blocks())), FileVerdict::Ok { blocks: 10 });
}

#[test]
fn file_round_trip_and_json_export() {
    let ledger = sample_chain(4, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.bin");
    save_chain(ledger.blocks(), &path).unwrap();
    let bytes = load_chain_bytes(&path).unwrap();
    assert!(verify_bytes(&bytes).is_ok());
    let json: serde_json::Value = serde_json::from_str(&export_json(ledger.blocks()).unwrap()).unwrap();
    assert_eq!(json.as_array().map(Vec::len).or_else(|| json["blocks"].as_array().map(Vec::len)), Some(4));
}

#[test]
fn unknown_author_is_rejected_and_chain_untouched() {
    let mut ledger = Ledger::new(["meter"]);
    ledger.submit(0, TxKind::MeterReading, "intruder", b"x".to_vec()).unwrap();
    let err = ledger
        .commit(&NetParams {
            throughput: 1.0,
            latency: 0.0,
        })
        .unwrap_err();
    assert!(matches!(err, LedgerError::Unauthorized(ref a) if a == "intruder"));
    assert_eq!(ledger.len(), 1);
}
