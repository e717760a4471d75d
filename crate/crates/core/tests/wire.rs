mod common;

use proptest::prelude::*;

use proxytrace::transport::wire::{to_f16, PathRecord};
use proxytrace::transport::WireFormat;

#[test]
fn golden_files_match() {
    common::check_golden_wire().unwrap();
}

#[test]
fn narrow_records_are_36_bytes() {
    let records = common::wire_fixture();
    assert_eq!(WireFormat::Mask8.encode(&records).len(), 36 * records.len());
    assert_eq!(WireFormat::Replay8.encode(&records).len(), 36 * records.len());
}

#[test]
fn half_conversion_rounds_to_even_and_flushes() {
    // 1 + 2^-11 is halfway between 1 and the next f16; ties go to the even one
    assert_eq!(to_f16(1.0 + 1.0 / 2048.0).to_bits(), 0x3c00);
    assert_eq!(to_f16(1.0 + 3.0 / 2048.0).to_bits(), 0x3c02);
    assert_eq!(to_f16(4e-5).to_bits(), 0x0000);
    assert_eq!(to_f16(-4e-5).to_bits(), 0x8000);
    assert_eq!(to_f16(6.103515625e-5).to_bits(), 0x0400);
    assert!(to_f16(1e6).is_infinite());
}

fn record() -> impl Strategy<Value = PathRecord> {
    (
        any::<[u32; 3]>(),
        any::<[u16; 3]>(),
        any::<[u16; 3]>(),
        any::<u32>(),
        any::<u32>(),
        any::<u64>(),
        any::<u8>(),
        any::<u64>(),
    )
        .prop_map(|(o, d, t, tm, pf, vis, orig, hit)| PathRecord {
            origin: o.map(f32::from_bits),
            dir: d.map(half::f16::from_bits),
            throughput: t.map(half::f16::from_bits),
            t_max: f32::from_bits(tm),
            pixel_flags: pf,
            visited: proxytrace::proxy::RankMask(vis),
            origin_rank: orig,
            hit_owners: proxytrace::proxy::RankMask(hit),
        })
}

proptest! {
    #[test]
    fn decode_inverts_encode(records in proptest::collection::vec(record(), 0..20), which in 0usize..4) {
        let fmt = common::FORMATS[which].0;
        let bytes = fmt.encode(&records);
        prop_assert_eq!(bytes.len(), records.len() * fmt.record_size());
        let back = fmt.decode(&bytes).unwrap();
        let expect: Vec<_> = records.iter().map(|r| fmt.canonical(r)).collect();
        prop_assert_eq!(back, expect);
    }

    #[test]
    fn truncated_payloads_are_rejected(n in 1usize..4, cut in 1usize..36, which in 0usize..4) {
        let fmt = common::FORMATS[which].0;
        let records = common::wire_fixture();
        let bytes = fmt.encode(&records[..n]);
        prop_assert!(fmt.decode(&bytes[..bytes.len() - cut]).is_err());
    }
}
