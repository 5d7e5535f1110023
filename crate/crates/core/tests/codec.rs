use std::net::IpAddr;

use latbench_core::codec::{
    decode_query, decode_response, encode_query, encode_response, CodecError, QuerySpec, QueryType,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    id: u16,
    rcode: u8,
    truncated: bool,
    answer_count: u16,
    addresses: Vec<IpAddr>,
    wire_bytes: usize,
    qname: String,
    qtype: u16,
}

#[test]
fn captured_response_decodes_exactly() {
    let wire = include_bytes!("fixtures/example_com_a.bin");
    let expected: Expected = serde_json::from_str(include_str!("fixtures/example_com_a.json")).unwrap();
    let r = decode_response(wire, expected.id).unwrap();
    assert_eq!(r.id, expected.id);
    assert_eq!(r.rcode, expected.rcode);
    assert_eq!(r.truncated, expected.truncated);
    assert_eq!(r.answer_count, expected.answer_count);
    assert_eq!(r.addresses, expected.addresses);
    assert_eq!(r.wire_bytes, expected.wire_bytes);
    let q = r.question.unwrap();
    assert_eq!(q.qname, expected.qname);
    assert_eq!(q.qtype, expected.qtype);

    assert_eq!(
        decode_response(wire, expected.id ^ 1),
        Err(CodecError::IdMismatch {
            expected: expected.id ^ 1,
            found: expected.id
        })
    );
    for cut in 0..wire.len() {
        assert!(
            decode_response(&wire[..cut], expected.id).is_err(),
            "prefix {cut} decoded"
        );
    }
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789-";
    let labels = rng.random_range(1..=5);
    (0..labels)
        .map(|_| {
            let len = rng.random_range(1..=20);
            (0..len)
                .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(".")
}

#[test]
fn thousand_names_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000u16 {
        let qtype = if i % 2 == 0 { QueryType::A } else { QueryType::Aaaa };
        let spec = QuerySpec::new(random_name(&mut rng), qtype, i);
        let wire = encode_query(&spec).unwrap();
        assert_eq!(decode_query(&wire).unwrap(), spec);
        let addr: IpAddr = match qtype {
            QueryType::A => "192.0.2.1".parse().unwrap(),
            QueryType::Aaaa => "2001:db8::1".parse().unwrap(),
        };
        let resp = encode_response(&spec, 0, &[addr], None).unwrap();
        let summary = decode_response(&resp, i).unwrap();
        assert_eq!(summary.addresses, vec![addr]);
        assert_eq!(summary.question.unwrap().qname, spec.qname);
    }
}

#[test]
fn random_datagrams_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut buf = [0u8; 600];
    for _ in 0..100_000 {
        let len = rng.random_range(0..buf.len());
        rng.fill(&mut buf[..len]);
        let _ = decode_response(&buf[..len], rng.random());
        let _ = decode_query(&buf[..len]);
    }
}
