mod common;

#[test]
fn fuzzed_surgery_keeps_invariants() {
    let s = common::surgery_fuzz(500, 42).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(s.fingerprint.len(), 500);
    // every branch of the dispatch is reached
    assert!(
        s.neckpinch > 0 && s.collapse > 0 && s.conical > 0,
        "neckpinch {} collapse {} conical {}",
        s.neckpinch,
        s.collapse,
        s.conical
    );
}

#[test]
fn fuzzed_surgery_is_reproducible() {
    let a = common::surgery_fuzz(100, 7).unwrap();
    let b = common::surgery_fuzz(100, 7).unwrap();
    assert_eq!(a, b);
}
