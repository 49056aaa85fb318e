mod common;

use common::addr;
use common::faults::{catalog, detect, known_good, TARGET};
use findel_core::marketplace::Marketplace;
use findel_core::oracle::{check_state, check_trace, ViolationKind};

#[test]
fn baseline_is_clean() {
    let t = known_good();
    assert_eq!(check_trace(&t), vec![]);
    let s = &t.steps[TARGET].state;
    assert_eq!(s.contracts.len(), 2);
    assert_eq!(s.ledger.len(), 3);
}

#[test]
fn every_corruption_is_detected() {
    let faults = catalog();
    assert!(faults.len() >= 6);
    let missed: Vec<String> = faults.iter().filter_map(|f| detect(f).err()).collect();
    assert!(missed.is_empty(), "{missed:#?}");
}

#[test]
fn corruptions_are_distinct() {
    let t = known_good();
    let clean = &t.steps[TARGET].state;
    let mut seen: Vec<Marketplace> = Vec::new();
    for f in catalog() {
        let mut s = clean.clone();
        (f.apply)(&mut s);
        assert_ne!(&s, clean, "{} changed nothing", f.name);
        assert!(!seen.contains(&s), "{} duplicates another fault", f.name);
        seen.push(s);
    }
}

#[test]
fn check_state_on_hand_built_duplicates() {
    let (m, d) = Marketplace::default().register(findel_core::Primitive::Zero);
    let (mut m, _) = m.issue(d, &addr("alice"), &addr("bob")).unwrap();
    m.contracts.push(m.contracts[0].clone());
    let kinds: Vec<_> = check_state(&m).into_iter().map(|v| v.kind).collect();
    assert_eq!(kinds, vec![ViolationKind::DuplicateId]);
}
