use retirement::{parse_phase, support};
use retirement_core::{Phase, RawSupport};

#[test]
fn phase_names() {
    assert_eq!(parse_phase("pre").unwrap(), Phase::PreRetirement);
    assert_eq!(parse_phase("PostRetirement").unwrap(), Phase::PostRetirement);
    assert!(parse_phase("retired").is_err());
}

#[test]
fn support_from_keywords() {
    assert_eq!(support(Some(1.2), None), RawSupport::level(1.2));
    assert_eq!(support(None, Some(0.5)), RawSupport::subsidy(0.5));
    let both = support(Some(1.2), Some(0.5));
    assert!(both.level.is_some() && both.subsidy.is_some());
}
