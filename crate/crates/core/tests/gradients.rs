mod support;

#[test]
fn gradient_suite_within_tolerance() {
    support::checks::gradients(7).unwrap();
}
