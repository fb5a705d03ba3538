#[path = "support/gradcheck.rs"]
mod gradcheck;

#[test]
fn layout_denoiser_gradients_match_finite_differences() {
    let (worst, n) = gradcheck::layout_denoiser();
    assert!(n >= 20);
    assert!(worst <= 1e-3, "worst relative error {worst}");
}

#[test]
fn control_branch_gradients_match_finite_differences() {
    let (worst, n) = gradcheck::control_branch();
    assert!(n >= 20);
    assert!(worst <= 1e-3, "worst relative error {worst}");
}
