mod common;

use common::{random_gp_instance, rng, tally_expanders};
use etso::Candidates;

#[test]
fn gp_posterior_matches_dense_solve() {
    let mut r = rng(7);
    for k in 0..200 {
        let inst = random_gp_instance(&mut r);
        let (mean_err, var_err) = inst.max_error();
        assert!(mean_err <= 1e-8, "instance {k}: mean error {mean_err:e}");
        assert!(var_err <= 1e-8, "instance {k}: variance error {var_err:e}");
    }
}

#[test]
fn all_safe_candidates_match_brute_force() {
    let t = tally_expanders(11, 100, Candidates::AllSafe);
    assert_eq!((t.missed, t.spurious), (0, 0), "{t:?}");
    assert!(t.brute_force_total > 0);
}

#[test]
fn boundary_candidates_never_add_expanders() {
    // Restricting candidates can only drop expanders, never invent them.
    let t = tally_expanders(11, 100, Candidates::Boundary);
    assert_eq!(t.spurious, 0, "{t:?}");
}
