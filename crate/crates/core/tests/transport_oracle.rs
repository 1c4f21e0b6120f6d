mod common;

use common::fixtures::{random_measure, rng};
use common::lp_oracle::{transport_by_bases, transport_lp};
use hc_core::transport::{dual_gap, transport_distance};

#[test]
fn simplex_matches_basis_enumeration() {
    let mut r = rng(11);
    for _ in 0..60 {
        let mu = random_measure(&mut r, 2, 3, 3);
        let nu = random_measure(&mut r, 2, 3, 3);
        let (xs, a, ys, b) = (mu.support(), mu.masses(), nu.support(), nu.masses());
        let lp = transport_lp(&xs, &a, &ys, &b);
        let bases = transport_by_bases(&xs, &a, &ys, &b);
        assert!((lp - bases).abs() < 1e-10, "{lp} vs {bases}");
    }
}

#[test]
fn flow_solver_matches_lp_oracle() {
    let mut r = rng(12);
    for _ in 0..60 {
        let mu = random_measure(&mut r, 3, 3, 12);
        let nu = random_measure(&mut r, 3, 3, 12);
        let plan = transport_distance(&mu, &nu).unwrap();
        let lp = transport_lp(&mu.support(), &mu.masses(), &nu.support(), &nu.masses());
        assert!((plan.cost - lp).abs() < 1e-10, "{} vs {lp}", plan.cost);
        assert!(plan.marginal_error() < 1e-10);
        let (cert, gap) = dual_gap(&plan).unwrap();
        assert!(gap.abs() < 1e-8);
        assert!(cert.lipschitz_violation() < 1e-10);
    }
}
