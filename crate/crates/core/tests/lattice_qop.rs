use qop_core::lattice::{commutator_residual, rll_residual, transfer_matrix};
use qop_core::qop::{
    build_qr, draw_column_specs, numerical_rank, qr_periodicity_residual, tqr_residual, QFamily,
    SamplerOptions,
};
use qop_core::representation::{rep_matrices, ThetaBasis};
use qop_core::{ModelParams, QopError, C64};

const POINTS: [(f64, f64, u32, usize); 4] = [
    (1.0, 0.15, 1, 2),
    (1.0, 0.11, 2, 2),
    (1.0, 0.15, 1, 4),
    (0.9, 0.07, 3, 2),
];

#[test]
fn yang_baxter_and_commuting_transfer_matrices() {
    let (u, v) = (C64::new(0.31, 0.23), C64::new(-0.12, 0.41));
    for (tau_im, eta, two_l, n) in POINTS {
        let p = ModelParams::new(tau_im, eta, two_l, n).unwrap();
        let basis = ThetaBasis::new(&p, 1).unwrap();
        let rep = rep_matrices(&basis).unwrap();
        assert!(rll_residual(u, v, &rep, &p).unwrap() < 1e-9);
        let t = transfer_matrix(u, &rep, &p).unwrap();
        let t2 = transfer_matrix(v, &rep, &p).unwrap();
        assert!(commutator_residual(&t, &t2) < 1e-9);
    }
}

#[test]
fn right_q_operator_satisfies_three_term_relation_everywhere() {
    let u = C64::new(0.27, 0.35);
    for (tau_im, eta, two_l, n) in POINTS {
        let p = ModelParams::new(tau_im, eta, two_l, n).unwrap();
        let basis = ThetaBasis::new(&p, 2).unwrap();
        let rep = rep_matrices(&basis).unwrap();
        let specs = draw_column_specs(&p, 2).unwrap();
        let t = transfer_matrix(u, &rep, &p).unwrap();
        assert!(
            tqr_residual(u, &t, &specs, &basis).unwrap() < 1e-8,
            "{tau_im} {eta} {two_l} {n}"
        );
        assert!(qr_periodicity_residual(u, &specs, &basis).unwrap() < 1e-6);
    }
}

#[test]
fn invertibility_of_the_right_q_operator() {
    for (tau_im, eta, two_l, n) in POINTS {
        let p = ModelParams::new(tau_im, eta, two_l, n).unwrap();
        let basis = ThetaBasis::new(&p, 1).unwrap();
        let family = QFamily::new(&basis, 1, &SamplerOptions::default());
        let specs = draw_column_specs(&p, 1).unwrap();
        let rank = numerical_rank(
            &build_qr(C64::new(0.4, 0.3), &specs, &basis).unwrap(),
            1e-10,
        );
        match two_l {
            // spin 1 and 3/2 on two sites: the vacuum columns span a proper subspace
            2 | 3 => {
                assert!(rank < p.chain_dim(), "rank {rank}");
                assert!(
                    matches!(family, Err(QopError::RankDeficient { .. })),
                    "{family:?}"
                );
            }
            _ => {
                assert_eq!(rank, p.chain_dim());
                assert!(family.unwrap().condition < 1e8);
            }
        }
    }
}
