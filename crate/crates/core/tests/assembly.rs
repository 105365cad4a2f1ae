mod common;

use common::oracle_matrix;
use proptest::prelude::*;
use sdlr::assembly::*;
use sdlr::field::{ConstantField, FnField, ScalarField};
use sdlr::mesh::{build_mesh, Geometry};
use sdlr::randfield::{build_kl, draw_samples, SquaredExponential};

fn setup(n: usize) -> (sdlr::mesh::CoupledMesh, PhysicalParams) {
    (build_mesh(Geometry::default(), n).unwrap(), PhysicalParams::default())
}

#[test]
fn flat_interface_blocks() {
    let (mesh, prm) = setup(4);
    let d = assemble_deterministic_blocks(&mesh, &prm, &Sources::default(), &ConstantField(1.0));
    let c = assemble_conductivity_blocks(&mesh, &prm, &ConstantField(1.0), &ConstantField(1.0));
    // I1, I3, I6, I7, I8 vanish with normal (0,1) and tangent (1,0); I2, I4, I5 do not.
    for (i, zero) in [(0, true), (1, false), (2, true), (3, false), (4, false), (5, true), (6, true), (7, true)] {
        assert_eq!(d.i[i].max_abs() == 0.0, zero, "I{}", i + 1);
    }
    assert!(c.i9.max_abs() > 0.0);
    for b in [&c.i10, &c.i11, &c.i12] {
        assert_eq!(b.max_abs(), 0.0);
    }
}

#[test]
fn interface_mass_integrates_the_edge() {
    // I2 is int(b_j a_i) on the interface and enters the head rows negated; its entries sum to |interface|.
    let (mesh, prm) = setup(4);
    let d = assemble_deterministic_blocks(&mesh, &prm, &Sources::default(), &ConstantField(1.0));
    let s: f64 = d.i[1].iter().map(|(_, _, v)| v).sum();
    assert!((s - 1.0).abs() < 1e-13, "{s}");
    let s5: f64 = d.i[4].iter().map(|(_, _, v)| v).sum();
    assert!((s5 - prm.bj_delta(1.0)).abs() < 1e-13, "{s5}");
}

#[test]
fn stokes_block_is_symmetric() {
    let (mesh, prm) = setup(4);
    let (a, _) = assemble_mean(&mesh, &prm, &Sources::default(), &ConstantField(1.0));
    let l = BlockLayout::of(&mesh);
    let s = a.block(l.n1..l.total(), l.n1..l.total()).to_dense();
    assert!((&s - s.transpose()).abs().max() < 1e-13);
    assert!(a.block(l.range(Block::Pressure), l.range(Block::Pressure)).max_abs() == 0.0);
    assert!(a.block(l.range(Block::Pressure), l.range(Block::Head)).max_abs() == 0.0);
}

#[test]
fn splitting_matches_oracle() {
    let (mesh, prm) = setup(4);
    let kl = build_kl(&SquaredExponential::default(), &mesh, 1.0, 0.01).unwrap();
    let s = draw_samples(&kl, 2, 17);
    let kbar = ConstantField(1.0);
    let (a_bar, _) = assemble_mean(&mesh, &prm, &Sources::default(), &kbar);
    for m in 0..2 {
        let r = kl.realize(&s.row(m)).unwrap();
        let split = a_bar.add(&assemble_perturbation(&mesh, &prm, &kbar, &r.perturbation)).unwrap().to_dense();
        let oracle = oracle_matrix(&mesh, &prm, 1.0, &r.total);
        let err = (&split - &oracle).abs().max();
        assert!(err <= 1e-12, "sample {m}: {err:e}");
    }
}

#[test]
fn perturbation_only_touches_leading_rows() {
    let (mesh, prm) = setup(4);
    let l = BlockLayout::of(&mesh);
    let a = assemble_perturbation(&mesh, &prm, &ConstantField(1.0), &FnField(|p: [f64; 2]| p[0] - 0.3 * p[1]));
    assert!(a.nonzero_rows().iter().all(|&i| i < l.leading()));
    assert!(a.nonzero_cols().iter().all(|&j| j < l.n1));
}

#[test]
fn load_vector_integrates_sources() {
    let (mesh, prm) = setup(4);
    let src = Sources { darcy: 2.0, stokes: [1.0, -3.0] };
    let (_, b) = assemble_mean(&mesh, &prm, &src, &ConstantField(1.0));
    let l = BlockLayout::of(&mesh);
    let sum = |r: std::ops::Range<usize>| b.as_slice()[r].iter().sum::<f64>();
    assert!((sum(l.range(Block::Head)) - 2.0 * 0.5).abs() < 1e-13);
    assert!((sum(l.range(Block::U1)) - 0.5).abs() < 1e-13);
    assert!((sum(l.range(Block::U2)) + 1.5).abs() < 1e-13);
}

#[test]
fn dirichlet_elimination() {
    let (mesh, prm) = setup(4);
    let kl = build_kl(&SquaredExponential::default(), &mesh, 1.0, 0.01).unwrap();
    let s = draw_samples(&kl, 3, 2);
    let bc = BoundaryData::default();
    let sys = assemble_split_system(&mesh, &prm, &Sources::default(), &kl, &s, &bc).unwrap();
    let cons = dirichlet_constraints(&mesh, &bc);
    assert!(!cons.is_empty());
    for c in &cons {
        assert_eq!(sys.b[c.dof], c.value);
        assert_eq!(sys.a_bar.row(c.dof).collect::<Vec<_>>(), vec![(c.dof, 1.0)]);
        for a in &sys.a_tilde {
            assert_eq!(a.row(c.dof).count(), 0);
        }
    }
    let constrained: std::collections::HashSet<_> = cons.iter().map(|c| c.dof).collect();
    for (i, j, _) in sys.a_bar.iter() {
        assert!(i == j || !(constrained.contains(&i) || constrained.contains(&j)));
    }
}

#[test]
fn dirichlet_rejects_pressure_and_nonzero_head() {
    let (mesh, prm) = setup(4);
    let kl = build_kl(&SquaredExponential::default(), &mesh, 1.0, 0.01).unwrap();
    let s = draw_samples(&kl, 1, 2);
    let sys = || assemble_split_system(&mesh, &prm, &Sources::default(), &kl, &s, &BoundaryData { head: 0.0, ..Default::default() }).unwrap();
    let l = BlockLayout::of(&mesh);
    let p = Constraint { dof: l.offset(Block::Pressure), value: 0.0 };
    assert!(apply_dirichlet(sys(), &[p]).is_err());
    let bad_head = BoundaryData { head: 1.0, ..Default::default() };
    assert!(assemble_split_system(&mesh, &prm, &Sources::default(), &kl, &s, &bad_head).is_err());
    assert!(apply_dirichlet(sys(), &[Constraint { dof: l.total(), value: 0.0 }]).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut p = PhysicalParams::default();
    p.nu = -1.0;
    assert!(p.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn perturbation_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -1.0f64..1.0) {
        let (mesh, prm) = setup(2);
        let kbar = ConstantField(1.0);
        let f1 = FnField(|p: [f64; 2]| p[0] * p[1] + 0.5);
        let f2 = FnField(move |p: [f64; 2]| (c * p[0]).sin());
        let combo = FnField(|p: [f64; 2]| a * f1.value(p) + b * f2.value(p));
        let lhs = assemble_perturbation(&mesh, &prm, &kbar, &combo);
        let rhs = assemble_perturbation(&mesh, &prm, &kbar, &f1).scaled(a)
            .add(&assemble_perturbation(&mesh, &prm, &kbar, &f2).scaled(b)).unwrap();
        let d = (lhs.to_dense() - rhs.to_dense()).abs().max();
        prop_assert!(d < 1e-12);
    }
}
