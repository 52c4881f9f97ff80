//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cgdyn::channels::{
    detector_table_error, dilation_from_kraus, reference_detector_dilation, verify_cptp,
    KrausChannel,
};
use cgdyn::effective::{direct_evolve, effective_evolve, zeta_trace, EffectiveMapComponents};
use cgdyn::experiments::{
    distance, find_pair, simulate, ChannelSpec, HamiltonianSpec, Scenario, ScenarioConfig,
    StateSpec, TimeGrid,
};
use cgdyn::gamma::{convexity_probe, effective_state_from_gamma, hyperplanes, sample_member};
use cgdyn::linalg::{
    identity, matrix_exp_hermitian_generator, max_abs, operator_norm, trace_norm, CMatrix,
};
use cgdyn::states::{
    bloch_to_matrix, random_pure_state, random_pure_state_with, BlochVector, DensityMatrix,
    GellMannBasis, PureStateVector,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    (&a + a.adjoint()).scale(0.5)
}

/// Haar pure state mixed with the maximally mixed state at a random weight.
fn random_mixed(rng: &mut impl Rng, dim: usize) -> DensityMatrix {
    let psi = random_pure_state_with(dim, rng).unwrap().to_density();
    let w = rng.random_range(0.3..0.95);
    psi.mix(&DensityMatrix::maximally_mixed(dim), w).unwrap()
}

fn half_state() -> PureStateVector {
    PureStateVector::new(cgdyn::linalg::CVector::from_element(
        4,
        Complex64::new(0.5, 0.0),
    ))
    .unwrap()
}

fn detector_config(
    h: HamiltonianSpec,
    states: Vec<StateSpec>,
    grid: TimeGrid,
    seed: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        hamiltonian: Some(h),
        initial_states: states,
        time_grid: Some(grid),
        seed,
        ..ScenarioConfig::new(ChannelSpec::detector())
    }
}

fn c1_detector_validity() -> Outcome {
    let r = verify_cptp(&KrausChannel::blurred_detector()).map_err(|e| e.to_string())?;
    check(
        r.completeness_residual < 1e-12 && r.choi_min_eig >= -1e-10,
        format!(
            "completeness residual {:.2e}, Choi min eigenvalue {:.2e}",
            r.completeness_residual, r.choi_min_eig
        ),
    )
}

fn c2_reference_dilation() -> Outcome {
    let dil = reference_detector_dilation();
    let v = dil.unitary();
    let unitarity = operator_norm(&(v.adjoint() * v - identity(8)));
    let table = detector_table_error(|e| dil.apply_operator(e)).map_err(|e| e.to_string())?;
    check(
        unitarity < 1e-12 && table < 1e-12,
        format!("‖V†V−1‖ {unitarity:.2e}, worst table entry error {table:.2e} over 16 entries"),
    )
}

fn c3_dilation_round_trip() -> Outcome {
    let ch = KrausChannel::blurred_detector();
    let dil = dilation_from_kraus(&ch).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for seed in 0..50 {
        let psi = random_pure_state(4, 1000 + seed).unwrap().to_density();
        let a = dil.apply_operator(psi.matrix()).unwrap();
        let b = ch.apply_operator(psi.matrix()).unwrap();
        worst = worst.max(max_abs(&(a - b)));
    }
    check(
        worst < 1e-10 && dil.aux_dim() == 1,
        format!(
            "r = {}, worst deviation {worst:.2e} over 50 Haar states",
            dil.aux_dim()
        ),
    )
}

struct SweepStats {
    route_gap: f64,
    completeness: f64,
    zeta_trace: f64,
}

/// 100 random (ψ₀, H, τ) with the detector; shared by criteria 4 and 5.
fn diagram_sweep() -> SweepStats {
    let ch = KrausChannel::blurred_detector();
    let dil = reference_detector_dilation();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = SweepStats {
        route_gap: 0.0,
        completeness: 0.0,
        zeta_trace: 0.0,
    };
    for _ in 0..100 {
        let psi0 = random_pure_state_with(4, &mut rng).unwrap().to_density();
        let h = random_hermitian(&mut rng, 4);
        let tau = rng.random_range(0.0..2.0 * PI);
        let u = matrix_exp_hermitian_generator(&h, tau).unwrap();
        let comps = EffectiveMapComponents::build(&dil, &psi0, &u).unwrap();
        let rho0 = DensityMatrix::new(ch.apply_operator(psi0.matrix()).unwrap()).unwrap();
        let corr_form = comps
            .evolve_with_correlation_operator(rho0.matrix())
            .unwrap();
        let theta_form = effective_evolve(&comps, &rho0).unwrap().matrix;
        let direct = direct_evolve(&ch, &psi0, &u).unwrap().into_matrix();
        for gap in [
            max_abs(&(&corr_form - &theta_form)),
            max_abs(&(&corr_form - &direct)),
            max_abs(&(&theta_form - &direct)),
        ] {
            s.route_gap = s.route_gap.max(gap);
        }
        s.completeness = s.completeness.max(comps.completeness_residual());
        s.zeta_trace = s.zeta_trace.max(zeta_trace(&comps));
    }
    s
}

fn c4_diagram_consistency(s: &SweepStats) -> Outcome {
    check(
        s.route_gap < 1e-9,
        format!(
            "worst pairwise gap between the three routes {:.2e} (100 samples)",
            s.route_gap
        ),
    )
}

fn c5_effective_kraus(s: &SweepStats) -> Outcome {
    check(
        s.completeness < 1e-9 && s.zeta_trace < 1e-12,
        format!(
            "worst ‖ΣM†M−1‖ {:.2e}, worst |Tr ζ| {:.2e}",
            s.completeness, s.zeta_trace
        ),
    )
}

fn c6_purity_oscillation() -> Outcome {
    let cfg = detector_config(
        HamiltonianSpec::zz(),
        vec![StateSpec::pure(&half_state())],
        TimeGrid::new(0.0, 2.0 * PI, 200),
        0,
    );
    let run = simulate(&Scenario::from_config(&cfg).unwrap()).map_err(|e| e.to_string())?;
    let p = run.table.column("purity").unwrap();
    let start = (p[0] - 1.0).abs();
    let mid = (p[50] - 2.0 / 3.0).abs();
    let period = (0..=100)
        .map(|k| (p[k] - p[k + 100]).abs())
        .fold(0.0, f64::max);
    check(
        start < 1e-9 && mid < 1e-9 && period < 1e-9,
        format!(
            "|purity(0)−1| {start:.2e}, |purity(π/2)−2/3| {mid:.2e}, worst |purity(τ)−purity(τ+π)| {period:.2e} on 101 points"
        ),
    )
}

fn c7_pure_marginal_collapse() -> Outcome {
    let dil = reference_detector_dilation();
    let psi0 = PureStateVector::basis(4, 0).unwrap().to_density();
    let rho0 = DensityMatrix::new(dil.apply_operator(psi0.matrix()).unwrap()).unwrap();
    let (mut theta, mut zeta, mut kraus_gap) = (0.0_f64, 0.0_f64, 0.0_f64);
    for h in [HamiltonianSpec::zz(), HamiltonianSpec::zz_transverse(3.0)] {
        let h = h.matrix().unwrap();
        for tau in TimeGrid::new(0.0, 2.0 * PI, 60).points().unwrap() {
            let u = matrix_exp_hermitian_generator(&h, tau).unwrap();
            let comps = EffectiveMapComponents::build(&dil, &psi0, &u).unwrap();
            theta = theta.max(comps.theta_norm());
            zeta = zeta.max(max_abs(comps.zeta()));
            let full = effective_evolve(&comps, &rho0).unwrap().matrix;
            kraus_gap = kraus_gap.max(max_abs(&(full - comps.kraus_part(rho0.matrix()).unwrap())));
            kraus_gap = kraus_gap.max(comps.completeness_residual());
        }
    }
    check(
        theta < 1e-12 && zeta < 1e-12 && kraus_gap < 1e-12,
        format!("worst ‖Θ‖ {theta:.2e}, worst |ζ| {zeta:.2e}, worst deviation from Kraus form {kraus_gap:.2e}"),
    )
}

/// Random same-map pairs: a mixed seed and a perpendicular partner.
fn random_pairs(n: usize, seed: u64) -> Vec<(DensityMatrix, DensityMatrix)> {
    let ch = KrausChannel::blurred_detector();
    let sys = hyperplanes(
        &ch,
        &GellMannBasis::new(4).unwrap(),
        &GellMannBasis::new(2).unwrap(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    while pairs.len() < n {
        let a = random_mixed(&mut rng, 4);
        let g0 = sys.gamma_of(&a).unwrap();
        let (_, mv) = sample_member(&sys, &g0, &mut rng).unwrap();
        let b = sys.underlying_state(&mv.gamma).unwrap();
        if cgdyn::states::trace_distance(&a, &b).unwrap() > 1e-3 {
            pairs.push((a, b));
        }
    }
    pairs
}

fn c8_distance_bound() -> Outcome {
    let pairs = random_pairs(50, 8);
    let mut slack = f64::INFINITY;
    let mut drift = 0.0_f64;
    for h in [HamiltonianSpec::zz(), HamiltonianSpec::zz_transverse(3.0)] {
        for (a, b) in &pairs {
            let cfg = detector_config(
                h.clone(),
                vec![StateSpec::density(a), StateSpec::density(b)],
                TimeGrid::new(0.0, 2.0 * PI, 60),
                0,
            );
            let run = distance(&Scenario::from_config(&cfg).unwrap(), false)
                .map_err(|e| e.to_string())?;
            let d = run.table.column("eff_distance").unwrap();
            slack = slack.min(
                d.iter()
                    .map(|x| run.underlying_distance_0 - x)
                    .fold(f64::INFINITY, f64::min),
            );
            drift = drift.max(run.underlying_drift);
        }
    }
    check(
        slack >= -1e-10 && drift < 1e-10,
        format!("min (‖ψ₀−ψ₀′‖₁ − eff_distance) {slack:.3e}, worst underlying drift {drift:.2e} (50 pairs × 2 Hamiltonians)"),
    )
}

fn seed_family_config(h: HamiltonianSpec, grid: TimeGrid) -> ScenarioConfig {
    detector_config(h, vec![StateSpec::pure(&half_state())], grid, 2024)
}

fn c9_zz_no_overshoot() -> Outcome {
    let cfg = seed_family_config(HamiltonianSpec::zz(), TimeGrid::new(0.0, 2.0 * PI, 200));
    let scn = Scenario::from_config(&cfg).unwrap();
    let found = find_pair(&scn, 500).map_err(|e| e.to_string())?;
    let run = distance(
        &Scenario::from_config(&found.pair_config(&cfg)).unwrap(),
        false,
    )
    .map_err(|e| e.to_string())?;
    // also every other partner of the same seed
    let ch = KrausChannel::blurred_detector();
    let sys = hyperplanes(
        &ch,
        &GellMannBasis::new(4).unwrap(),
        &GellMannBasis::new(2).unwrap(),
    )
    .unwrap();
    let g0 = sys.gamma_of(&scn.states[0]).unwrap();
    let us = scn.propagators().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut tested) = (run.max_excess, 0);
    for _ in 0..500 {
        let (_, mv) = sample_member(&sys, &g0, &mut rng).unwrap();
        let partner = sys.underlying_state(&mv.gamma).unwrap();
        let delta = scn.states[0].matrix() - partner.matrix();
        if trace_norm(&delta) < 1e-9 {
            continue;
        }
        tested += 1;
        let d0 = trace_norm(&ch.apply_operator(&delta).unwrap());
        for u in &us {
            worst = worst
                .max(trace_norm(&ch.apply_operator(&(u * &delta * u.adjoint())).unwrap()) - d0);
        }
    }
    check(
        worst <= 1e-10 && found.valid_candidates > 0 && tested > 0,
        format!(
            "worst eff_distance(τ) − eff_distance(0) {worst:.2e} (found pair at distance {:.3}, plus {tested} further partners)",
            found.underlying_distance_0
        ),
    )
}

fn c10_transverse_overshoot() -> Outcome {
    let cfg = seed_family_config(
        HamiltonianSpec::zz_transverse(3.0),
        TimeGrid::new(0.0, PI, 200),
    );
    let found = find_pair(&Scenario::from_config(&cfg).unwrap(), 500).map_err(|e| e.to_string())?;
    let run = distance(
        &Scenario::from_config(&found.pair_config(&cfg)).unwrap(),
        false,
    )
    .map_err(|e| e.to_string())?;
    check(
        found.excess > 1e-3 && run.max_excess > 1e-3,
        format!(
            "excess {:.4e} (re-evaluated {:.4e}), eff_distance(0) {:.4}, seed 2024, budget 500, τ∈[0,π] 201 points",
            found.excess, run.max_excess, found.eff_distance_0
        ),
    )
}

fn c11_domain_geometry() -> Outcome {
    let ch = KrausChannel::blurred_detector();
    let sys = hyperplanes(
        &ch,
        &GellMannBasis::new(4).unwrap(),
        &GellMannBasis::new(2).unwrap(),
    )
    .unwrap();
    let out_basis = GellMannBasis::new(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut affine = 0.0_f64;
    for _ in 0..50 {
        let comps: Vec<f64> = (0..15)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3)
            .collect();
        let gamma = BlochVector::new(4, comps).unwrap();
        let alpha = effective_state_from_gamma(&sys, &gamma).unwrap();
        let image = ch
            .apply_operator(&bloch_to_matrix(&gamma, sys.basis_in()).unwrap())
            .unwrap();
        let direct = out_basis.components(&image).unwrap();
        for (x, y) in alpha.components().iter().zip(&direct) {
            affine = affine.max((x - y).abs());
        }
    }
    let mixed_seed = random_mixed(&mut rng, 4);
    let pure_seed = half_state().to_density();
    let mut violations = 0;
    let mut distinct = Vec::new();
    for seed_state in [&mixed_seed, &pure_seed] {
        let report = convexity_probe(&sys, &sys.gamma_of(seed_state).unwrap(), 100, 11).unwrap();
        violations += report.violations;
        distinct.push(report.nontrivial);
    }
    check(
        affine < 1e-10 && violations == 0,
        format!(
            "affine-form error {affine:.2e} on 50 random γ; convexity violations {violations} over 2×100 pairs ({} and {} distinct)",
            distinct[0], distinct[1]
        ),
    )
}

fn c12_contraction() -> Outcome {
    let ch = KrausChannel::blurred_detector();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut slack = f64::INFINITY;
    for k in 0..100 {
        let (a, b) = if k % 2 == 0 {
            (
                random_pure_state_with(4, &mut rng).unwrap().to_density(),
                random_pure_state_with(4, &mut rng).unwrap().to_density(),
            )
        } else {
            (random_mixed(&mut rng, 4), random_mixed(&mut rng, 4))
        };
        let before = trace_norm(&(a.matrix() - b.matrix()));
        let after = trace_norm(
            &(ch.apply_operator(a.matrix()).unwrap() - ch.apply_operator(b.matrix()).unwrap()),
        );
        slack = slack.min(before - after);
    }
    check(
        slack >= -1e-12,
        format!("min (‖ψ−ψ′‖₁ − ‖Λ(ψ)−Λ(ψ′)‖₁) {slack:.3e} over 100 pairs"),
    )
}

fn run(outcome: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(outcome)) {
        Ok(o) => o,
        Err(p) => Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        )),
    }
}

fn main() {
    let started = Instant::now();
    let sweep = catch_unwind(diagram_sweep).map_err(|_| "diagram sweep panicked".to_string());
    let c4 = sweep
        .as_ref()
        .map_err(Clone::clone)
        .and_then(c4_diagram_consistency);
    let c5 = sweep
        .as_ref()
        .map_err(Clone::clone)
        .and_then(c5_effective_kraus);
    let results: Vec<(&str, Outcome)> = vec![
        ("detector channel validity", run(c1_detector_validity)),
        (
            "reference dilation unitary and table",
            run(c2_reference_dilation),
        ),
        ("dilation round trip", run(c3_dilation_round_trip)),
        ("diagram consistency", c4),
        ("effective Kraus completeness", c5),
        ("purity oscillation", run(c6_purity_oscillation)),
        ("pure-marginal collapse", run(c7_pure_marginal_collapse)),
        ("distance bound", run(c8_distance_bound)),
        (
            "zz pair never exceeds initial distance",
            run(c9_zz_no_overshoot),
        ),
        ("transverse field overshoot", run(c10_transverse_overshoot)),
        ("domain geometry", run(c11_domain_geometry)),
        ("detector contraction", run(c12_contraction)),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
