//! Scenario-driven runs behind the command-line front end.
//!
//! A scenario is a JSON document naming a coarse graining, an underlying
//! Hamiltonian (in units of ħJ), initial states and a grid in τ = Jt. Each run
//! returns plain data; the CLI decides how to print or store it.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{
    detector_table_error, dilation_from_kraus, verify_operators, ChannelRecord, CptpReport,
    Dilation, KrausChannel,
};
use crate::effective::{
    composite_transfer, direct_evolve, effective_evolve, intermediate_from_transfers,
    DivisibilityStatus, EffectiveMapComponents,
};
use crate::error::{Error, Result};
use crate::gamma::{
    convexity_probe, hyperplanes, in_domain, sample_member, ConvexityReport, HyperplaneSystem,
    Membership,
};
use crate::linalg::{
    hermitian_residual, identity, kron, matrix_exp_hermitian_generator, max_abs, pauli_x, pauli_z,
    trace, trace_norm, Bipartition, CMatrix, CVector, Side,
};
use crate::states::{trace_distance, DensityMatrix, GellMannBasis, PureStateVector};

/// Agreement required between the effective and the direct path.
pub const CROSS_CHECK_TOL: f64 = 1e-9;
/// Slack on the trace-distance bound.
pub const BOUND_SLACK: f64 = 1e-10;
pub const NORMALIZATION_TOL: f64 = 1e-8;
pub const HAMILTONIAN_HERMITIAN_TOL: f64 = 1e-10;
pub const TABLE_TOL: f64 = 1e-12;
pub const DEFAULT_SEARCH_BUDGET: usize = 500;
pub const DEFAULT_PROBE_SAMPLES: usize = 100;
/// Partners closer than this to the seed are not counted as candidates.
const TRIVIAL_PARTNER: f64 = 1e-9;

fn default_g() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub channel: ChannelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianSpec>,
    #[serde(default)]
    pub initial_states: Vec<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<TimeGrid>,
    #[serde(default)]
    pub seed: u64,
    /// Number of candidates tried by the pair search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_budget: Option<usize>,
    /// Number of pairs drawn by the domain probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Builtin(BuiltinChannel),
    Kraus(ChannelRecord),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinChannel {
    BlurredDetector,
    Identity {
        dim: usize,
    },
    PartialTrace {
        dim_a: usize,
        dim_b: usize,
        #[serde(default)]
        traced: TracedFactor,
    },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TracedFactor {
    First,
    #[default]
    Second,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianSpec {
    Builtin(BuiltinHamiltonian),
    /// Rows of `[re, im]` entries.
    Matrix(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinHamiltonian {
    /// `σz⊗σz`
    Zz,
    /// `σz⊗σz + g(σx⊗1 + 1⊗σx)`
    ZzTransverse {
        #[serde(default = "default_g")]
        g: f64,
    },
    /// The two-qubit swap operator; `exp(-iτ SWAP)` is a swap up to phase at τ = π/2.
    Swap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Amplitudes(Vec<[f64; 2]>),
    Density { density: Vec<Vec<[f64; 2]>> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub tau_start: f64,
    pub tau_end: f64,
    /// Number of intervals; the grid has `steps + 1` points.
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(tau_start: f64, tau_end: f64, steps: usize) -> Self {
        Self {
            tau_start,
            tau_end,
            steps,
        }
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        if !self.tau_start.is_finite() || !self.tau_end.is_finite() || self.tau_end < self.tau_start
        {
            return Err(Error::Config(format!(
                "time grid [{}, {}] must be finite and non-decreasing",
                self.tau_start, self.tau_end
            )));
        }
        if self.steps == 0 {
            return Ok(vec![self.tau_start]);
        }
        let span = self.tau_end - self.tau_start;
        Ok((0..=self.steps)
            .map(|k| self.tau_start + span * (k as f64 / self.steps as f64))
            .collect())
    }
}

fn complex_rows(rows: &[Vec<[f64; 2]>], what: &str) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!(
            "{what} must be a non-empty square matrix"
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

fn to_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

fn swap_operator() -> CMatrix {
    let mut s = CMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            s[(2 * i + j, 2 * j + i)] = Complex64::new(1.0, 0.0);
        }
    }
    s
}

impl ChannelSpec {
    pub fn detector() -> Self {
        ChannelSpec::Builtin(BuiltinChannel::BlurredDetector)
    }

    /// `(in_dim, out_dim, operators)` without a completeness check.
    pub fn operators(&self) -> Result<(usize, usize, Vec<CMatrix>)> {
        match self {
            ChannelSpec::Kraus(rec) => Ok((rec.in_dim, rec.out_dim, rec.operators()?)),
            ChannelSpec::Builtin(b) => {
                let ch = b.channel()?;
                Ok((ch.in_dim(), ch.out_dim(), ch.kraus().to_vec()))
            }
        }
    }

    pub fn channel(&self) -> Result<KrausChannel> {
        match self {
            ChannelSpec::Kraus(rec) => rec.into_channel(),
            ChannelSpec::Builtin(b) => b.channel(),
        }
    }
}

impl BuiltinChannel {
    pub fn channel(&self) -> Result<KrausChannel> {
        match *self {
            BuiltinChannel::BlurredDetector => Ok(KrausChannel::blurred_detector()),
            BuiltinChannel::Identity { dim } => {
                if dim == 0 {
                    return Err(Error::Config("identity channel needs dim >= 1".into()));
                }
                Ok(KrausChannel::identity(dim))
            }
            BuiltinChannel::PartialTrace {
                dim_a,
                dim_b,
                traced,
            } => {
                let part = Bipartition::new(dim_a, dim_b)?;
                let side = match traced {
                    TracedFactor::First => Side::A,
                    TracedFactor::Second => Side::B,
                };
                Ok(KrausChannel::partial_trace(part, side))
            }
        }
    }
}

impl HamiltonianSpec {
    pub fn zz() -> Self {
        HamiltonianSpec::Builtin(BuiltinHamiltonian::Zz)
    }

    pub fn zz_transverse(g: f64) -> Self {
        HamiltonianSpec::Builtin(BuiltinHamiltonian::ZzTransverse { g })
    }

    pub fn matrix(&self) -> Result<CMatrix> {
        let h = match self {
            HamiltonianSpec::Builtin(b) => b.matrix(),
            HamiltonianSpec::Matrix(rows) => complex_rows(rows, "hamiltonian")?,
        };
        let res = hermitian_residual(&h);
        if res > HAMILTONIAN_HERMITIAN_TOL {
            return Err(Error::NotHermitian(res));
        }
        Ok(h)
    }
}

impl BuiltinHamiltonian {
    pub fn matrix(&self) -> CMatrix {
        let zz = kron(&pauli_z(), &pauli_z());
        match *self {
            BuiltinHamiltonian::Zz => zz,
            BuiltinHamiltonian::ZzTransverse { g } => {
                zz + (kron(&pauli_x(), &identity(2)) + kron(&identity(2), &pauli_x())).scale(g)
            }
            BuiltinHamiltonian::Swap => swap_operator(),
        }
    }
}

impl StateSpec {
    pub fn pure(psi: &PureStateVector) -> Self {
        StateSpec::Amplitudes(psi.amplitudes().iter().map(|z| [z.re, z.im]).collect())
    }

    pub fn density(rho: &DensityMatrix) -> Self {
        StateSpec::Density {
            density: to_pairs(rho.matrix()),
        }
    }

    /// Resolves the state; amplitude vectors off by more than the
    /// normalization tolerance are rescaled and a warning is returned.
    pub fn resolve(&self) -> Result<(DensityMatrix, Option<String>)> {
        match self {
            StateSpec::Amplitudes(amps) => {
                let v = CVector::from_iterator(
                    amps.len(),
                    amps.iter().map(|&[re, im]| Complex64::new(re, im)),
                );
                let norm = v.norm();
                if amps.is_empty() || norm == 0.0 || !norm.is_finite() {
                    return Err(Error::InvalidState(
                        "amplitude vector is empty or zero".into(),
                    ));
                }
                let warning = ((norm - 1.0).abs() > NORMALIZATION_TOL)
                    .then(|| format!("amplitude vector had norm {norm:.12}; renormalized"));
                Ok((PureStateVector::normalized(v)?.to_density(), warning))
            }
            StateSpec::Density { density } => {
                Ok((DensityMatrix::new(complex_rows(density, "density")?)?, None))
            }
        }
    }
}

impl ScenarioConfig {
    pub fn new(channel: ChannelSpec) -> Self {
        Self {
            channel,
            hamiltonian: None,
            initial_states: Vec::new(),
            time_grid: None,
            seed: 0,
            search_budget: None,
            samples: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub channel: KrausChannel,
    pub dilation: Dilation,
    hamiltonian: Option<CMatrix>,
    pub states: Vec<DensityMatrix>,
    grid: Option<Vec<f64>>,
    pub seed: u64,
    pub search_budget: usize,
    pub samples: usize,
    /// Non-fatal issues found while loading.
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let channel = cfg.channel.channel()?;
        let dilation = dilation_from_kraus(&channel)?;
        let dim = channel.in_dim();
        let hamiltonian = match &cfg.hamiltonian {
            Some(spec) => {
                let h = spec.matrix()?;
                if h.nrows() != dim {
                    return Err(Error::Config(format!(
                        "hamiltonian is {}x{0}, channel input is {dim}",
                        h.nrows()
                    )));
                }
                Some(h)
            }
            None => None,
        };
        let mut states = Vec::with_capacity(cfg.initial_states.len());
        let mut warnings = Vec::new();
        for (i, spec) in cfg.initial_states.iter().enumerate() {
            let (rho, warning) = spec.resolve()?;
            if rho.dim() != dim {
                return Err(Error::Config(format!(
                    "initial state {i} has dim {}, channel input is {dim}",
                    rho.dim()
                )));
            }
            if let Some(w) = warning {
                warnings.push(format!("initial state {i}: {w}"));
            }
            states.push(rho);
        }
        let grid = cfg.time_grid.map(|g| g.points()).transpose()?;
        Ok(Self {
            channel,
            dilation,
            hamiltonian,
            states,
            grid,
            seed: cfg.seed,
            search_budget: cfg.search_budget.unwrap_or(DEFAULT_SEARCH_BUDGET),
            samples: cfg.samples.unwrap_or(DEFAULT_PROBE_SAMPLES),
            warnings,
        })
    }

    pub fn hamiltonian(&self) -> Result<&CMatrix> {
        self.hamiltonian
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no hamiltonian".into()))
    }

    pub fn grid(&self) -> Result<&[f64]> {
        self.grid
            .as_deref()
            .ok_or_else(|| Error::Config("scenario has no time_grid".into()))
    }

    pub fn propagators(&self) -> Result<Vec<CMatrix>> {
        let h = self.hamiltonian()?;
        self.grid()?
            .iter()
            .map(|&tau| matrix_exp_hermitian_generator(h, tau))
            .collect()
    }

    pub fn hyperplanes(&self) -> Result<HyperplaneSystem> {
        hyperplanes(
            &self.channel,
            &GellMannBasis::new(self.channel.in_dim())?,
            &GellMannBasis::new(self.channel.out_dim())?,
        )
    }

    fn expect_states(&self, n: usize, command: &str) -> Result<()> {
        if self.states.len() != n {
            return Err(Error::Config(format!(
                "{command} needs exactly {n} initial state(s), got {}",
                self.states.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Column-labelled rows, one per grid point (or interval).
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Numeric values of a column; text cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[idx] {
                    Cell::Num(x) => *x,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

#[derive(Debug, Clone)]
pub struct ChannelCheck {
    pub report: CptpReport,
    /// Worst deviation from the detector table, for the builtin detector.
    pub table_error: Option<f64>,
}

impl ChannelCheck {
    pub fn passes(&self) -> bool {
        self.report.passes() && self.table_error.is_none_or(|e| e <= TABLE_TOL)
    }
}

/// Completeness, Choi positivity and (for the detector) table conformance.
/// Works on the raw operators, so broken channels are reported, not rejected.
pub fn check_channel(cfg: &ScenarioConfig) -> Result<ChannelCheck> {
    let (din, dout, ops) = cfg.channel.operators()?;
    let report = verify_operators(din, dout, &ops)?;
    let table_error = match cfg.channel {
        ChannelSpec::Builtin(BuiltinChannel::BlurredDetector) => Some(detector_table_error(|e| {
            Ok(ops.iter().fold(CMatrix::zeros(dout, dout), |acc, k| {
                acc + k * e * k.adjoint()
            }))
        })?),
        _ => None,
    };
    Ok(ChannelCheck {
        report,
        table_error,
    })
}

fn cross_check(eff: &CMatrix, direct: &DensityMatrix, tau: f64, label: &str) -> Result<f64> {
    let diff = max_abs(&(eff - direct.matrix()));
    if diff > CROSS_CHECK_TOL {
        return Err(Error::Validation(format!(
            "{label}: effective and direct evolution differ by {diff:.3e} at τ = {tau}"
        )));
    }
    Ok(diff)
}

struct Evolver<'a> {
    scn: &'a Scenario,
    basis_a: GellMannBasis,
    basis_b: GellMannBasis,
}

impl<'a> Evolver<'a> {
    fn new(scn: &'a Scenario) -> Result<Self> {
        Ok(Self {
            scn,
            basis_a: GellMannBasis::new(scn.dilation.split().dim_a)?,
            basis_b: GellMannBasis::new(scn.dilation.out_dim())?,
        })
    }

    /// Γ_τ(Λ(ψ₀)) with the map generated by `psi0`, checked against the direct path.
    fn evolve(&self, psi0: &DensityMatrix, u: &CMatrix, tau: f64, label: &str) -> Result<Evolved> {
        let comps = EffectiveMapComponents::build_with_bases(
            &self.scn.dilation,
            psi0,
            u,
            self.basis_a.clone(),
            self.basis_b.clone(),
        )?;
        let rho0 = DensityMatrix::new(self.scn.channel.apply_operator(psi0.matrix())?)?;
        let out = effective_evolve(&comps, &rho0)?;
        let direct = direct_evolve(&self.scn.channel, psi0, u)?;
        let discrepancy = cross_check(&out.matrix, &direct, tau, label)?;
        Ok(Evolved {
            zeta_norm: comps.zeta().norm(),
            min_eig: out.min_eigenvalue,
            rho: out.matrix,
            discrepancy,
        })
    }
}

struct Evolved {
    rho: CMatrix,
    zeta_norm: f64,
    min_eig: f64,
    discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub table: Table,
    pub max_discrepancy: f64,
}

/// Purity and Bloch trajectory of the effective state.
pub fn simulate(scn: &Scenario) -> Result<SimulationRun> {
    scn.expect_states(1, "simulate")?;
    let psi0 = &scn.states[0];
    let grid = scn.grid()?;
    let us = scn.propagators()?;
    let ev = Evolver::new(scn)?;
    let bloch = scn.channel.out_dim() == 2;
    let mut cols = vec!["tau", "purity"];
    if bloch {
        cols.extend(["bx", "by", "bz"]);
    }
    cols.extend(["zeta_norm", "min_output_eig"]);
    let mut table = Table::new(&cols);
    let mut max_discrepancy = 0.0_f64;
    for (&tau, u) in grid.iter().zip(&us) {
        let e = ev.evolve(psi0, u, tau, "simulate")?;
        max_discrepancy = max_discrepancy.max(e.discrepancy);
        let mut row = vec![Cell::Num(tau), Cell::Num(trace(&(&e.rho * &e.rho)).re)];
        if bloch {
            row.extend(ev.basis_b.components(&e.rho)?.into_iter().map(Cell::Num));
        }
        row.extend([Cell::Num(e.zeta_norm), Cell::Num(e.min_eig)]);
        table.push(row);
    }
    Ok(SimulationRun {
        table,
        max_discrepancy,
    })
}

/// Checks that two underlying states generate the same effective map, i.e.
/// their Bloch vectors differ by a combination of the hyperplane normals.
pub fn same_map(
    sys: &HyperplaneSystem,
    a: &DensityMatrix,
    b: &DensityMatrix,
) -> Result<[Membership; 2]> {
    let ga = sys.gamma_of(a)?;
    let gb = sys.gamma_of(b)?;
    Ok([in_domain(sys, &ga, &gb)?, in_domain(sys, &gb, &ga)?])
}

#[derive(Debug, Clone)]
pub struct DistanceRun {
    pub table: Table,
    pub memberships: [Membership; 2],
    pub eff_distance_0: f64,
    pub underlying_distance_0: f64,
    /// `max_τ eff_distance − eff_distance_0`.
    pub max_excess: f64,
    /// Largest change of the underlying trace distance along the run.
    pub underlying_drift: f64,
    pub max_discrepancy: f64,
}

/// Trace-distance evolution of two effective states under the same map.
pub fn distance(scn: &Scenario, override_same_map_check: bool) -> Result<DistanceRun> {
    scn.expect_states(2, "distance")?;
    let (a, b) = (&scn.states[0], &scn.states[1]);
    let memberships = same_map(&scn.hyperplanes()?, a, b)?;
    if !override_same_map_check && !memberships.iter().all(|m| m.member) {
        return Err(Error::Validation(format!(
            "initial states do not generate the same effective map (span residuals {:.3e}, {:.3e}; psd {}, {})",
            memberships[0].residual, memberships[1].residual, memberships[0].psd_ok, memberships[1].psd_ok
        )));
    }
    let grid = scn.grid()?;
    let us = scn.propagators()?;
    let ev = Evolver::new(scn)?;
    let underlying_distance_0 = trace_distance(a, b)?;
    let eff_distance_0 = trace_norm(
        &(scn.channel.apply_operator(a.matrix())? - scn.channel.apply_operator(b.matrix())?),
    );

    let mut table = Table::new(&[
        "tau",
        "eff_distance",
        "eff_distance_0",
        "underlying_distance_0",
    ]);
    let (mut max_excess, mut underlying_drift, mut max_discrepancy) =
        (f64::NEG_INFINITY, 0.0_f64, 0.0_f64);
    for (&tau, u) in grid.iter().zip(&us) {
        let ea = ev.evolve(a, u, tau, "distance, first state")?;
        let eb = ev.evolve(b, u, tau, "distance, second state")?;
        max_discrepancy = max_discrepancy.max(ea.discrepancy).max(eb.discrepancy);
        let d = trace_norm(&(&ea.rho - &eb.rho));
        if d > underlying_distance_0 + BOUND_SLACK {
            return Err(Error::Validation(format!(
                "effective distance {d:.12} exceeds underlying initial distance {underlying_distance_0:.12} at τ = {tau}"
            )));
        }
        let underlying = trace_norm(&(u * (a.matrix() - b.matrix()) * u.adjoint()));
        underlying_drift = underlying_drift.max((underlying - underlying_distance_0).abs());
        max_excess = max_excess.max(d - eff_distance_0);
        table.push(vec![
            Cell::Num(tau),
            Cell::Num(d),
            Cell::Num(eff_distance_0),
            Cell::Num(underlying_distance_0),
        ]);
    }
    Ok(DistanceRun {
        table,
        memberships,
        eff_distance_0,
        underlying_distance_0,
        max_excess,
        underlying_drift,
        max_discrepancy,
    })
}

/// `max_τ ‖Λ(U_τ(a−b)U_τ†)‖₁ − ‖Λ(a−b)‖₁`, with `‖Λ(a−b)‖₁`.
fn distance_excess(
    ch: &KrausChannel,
    us: &[CMatrix],
    a: &DensityMatrix,
    b: &DensityMatrix,
) -> Result<(f64, f64)> {
    let delta = a.matrix() - b.matrix();
    let d0 = trace_norm(&ch.apply_operator(&delta)?);
    let mut best = f64::NEG_INFINITY;
    for u in us {
        best = best.max(trace_norm(&ch.apply_operator(&(u * &delta * u.adjoint()))?) - d0);
    }
    Ok((best, d0))
}

#[derive(Debug, Clone)]
pub struct PairSearch {
    pub seed_state: DensityMatrix,
    pub partner: DensityMatrix,
    /// Hyperplane coefficients of the partner relative to the seed.
    pub coefficients: Vec<f64>,
    pub excess: f64,
    pub eff_distance_0: f64,
    pub underlying_distance_0: f64,
    pub membership: Membership,
    pub candidates: usize,
    /// Candidates that differ from the seed.
    pub valid_candidates: usize,
}

impl PairSearch {
    /// A copy of `base` whose initial states are the found pair.
    pub fn pair_config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        let seed = base
            .initial_states
            .first()
            .cloned()
            .unwrap_or_else(|| StateSpec::density(&self.seed_state));
        cfg.initial_states = vec![seed, StateSpec::density(&self.partner)];
        cfg
    }
}

/// Randomized search over perpendicular partners of the single seed state,
/// keeping the one whose effective distance overshoots its initial value most.
pub fn find_pair(scn: &Scenario, budget: usize) -> Result<PairSearch> {
    scn.expect_states(1, "find-pair")?;
    let seed_state = scn.states[0].clone();
    let sys = scn.hyperplanes()?;
    let gamma0 = sys.gamma_of(&seed_state)?;
    let us = scn.propagators()?;
    let trivial = || -> Result<PairSearch> {
        Ok(PairSearch {
            partner: seed_state.clone(),
            coefficients: vec![0.0; sys.normals().nrows()],
            excess: 0.0,
            eff_distance_0: 0.0,
            underlying_distance_0: 0.0,
            membership: in_domain(&sys, &gamma0, &gamma0)?,
            candidates: 0,
            valid_candidates: 0,
            seed_state: seed_state.clone(),
        })
    };
    if budget == 0 {
        return trivial();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let mut best: Option<PairSearch> = None;
    let mut valid = 0;
    for _ in 0..budget {
        let (coeffs, mv) = sample_member(&sys, &gamma0, &mut rng)?;
        if !mv.psd_ok {
            continue;
        }
        let partner = sys.underlying_state(&mv.gamma)?;
        let und = trace_distance(&seed_state, &partner)?;
        if und <= TRIVIAL_PARTNER {
            continue;
        }
        valid += 1;
        let (excess, d0) = distance_excess(&scn.channel, &us, &seed_state, &partner)?;
        if best.as_ref().is_none_or(|b| excess > b.excess) {
            best = Some(PairSearch {
                seed_state: seed_state.clone(),
                membership: in_domain(&sys, &gamma0, &mv.gamma)?,
                partner,
                coefficients: coeffs,
                excess,
                eff_distance_0: d0,
                underlying_distance_0: und,
                candidates: 0,
                valid_candidates: 0,
            });
        }
    }
    let mut found = best.ok_or_else(|| {
        Error::Validation(format!(
            "no positive partner distinct from the seed found in {budget} candidates"
        ))
    })?;
    found.candidates = budget;
    found.valid_candidates = valid;
    Ok(found)
}

#[derive(Debug, Clone)]
pub struct DomainProbe {
    pub convexity: ConvexityReport,
    /// Membership of every further initial state in the domain of the first.
    pub memberships: Vec<Membership>,
}

impl DomainProbe {
    pub fn passes(&self) -> bool {
        self.convexity.violations == 0
    }
}

pub fn domain_probe(scn: &Scenario, samples: usize) -> Result<DomainProbe> {
    let first = scn
        .states
        .first()
        .ok_or_else(|| Error::Config("domain-probe needs at least one initial state".into()))?;
    let sys = scn.hyperplanes()?;
    let gamma0 = sys.gamma_of(first)?;
    let convexity = convexity_probe(&sys, &gamma0, samples, scn.seed)?;
    let memberships = scn.states[1..]
        .iter()
        .map(|s| in_domain(&sys, &gamma0, &sys.gamma_of(s)?))
        .collect::<Result<_>>()?;
    Ok(DomainProbe {
        convexity,
        memberships,
    })
}

#[derive(Debug, Clone)]
pub struct DivisibilityRow {
    pub tau_j: f64,
    pub tau_k: f64,
    pub min_choi_eig: f64,
    pub rank: usize,
    pub factorization_residual: f64,
    pub status: DivisibilityStatus,
}

/// Intermediate maps for every pair of grid points `τ_j ≤ τ_k`.
pub fn divisibility(scn: &Scenario) -> Result<Vec<DivisibilityRow>> {
    let grid = scn.grid()?;
    let transfers = scn
        .propagators()?
        .iter()
        .map(|u| composite_transfer(&scn.dilation, u))
        .collect::<Result<Vec<_>>>()?;
    let d = scn.dilation.out_dim();
    let mut rows = Vec::new();
    for j in 0..grid.len() {
        for k in j..grid.len() {
            let m = intermediate_from_transfers(&transfers[k], &transfers[j], d)?;
            rows.push(DivisibilityRow {
                tau_j: grid[j],
                tau_k: grid[k],
                min_choi_eig: m.min_eig,
                rank: m.rank,
                factorization_residual: m.factorization_residual,
                status: m.status,
            });
        }
    }
    Ok(rows)
}

pub fn divisibility_table(rows: &[DivisibilityRow]) -> Table {
    let mut table = Table::new(&[
        "tau_j",
        "tau_k",
        "min_choi_eig",
        "rank",
        "factorization_residual",
        "status",
    ]);
    for r in rows {
        table.push(vec![
            Cell::Num(r.tau_j),
            Cell::Num(r.tau_k),
            Cell::Num(r.min_choi_eig),
            Cell::Num(r.rank as f64),
            Cell::Num(r.factorization_residual),
            Cell::Text(r.status.label().to_string()),
        ]);
    }
    table
}

/// Real matrix of a Hamiltonian spec, mainly for diagnostics.
pub fn hamiltonian_pairs(h: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    to_pairs(h)
}
