//! Gate-level compilation of the evaporation protocol.
//!
//! Conventions: `RX(φ) = exp(-iφX/2)`, `RY(η) = exp(-iηY/2)`,
//! `RZZ(θ) = exp(-iθZZ/2)`. With `φ = -τg` and `θ = -2τJ` these reproduce
//! the Trotter exponentials of [`crate::model::trotter_layers`] exactly:
//! each half-step field gate is `RX(φ)` and each bond gate is `RZZ(θ)`.
//!
//! Qubits are numbered from 1 in gate programs; everything else in the crate
//! is 0-based.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Region, TfimParams};
use crate::mps::MpsState;
use crate::oracle::{exact_ground, StateVector};
use crate::model::environment_terms;
use crate::tensor::{Tensor, TruncationPolicy, C64, ONE, ZERO};

/// Environment rotation used in the six-qubit initialization circuit.
pub const ETA_INIT: f64 = 1.107;

pub const EVAPORATION_MARKER: &str = "evaporation event";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateAngles {
    pub phi_sys: f64,
    pub phi_env: f64,
    pub theta_sys: f64,
    pub theta_env: f64,
    pub theta_h: f64,
    pub eta_init: f64,
}

/// `φ = -τg`, `θ = -2τJ`, `θ_h = -2τh`.
pub fn angles_from(params: &TfimParams, tau: f64) -> GateAngles {
    GateAngles {
        phi_sys: -tau * params.g_sys,
        phi_env: -tau * params.g_env,
        theta_sys: -2.0 * tau * params.j_sys,
        theta_env: -2.0 * tau * params.j_env,
        theta_h: -2.0 * tau * params.h,
        eta_init: ETA_INIT,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    H,
    RX,
    RY,
    RZZ,
    CNOT,
    CRY,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::H | Op::RX | Op::RY => 1,
            Op::RZZ | Op::CNOT | Op::CRY => 2,
        }
    }

    pub fn has_angle(self) -> bool {
        !matches!(self, Op::H | Op::CNOT)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Op::H => "H",
            Op::RX => "RX",
            Op::RY => "RY",
            Op::RZZ => "RZZ",
            Op::CNOT => "CNOT",
            Op::CRY => "CRY",
        };
        f.write_str(s)
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "H" => Op::H,
            "RX" => Op::RX,
            "RY" => Op::RY,
            "RZZ" => Op::RZZ,
            "CNOT" => Op::CNOT,
            "CRY" => Op::CRY,
            other => return Err(format!("unknown opcode `{other}`")),
        })
    }
}

/// How a controlled-RY is read: which control value triggers it, and
/// whether its angle is halved inside the exponential.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CryConvention {
    pub control_on_one: bool,
    pub half_angle: bool,
}

impl CryConvention {
    /// The convention the gate programs use.
    pub const PINNED: Self = Self { control_on_one: true, half_angle: true };

    pub fn all() -> [Self; 4] {
        [
            Self::PINNED,
            Self { control_on_one: true, half_angle: false },
            Self { control_on_one: false, half_angle: true },
            Self { control_on_one: false, half_angle: false },
        ]
    }
}

impl fmt::Display for CryConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "control on |{}>, {}",
            u8::from(self.control_on_one),
            if self.half_angle { "exp(-i eta Y/2)" } else { "exp(-i eta Y)" }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Instruction {
    pub op: Op,
    /// 1-based; the second entry is only meaningful for two-qubit gates.
    pub qubits: [usize; 2],
    pub angle: f64,
}

impl Instruction {
    pub fn one(op: Op, q: usize, angle: f64) -> Self {
        Self { op, qubits: [q, 0], angle }
    }

    pub fn two(op: Op, q1: usize, q2: usize, angle: f64) -> Self {
        Self { op, qubits: [q1, q2], angle }
    }

    pub fn targets(&self) -> &[usize] {
        &self.qubits[..self.op.arity()]
    }

    /// 2×2 or 4×4 matrix; for two-qubit gates the first listed qubit is the
    /// more significant index (the control for CNOT and CRY).
    pub fn matrix(&self) -> Tensor {
        self.matrix_with(CryConvention::PINNED)
    }

    pub fn matrix_with(&self, cry: CryConvention) -> Tensor {
        let a = self.angle;
        let (c, s) = ((a / 2.0).cos(), (a / 2.0).sin());
        let re = |x: f64| C64::new(x, 0.0);
        match self.op {
            Op::H => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                Tensor::from_raw(vec![2, 2], vec![re(h), re(h), re(h), re(-h)])
            }
            Op::RX => Tensor::from_raw(vec![2, 2], vec![re(c), C64::new(0.0, -s), C64::new(0.0, -s), re(c)]),
            Op::RY => ry(a),
            Op::RZZ => {
                let (m, p) = (C64::from_polar(1.0, -a / 2.0), C64::from_polar(1.0, a / 2.0));
                Tensor::from_fn(&[4, 4], |ix| match (ix[0] == ix[1], ix[0]) {
                    (false, _) => ZERO,
                    (true, 0 | 3) => m,
                    (true, _) => p,
                })
            }
            Op::CNOT => controlled(&Tensor::from_raw(vec![2, 2], vec![ZERO, ONE, ONE, ZERO]), true),
            Op::CRY => {
                let rot = ry(if cry.half_angle { a } else { 2.0 * a });
                controlled(&rot, cry.control_on_one)
            }
        }
    }
}

fn ry(a: f64) -> Tensor {
    let (c, s) = ((a / 2.0).cos(), (a / 2.0).sin());
    Tensor::from_real(&[2, 2], &[c, -s, s, c]).expect("finite angle")
}

fn controlled(u: &Tensor, on_one: bool) -> Tensor {
    let active = usize::from(on_one);
    Tensor::from_fn(&[4, 4], |ix| {
        let (co, to, ci, ti) = (ix[0] / 2, ix[0] % 2, ix[1] / 2, ix[1] % 2);
        if co != ci {
            ZERO
        } else if co == active {
            u.get(&[to, ti])
        } else if to == ti {
            ONE
        } else {
            ZERO
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Gate(Instruction),
    /// Comment line, kept so that parsing and serializing are inverse.
    Marker(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GateList {
    pub items: Vec<Item>,
}

impl GateList {
    pub fn push(&mut self, inst: Instruction) {
        self.items.push(Item::Gate(inst));
    }

    pub fn mark(&mut self, text: &str) {
        self.items.push(Item::Marker(text.to_string()));
    }

    pub fn extend(&mut self, other: GateList) {
        self.items.extend(other.items);
    }

    pub fn gates(&self) -> impl Iterator<Item = &Instruction> {
        self.items.iter().filter_map(|i| match i {
            Item::Gate(g) => Some(g),
            Item::Marker(_) => None,
        })
    }

    pub fn gate_count(&self, op: Op) -> usize {
        self.gates().filter(|g| g.op == op).count()
    }

    /// Checks every target lies in `1..=len` and two-qubit targets differ.
    pub fn validate(&self, len: usize) -> Result<()> {
        for g in self.gates() {
            let t = g.targets();
            if t.iter().any(|&q| q == 0 || q > len) || (t.len() == 2 && t[0] == t[1]) {
                return Err(Error::Range(format!("{} on qubits {t:?} of {len}", g.op)));
            }
        }
        Ok(())
    }

    /// Applies the program to an MPS. Two-qubit gates must act on
    /// neighbouring qubits.
    pub fn apply_to_mps(&self, psi: &mut MpsState, policy: &TruncationPolicy) -> Result<f64> {
        self.validate(psi.len())?;
        let mut weight = 0.0;
        for g in self.gates() {
            let m = g.matrix();
            match *g.targets() {
                [q] => psi.apply_single_site_gate(&m, q - 1)?,
                [a, b] if b == a + 1 => weight += psi.apply_two_site_gate(&m, a - 1, policy)?.discarded_weight,
                [a, b] if a == b + 1 => weight += psi.apply_two_site_gate(&swap_qubits(&m), b - 1, policy)?.discarded_weight,
                _ => return Err(Error::Unsupported(format!("{} on non-adjacent qubits {:?}", g.op, g.targets()))),
            }
        }
        Ok(weight)
    }
}

/// Same two-qubit gate with the roles of the qubits exchanged.
fn swap_qubits(m: &Tensor) -> Tensor {
    let sw = |k: usize| (k % 2) * 2 + k / 2;
    Tensor::from_fn(&[4, 4], |ix| m.get(&[sw(ix[0]), sw(ix[1])]))
}

/// One second-order step for a system of `n_sys` sites on `len` qubits:
/// RX(φ) on every qubit, RZZ on odd bonds, RZZ on even bonds, RX(φ) again.
pub fn trotter_step_circuit(params: &TfimParams, n_sys: usize, len: usize, tau: f64) -> Result<GateList> {
    if len != params.len() {
        return Err(Error::Dimension(format!("{len} qubits for a chain of {}", params.len())));
    }
    if n_sys > len {
        return Err(Error::Range(format!("system size {n_sys} exceeds {len} qubits")));
    }
    let a = angles_from(params, tau);
    let terms = crate::model::hamiltonian_terms(params, n_sys)?;
    let mut gl = GateList::default();
    let fields = |gl: &mut GateList| {
        for f in &terms.x_fields {
            let phi = if f.region == Region::System { a.phi_sys } else { a.phi_env };
            gl.push(Instruction::one(Op::RX, f.site + 1, phi));
        }
    };
    fields(&mut gl);
    for odd in [true, false] {
        for b in terms.zz_bonds.iter().filter(|b| (b.site % 2 == 0) == odd) {
            let theta = match b.region {
                Region::System => a.theta_sys,
                Region::Boundary => a.theta_h,
                Region::Environment => a.theta_env,
            };
            gl.push(Instruction::two(Op::RZZ, b.site + 1, b.site + 2, theta));
        }
    }
    fields(&mut gl);
    Ok(gl)
}

/// Six-qubit preparation of `|00⟩ ⊗ Bell ⊗ (environment ansatz)`.
pub fn init_circuit(n_sys: usize, m_env: usize, eta: f64) -> Result<GateList> {
    if (n_sys, m_env) != (4, 2) {
        return Err(Error::Unsupported(format!(
            "initialization circuit is only available for N=4, M=2 (got N={n_sys}, M={m_env})"
        )));
    }
    let mut gl = GateList::default();
    gl.push(Instruction::one(Op::H, 3, 0.0));
    gl.push(Instruction::one(Op::H, 5, 0.0));
    gl.push(Instruction::two(Op::CNOT, 3, 4, 0.0));
    gl.push(Instruction::two(Op::CRY, 5, 6, eta));
    gl.push(Instruction::two(Op::CNOT, 5, 6, 0.0));
    Ok(gl)
}

/// Full program: optional initialization, then `steps_per_interval` Trotter
/// steps per evaporation interval with a marker before each event.
pub fn evaporation_program(
    params: &TfimParams,
    tau: f64,
    steps_per_interval: usize,
    with_init: bool,
) -> Result<GateList> {
    params.validate()?;
    let mut gl = GateList::default();
    if with_init {
        gl.mark("initialization");
        gl.extend(init_circuit(params.n_init, params.m_init, ETA_INIT)?);
    }
    for event in 0..params.n_init {
        let n = params.n_init - event;
        gl.mark(&format!("interval {}: N={n} M={}", event + 1, params.len() - n));
        let step = trotter_step_circuit(params, n, params.len(), tau)?;
        for _ in 0..steps_per_interval {
            gl.extend(step.clone());
        }
        if n > 1 {
            gl.mark(EVAPORATION_MARKER);
        }
    }
    Ok(gl)
}

/// Shortest exact decimal, padded with zeros to at least 12 significant digits.
pub fn format_angle(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') {
        s.push('.');
    }
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    let significant = digits.trim_start_matches('0').len().max(1);
    let leading_zero = digits.trim_start_matches('0').is_empty();
    let want = if leading_zero { 11 } else { 12 };
    for _ in significant..want.max(significant) {
        s.push('0');
    }
    if leading_zero {
        // zero: `0.` followed by eleven zeros gives twelve digits
        while s.chars().filter(|c| c.is_ascii_digit()).count() < 12 {
            s.push('0');
        }
    }
    s
}

pub fn serialize(gl: &GateList) -> String {
    let mut out = String::new();
    for item in &gl.items {
        match item {
            Item::Marker(text) => {
                out.push_str("# ");
                out.push_str(text);
            }
            Item::Gate(g) => {
                out.push_str(&g.op.to_string());
                for q in g.targets() {
                    out.push(' ');
                    out.push_str(&q.to_string());
                }
                if g.op.has_angle() {
                    out.push(' ');
                    out.push_str(&format_angle(g.angle));
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<GateList> {
    let mut gl = GateList::default();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| Error::Parse { line: i + 1, message };
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            gl.mark(comment.strip_prefix(' ').unwrap_or(comment));
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let op: Op = fields[0].parse().map_err(err)?;
        let expected = 1 + op.arity() + usize::from(op.has_angle());
        if fields.len() != expected {
            return Err(err(format!("{op} takes {} operand(s), got {}", expected - 1, fields.len() - 1)));
        }
        let mut qubits = [0usize; 2];
        for (k, f) in fields[1..=op.arity()].iter().enumerate() {
            let q: usize = f.parse().map_err(|_| err(format!("bad qubit index `{f}`")))?;
            if q == 0 {
                return Err(err("qubit indices start at 1".into()));
            }
            qubits[k] = q;
        }
        if op.arity() == 2 && qubits[0] == qubits[1] {
            return Err(err(format!("{op} needs two distinct qubits")));
        }
        let angle = if op.has_angle() {
            let f = fields[expected - 1];
            let a: f64 = f.parse().map_err(|_| err(format!("bad angle `{f}`")))?;
            if !a.is_finite() {
                return Err(err(format!("non-finite angle `{f}`")));
            }
            a
        } else {
            0.0
        };
        gl.push(Instruction { op, qubits, angle });
    }
    Ok(gl)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvInitReport {
    pub eta: f64,
    /// Fidelity with the exact two-site ground state for every convention.
    pub fidelities: Vec<(CryConvention, f64)>,
}

impl EnvInitReport {
    pub fn pinned(&self) -> f64 {
        self.fidelities.iter().find(|(c, _)| *c == CryConvention::PINNED).map(|(_, f)| *f).unwrap_or(f64::NAN)
    }

    pub fn best(&self) -> (CryConvention, f64) {
        // first maximum wins, so the pinned convention is preferred on ties
        self.fidelities.iter().copied().fold((CryConvention::PINNED, f64::NEG_INFINITY), |best, c| {
            if c.1 > best.1 + 1e-12 {
                c
            } else {
                best
            }
        })
    }
}

impl fmt::Display for EnvInitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "environment initialization, eta = {}", self.eta)?;
        for (c, fid) in &self.fidelities {
            writeln!(f, "  {c}: fidelity {fid:.6}")?;
        }
        let (c, fid) = self.best();
        write!(f, "  best: {c} ({fid:.6})")
    }
}

/// Runs the two environment qubits of [`init_circuit`] (H, CRY, CNOT) under
/// each CRY reading and compares with the exact ground state of the
/// two-site environment Hamiltonian.
pub fn env_init_report(params: &TfimParams, eta: f64) -> Result<EnvInitReport> {
    let (target, _) = exact_ground(&environment_terms(params, 2))?;
    let fidelities = CryConvention::all()
        .into_iter()
        .map(|conv| {
            let mut sv = StateVector::basis(2, 0)?;
            sv.apply_one(&Instruction::one(Op::H, 1, 0.0).matrix(), 0)?;
            sv.apply_two(&Instruction::two(Op::CRY, 1, 2, eta).matrix_with(conv), 0, 1)?;
            sv.apply_two(&Instruction::two(Op::CNOT, 1, 2, 0.0).matrix(), 0, 1)?;
            Ok((conv, sv.fidelity(&target)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvInitReport { eta, fidelities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hamiltonian_terms, pauli_x, pauli_y, pauli_z, trotter_layers};
    use crate::oracle::{self, operator_distance};
    use proptest::prelude::*;

    fn taylor_exp(gen: &Tensor, scale: C64) -> Tensor {
        let n = gen.shape()[0];
        let mut term = Tensor::identity(n);
        let mut sum = Tensor::identity(n);
        for k in 1..40 {
            term = term.matmul(gen).unwrap().scale(scale / k as f64);
            sum = Tensor::from_fn(&[n, n], |ix| sum.get(ix) + term.get(ix));
        }
        sum
    }

    fn kron(a: &Tensor, b: &Tensor) -> Tensor {
        Tensor::from_fn(&[4, 4], |ix| a.get(&[ix[0] / 2, ix[1] / 2]) * b.get(&[ix[0] % 2, ix[1] % 2]))
    }

    #[test]
    fn angle_substitution() {
        let p = TfimParams::standard(4, 2);
        let a = angles_from(&p, 0.1);
        assert!((a.phi_sys + 0.3).abs() < 1e-15 && (a.theta_sys + 0.6).abs() < 1e-15);
        assert!((a.theta_h + 0.6).abs() < 1e-15 && (a.phi_env + 0.1).abs() < 1e-15);
        let zero = angles_from(&p, 0.0);
        assert!([zero.phi_sys, zero.phi_env, zero.theta_sys, zero.theta_env, zero.theta_h].iter().all(|x| *x == 0.0));
        let d = angles_from(&p, 0.2);
        assert_eq!(d.theta_env, 2.0 * a.theta_env);
        assert_eq!(d.phi_sys, 2.0 * a.phi_sys);
    }

    #[test]
    fn rotation_conventions() {
        for a in [0.3, -1.2, 2.5] {
            let i = C64::new(0.0, -a / 2.0);
            assert!(Instruction::one(Op::RX, 1, a).matrix().max_abs_diff(&taylor_exp(&pauli_x(), i)).unwrap() < 1e-14);
            assert!(Instruction::one(Op::RY, 1, a).matrix().max_abs_diff(&taylor_exp(&pauli_y(), i)).unwrap() < 1e-14);
            let zz = kron(&pauli_z(), &pauli_z());
            assert!(Instruction::two(Op::RZZ, 1, 2, a).matrix().max_abs_diff(&taylor_exp(&zz, i)).unwrap() < 1e-13);
        }
    }

    #[test]
    fn step_circuit_matches_layers() {
        let p = TfimParams { j_sys: 1.5, g_sys: 0.7, j_env: 0.4, g_env: 1.1, h: 2.0, n_init: 2, m_init: 2 };
        for n in 1..4 {
            let gl = trotter_step_circuit(&p, n, 4, 0.1).unwrap();
            let circuit = oracle::gate_list_unitary(&gl, 4).unwrap();
            let layers = oracle::layers_unitary(&trotter_layers(&p, n, 0.1).unwrap(), 4).unwrap();
            assert!(operator_distance(&circuit, &layers) <= 1e-12);
        }
    }

    #[test]
    fn boundary_parity_does_not_change_the_step() {
        // same couplings everywhere except where the boundary sits
        let p = TfimParams { j_sys: 1.0, g_sys: 1.0, j_env: 1.0, g_env: 1.0, h: 2.5, n_init: 3, m_init: 3 };
        let odd = trotter_step_circuit(&p, 3, 6, 0.1).unwrap();
        let hosted = |gl: &GateList| gl.gates().position(|g| g.op == Op::RZZ && g.qubits == [3, 4]).unwrap();
        let first_even = odd.gates().position(|g| g.op == Op::RZZ && g.qubits == [2, 3]).unwrap();
        assert!(hosted(&odd) < first_even);
        let p2 = TfimParams { n_init: 2, m_init: 4, ..p };
        let even = trotter_step_circuit(&p2, 2, 6, 0.1).unwrap();
        assert!(even.gates().position(|g| g.op == Op::RZZ && g.qubits == [2, 3]).unwrap() > hosted(&even));
        // the h-bond sits in the even layer for N = 2; moving it by hand to the
        // odd layer gives the same unitary since all ZZ terms commute
        let mut moved = even.clone();
        let idx = moved
            .items
            .iter()
            .position(|i| matches!(i, Item::Gate(g) if g.op == Op::RZZ && g.qubits == [2, 3]))
            .unwrap();
        let gate = moved.items.remove(idx);
        moved.items.insert(6, gate);
        let u1 = oracle::gate_list_unitary(&even, 6).unwrap();
        let u2 = oracle::gate_list_unitary(&moved, 6).unwrap();
        assert!(operator_distance(&u1, &u2) < 1e-13);
    }

    #[test]
    fn six_qubit_step_pattern() {
        let p = TfimParams { j_sys: 3.0, g_sys: 3.0, j_env: 1.0, g_env: 1.0, h: 2.0, n_init: 4, m_init: 2 };
        let gl = trotter_step_circuit(&p, 4, 6, 0.1).unwrap();
        assert_eq!(gl.gate_count(Op::RX), 12);
        assert_eq!(gl.gate_count(Op::RZZ), 5);
        let zz: Vec<([usize; 2], f64)> = gl.gates().filter(|g| g.op == Op::RZZ).map(|g| (g.qubits, g.angle)).collect();
        let want = [([1, 2], -0.6), ([3, 4], -0.6), ([5, 6], -0.2), ([2, 3], -0.6), ([4, 5], -0.4)];
        for ((q, a), (wq, wa)) in zz.iter().zip(want) {
            assert_eq!(*q, wq);
            assert!((a - wa).abs() < 1e-15);
        }
        let rx: Vec<f64> = gl.gates().take(6).map(|g| g.angle).collect();
        assert!((rx[3] + 0.3).abs() < 1e-15 && (rx[4] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn gate_count_per_step() {
        for len in 2..9 {
            let p = TfimParams::standard(1, len - 1);
            let gl = trotter_step_circuit(&p, 1, len, 0.1).unwrap();
            assert_eq!(gl.gate_count(Op::RX), 2 * len);
            assert_eq!(gl.gate_count(Op::RZZ), len - 1);
        }
    }

    #[test]
    fn init_circuit_system_block() {
        let gl = init_circuit(4, 2, 0.0).unwrap();
        let mut sv = StateVector::basis(6, 0).unwrap();
        oracle::apply_gate_list(&mut sv, &gl).unwrap();
        // η = 0: environment block is (|00⟩ + |11⟩)/√2 as well
        let mut want = vec![ZERO; 64];
        for sys in [0b00_00usize, 0b00_11] {
            for env in [0b00usize, 0b11] {
                want[(sys << 2) | env] = C64::new(0.5, 0.0);
            }
        }
        assert!(sv.amplitudes().iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-15));
        assert!(matches!(init_circuit(5, 2, ETA_INIT), Err(Error::Unsupported(_))));
    }

    #[test]
    fn env_init_fidelity_is_reported_per_convention() {
        let p = TfimParams { j_sys: 3.0, g_sys: 3.0, j_env: 1.0, g_env: 1.0, h: 3.0, n_init: 4, m_init: 2 };
        let report = env_init_report(&p, ETA_INIT).unwrap();
        assert_eq!(report.fidelities.len(), 4);
        // independent closed form for the pinned wiring:
        // H, CRY(η), CNOT on |00⟩ gives (|00⟩ + sin(η/2)|10⟩ + cos(η/2)|11⟩)/√2
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let a = 1.0 / (2.0 * (1.0 + r * r)).sqrt();
        let (c, s) = ((ETA_INIT / 2.0).cos(), (ETA_INIT / 2.0).sin());
        let overlap = (a + a * c + a * r * s) / 2f64.sqrt();
        assert!((report.pinned() - overlap * overlap).abs() < 1e-12);
        assert!(report.pinned() < 0.9);
        assert!(report.best().1 >= report.pinned());
        assert!(report.to_string().contains("best"));
    }

    #[test]
    fn serialization_examples() {
        let mut gl = GateList::default();
        assert_eq!(serialize(&gl), "");
        assert_eq!(parse("").unwrap(), gl);
        gl.push(Instruction::one(Op::RX, 1, -0.3));
        let text = serialize(&gl);
        assert_eq!(text, "RX 1 -0.300000000000\n");
        assert_eq!(parse(&text).unwrap(), gl);
    }

    #[test]
    fn angle_formatting_keeps_twelve_digits() {
        for (x, s) in [(0.0, "0.00000000000"), (1.107, "1.10700000000"), (-0.6, "-0.600000000000"), (12.5, "12.5000000000")] {
            assert_eq!(format_angle(x), s);
        }
        let x = 0.1f64 + 0.2;
        assert_eq!(format_angle(x).parse::<f64>().unwrap(), x);
        assert_eq!(format_angle(1e-7), "0.000000100000000000");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("RX 1 0.1\nFOO 2\n", 2),
            ("# c\n\nRZZ 1 0.5\n", 3),
            ("CNOT 2 2\n", 1),
            ("H 0\n", 1),
            ("RY 1 abc\n", 1),
            ("H 1 0.5\n", 1),
        ];
        for (text, line) in cases {
            match parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} parsed to {other:?}"),
            }
        }
    }

    #[test]
    fn full_program_round_trips_and_replays() {
        let p = TfimParams { j_sys: 3.0, g_sys: 3.0, j_env: 1.0, g_env: 1.0, h: 3.0, n_init: 4, m_init: 2 };
        let program = evaporation_program(&p, 0.1, 2, true).unwrap();
        let text = serialize(&program);
        assert!(text.contains("# evaporation event\n"));
        assert_eq!(text.matches("# evaporation event").count(), 3);
        let back = parse(&text).unwrap();
        assert_eq!(back, program);
        let u1 = oracle::gate_list_unitary(&program, 6).unwrap();
        let u2 = oracle::gate_list_unitary(&back, 6).unwrap();
        assert!(operator_distance(&u1, &u2) < 1e-12);
    }

    #[test]
    fn mps_replay_agrees_with_oracle() {
        let p = TfimParams { j_sys: 3.0, g_sys: 3.0, j_env: 1.0, g_env: 1.0, h: 3.0, n_init: 4, m_init: 2 };
        let program = evaporation_program(&p, 0.1, 2, true).unwrap();
        let mut psi = MpsState::from_product(&[0; 6]).unwrap();
        program.apply_to_mps(&mut psi, &TruncationPolicy::exact()).unwrap();
        let mut sv = StateVector::basis(6, 0).unwrap();
        oracle::apply_gate_list(&mut sv, &program).unwrap();
        assert!(StateVector::from_mps(&psi).unwrap().fidelity(&sv) >= 1.0 - 1e-10);
    }

    #[test]
    fn reversed_two_qubit_gates_on_mps() {
        let mut gl = GateList::default();
        gl.push(Instruction::one(Op::H, 2, 0.0));
        gl.push(Instruction::two(Op::CRY, 2, 1, 0.8));
        gl.push(Instruction::two(Op::CNOT, 3, 2, 0.0));
        let mut psi = MpsState::from_product(&[0, 0, 1]).unwrap();
        gl.apply_to_mps(&mut psi, &TruncationPolicy::exact()).unwrap();
        let mut sv = StateVector::basis(3, 1).unwrap();
        oracle::apply_gate_list(&mut sv, &gl).unwrap();
        assert!(StateVector::from_mps(&psi).unwrap().fidelity(&sv) > 1.0 - 1e-12);
        let mut far = GateList::default();
        far.push(Instruction::two(Op::CNOT, 1, 3, 0.0));
        assert!(matches!(far.apply_to_mps(&mut psi, &TruncationPolicy::exact()), Err(Error::Unsupported(_))));
        assert!(far.validate(2).is_err());
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        let ops = prop::sample::select(vec![Op::H, Op::RX, Op::RY, Op::RZZ, Op::CNOT, Op::CRY]);
        (ops, 1usize..9, 1usize..9, -10.0f64..10.0).prop_filter_map("distinct qubits", |(op, a, b, x)| {
            if op.arity() == 2 && a == b {
                return None;
            }
            let angle = if op.has_angle() { x } else { 0.0 };
            Some(if op.arity() == 1 { Instruction::one(op, a, angle) } else { Instruction::two(op, a, b, angle) })
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(gates in prop::collection::vec(arb_instruction(), 0..20), marks in prop::collection::vec("[a-z ]{0,12}", 0..3)) {
            let mut gl = GateList::default();
            for (k, g) in gates.into_iter().enumerate() {
                if let Some(m) = marks.get(k) {
                    gl.mark(m.trim());
                }
                gl.push(g);
            }
            prop_assert_eq!(parse(&serialize(&gl)).unwrap(), gl);
        }

        #[test]
        fn angles_scale_linearly(tau in 0.001f64..1.0) {
            let p = TfimParams::standard(4, 2);
            let (a, b) = (angles_from(&p, tau), angles_from(&p, 2.0 * tau));
            prop_assert_eq!(b.phi_sys, 2.0 * a.phi_sys);
            prop_assert_eq!(b.theta_h, 2.0 * a.theta_h);
            prop_assert_eq!(b.theta_env, 2.0 * a.theta_env);
        }
    }

    #[test]
    fn program_unitary_is_the_trotterized_evolution() {
        let p = TfimParams { j_sys: 1.0, g_sys: 1.0, j_env: 1.0, g_env: 1.0, h: 1.0, n_init: 2, m_init: 2 };
        let program = evaporation_program(&p, 0.01, 1, false).unwrap();
        // first interval only
        let first: GateList = GateList {
            items: program.items.iter().take_while(|i| !matches!(i, Item::Marker(m) if m == EVAPORATION_MARKER)).cloned().collect(),
        };
        let u = oracle::gate_list_unitary(&first, 4).unwrap();
        let exact = oracle::evolution_operator(&hamiltonian_terms(&p, 2).unwrap(), 0.01).unwrap();
        assert!(operator_distance(&u, &exact) < 1e-5);
    }
}
