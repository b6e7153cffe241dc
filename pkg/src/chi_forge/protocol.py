"""Two-step preparation of the chi-type four-qubit state and its execution
under the different levels of the model hierarchy."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .evolve import evolve_step_analytic, integrate_unitary
from .model import (
    ATOMS,
    AtomDrive,
    PhysicsError,
    SystemParams,
    build_h0,
    build_h_eff,
    build_h_full,
    build_h_ground,
    build_h_reduced,
    derive_params,
    retained_pairs,
    validate_regime,
)
from .statespace import HilbertSpace, StateVector, embed_many, ket, permute_factors, propagator, qubit_space

LABEL_ORDER = (3, 2, 1, 4)

BETA_WARN = 0.005
BETA_FAIL = 0.02
MIN_PROJECTION_WEIGHT = 0.5


class Engine(str, enum.Enum):
    ANALYTIC = "analytic"
    EFFECTIVE = "effective"
    REDUCED = "reduced"
    GROUND = "ground"
    FULL = "full"


class ErrorModel(str, enum.Enum):
    BETA_ONLY = "beta_only"
    FULL_PHASE = "full_phase"


@dataclass(frozen=True)
class TimingError:
    n1: float = 0.0
    n2: float = 0.0
    model: ErrorModel = ErrorModel.BETA_ONLY

    def __post_init__(self):
        object.__setattr__(self, "model", ErrorModel(self.model))
        for n in (self.n1, self.n2):
            if not abs(n) < 1:
                raise ValueError(f"timing error rates must satisfy |n| < 1, got {n}")

    def rate(self, step: int) -> float:
        return (self.n1, self.n2)[step] if step < 2 else 0.0


@dataclass(frozen=True)
class ScheduleStep:
    drives: tuple[AtomDrive, ...]
    duration: float
    expected_pairs: tuple[tuple[int, int], ...]
    beta: float
    constraints: tuple[dict, ...] = ()

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("step duration must be positive")
        used = [a for pair in self.expected_pairs for a in pair]
        if len(used) != len(set(used)):
            raise ValueError(f"expected pairs overlap: {self.expected_pairs}")


@dataclass(frozen=True)
class Protocol:
    params: SystemParams
    steps: tuple[ScheduleStep, ...]
    post_unitaries: tuple[tuple[int, np.ndarray], ...]
    target: StateVector
    label_order: tuple[int, ...] = LABEL_ORDER

    def __post_init__(self):
        if abs(self.target.norm - 1) > 1e-10:
            raise ValueError("target state must be normalized")
        for atom, u in self.post_unitaries:
            u = np.asarray(u)
            if np.max(np.abs(u.conj().T @ u - np.eye(2))) > 1e-10:
                raise ValueError(f"post unitary on atom {atom} is not unitary")

    @property
    def omega_s(self) -> float:
        return self.params.omega_s

    @property
    def total_time(self) -> float:
        return sum(s.duration for s in self.steps)

    def step_params(self, k: int, omega_s: float | None = None) -> SystemParams:
        p = self.params.with_drives(self.steps[k].drives)
        return p if omega_s is None else replace(p, omega_s=omega_s)


def choose_omega_s(target: float, t1: float) -> float:
    """Closest Omega_S to ``target`` with Omega_S * t1 an integer multiple of pi."""
    if target <= 0 or t1 <= 0:
        raise ValueError("target and t1 must be positive")
    n = round(target * t1 / math.pi)
    if n < 1:
        raise PhysicsError(f"Omega_S target {target} gives n = 0 half-periods within t1 = {t1}")
    return n * math.pi / t1


def tune_partner_rabi(p: SystemParams) -> SystemParams:
    """Rescale the drives of atoms 3 and 4 so that beta_34 equals beta_12 exactly."""
    dp = derive_params(p)
    b12, b34 = dp.beta_pair(1, 2), dp.beta_pair(3, 4)
    if not b12 or not b34:
        raise PhysicsError("both pairs must be driven to tune their couplings")
    k = math.sqrt(b12 / b34)
    d = list(p.drives)
    d[2] = replace(d[2], rabi=d[2].rabi * k)
    d[3] = replace(d[3], rabi=d[3].rabi * k)
    return p.with_drives(d)


def _printed_state(terms: Sequence[tuple[str, complex]], order=ATOMS) -> StateVector:
    """State from kets written with atom labels in ``order``, returned in physical order."""
    printed = HilbertSpace(tuple((str(a), 2) for a in order))
    amps = np.zeros(16, dtype=complex)
    for text, c in terms:
        amps[printed.flat_index(["gs".index(ch) for ch in text])] += c
    return permute_factors(StateVector(printed, amps), [str(a) for a in ATOMS]).normalize()


def chi_target() -> StateVector:
    r = 1 / (2 * math.sqrt(2))
    kets = [
        ("gggg", r), ("ggss", -r), ("gsgs", -r), ("sggs", r),
        ("ssgg", r), ("gssg", r), ("ssss", r), ("sgsg", r),
    ]
    return _printed_state(kets, LABEL_ORDER)


def intermediate_after_step1() -> StateVector:
    return _printed_state([("gggg", 0.5), ("ggss", -0.5j), ("ssgg", -0.5j), ("ssss", -0.5)])


def reorder_amplitudes(amps: np.ndarray, order: Sequence[int] = LABEL_ORDER) -> np.ndarray:
    """Amplitudes of a physical-order four-qubit state, re-indexed so ket position k is atom order[k]."""
    axes = [a - 1 for a in order]
    return np.asarray(amps).reshape(2, 2, 2, 2).transpose(axes).reshape(-1)


def chi_protocol(p: SystemParams) -> Protocol:
    """Build the two-step schedule; ``p.drives`` are the first-step drives and
    ``p.omega_s`` is the target for the strong g-s drive."""
    for l, d in zip(ATOMS, p.drives):
        if d.rabi <= 0:
            raise PhysicsError(f"atom {l} must be driven in the first step")
    dp1 = derive_params(p)
    kept = {(l, m) for l, m, _ in retained_pairs(p)}
    if kept != {(1, 2), (3, 4)}:
        raise PhysicsError(f"first step must couple exactly pairs (1,2) and (3,4); coupled pairs are {sorted(kept)}")
    b12, b34 = dp1.beta_pair(1, 2), dp1.beta_pair(3, 4)
    mismatch = abs(b34 / b12 - 1)
    if mismatch > BETA_FAIL:
        raise PhysicsError(
            f"beta_12 = {b12:.6g} and beta_34 = {b34:.6g} differ by {100 * mismatch:.2f}% (limit {100 * BETA_FAIL:g}%); "
            "no single duration gives both pairs a quarter rotation"
        )
    if mismatch > BETA_WARN:
        warnings.warn(f"beta_12 and beta_34 differ by {100 * mismatch:.2f}%", stacklevel=2)
    t1 = math.pi / (4 * b12)

    drive = p.drives[0]
    off = AtomDrive(0.0, drive.detuning1)
    drives2 = (off, drive, drive, off)
    dp2 = derive_params(p.with_drives(drives2))
    b23 = dp2.beta_pair(2, 3)
    t2 = math.pi / (4 * b23)

    omega_s = choose_omega_s(p.omega_s, t1)
    base = replace(p, omega_s=omega_s)

    report = validate_regime(base)
    if not report.passed:
        failing = [c.name for c in report.conditions if not c.passed]
        warnings.warn(f"regime conditions not met: {failing}", stacklevel=2)

    def constraints(t, betas):
        out = [{"name": "Omega_S t / pi", "value": omega_s * t / math.pi, "target": round(omega_s * t / math.pi)}]
        out += [{"name": f"beta_{l}{m} t", "value": b * t, "target": math.pi / 4} for l, m, b in betas]
        for c in out:
            c["ok"] = abs(c["value"] - c["target"]) <= 1e-6 * max(1.0, abs(c["target"]))
        return tuple(out)

    step1 = ScheduleStep(p.drives, t1, ((1, 2), (3, 4)), b12, constraints(t1, [(1, 2, b12), (3, 4, b34)]))
    step2 = ScheduleStep(drives2, t2, ((2, 3),), b23, constraints(t2, [(2, 3, b23)]))
    phase = np.diag([1, 1j])
    return Protocol(base, (step1, step2), ((1, phase), (3, phase)), chi_target())


@dataclass
class ProtocolResult:
    state: StateVector
    step_states: list[StateVector]
    engine: Engine
    vacuum_weight: float = 1.0
    max_leakage: float = 0.0
    leakage_samples: list[tuple[float, float]] = field(default_factory=list)
    max_step_drift: float = 0.0
    steps: int = 0

    def fidelity(self, target: StateVector) -> float:
        return float(abs(np.vdot(target.amplitudes, self.state.amplitudes)) ** 2)


def engine_space(engine: Engine, fock_dim: int) -> HilbertSpace:
    engine = Engine(engine)
    if engine in (Engine.ANALYTIC, Engine.EFFECTIVE):
        return qubit_space()
    if engine is Engine.FULL:
        return qubit_space(fock_dim, levels=3)
    return qubit_space(fock_dim)


def embed_qubits(psi: StateVector, space: HilbertSpace) -> StateVector:
    """Place a four-qubit state in ``space`` with the (g, s) levels and the resonator in vacuum."""
    if psi.space == space:
        return psi
    if psi.space != qubit_space():
        raise ValueError("only four-qubit states can be embedded")
    out = np.zeros(space.dims, dtype=complex)
    idx = (slice(0, 2),) * 4 + ((0,) if len(space.dims) == 5 else ())
    out[idx] = psi.tensor()
    return StateVector(space, out.reshape(-1))


def ground_block(psi: StateVector) -> np.ndarray:
    """Amplitudes with every atom in (g, s) and the resonator in vacuum."""
    t = psi.tensor()
    idx = (slice(0, 2),) * 4 + ((0,) if len(t.shape) == 5 else ())
    return t[idx].reshape(-1)


def excited_population(amps: np.ndarray, space: HilbertSpace) -> float:
    """Probability that at least one atom is outside its (g, s) manifold."""
    t = np.asarray(amps).reshape(space.dims)
    inside = t[(slice(0, 2),) * 4]
    return float(max(0.0, 1.0 - np.vdot(inside, inside).real))


def run_protocol(
    proto: Protocol,
    psi0: StateVector | None = None,
    engine: Engine | str = Engine.ANALYTIC,
    err: TimingError | None = None,
    steps_per_period: int = 100,
    strict: bool = True,
    leakage_every: int = 50,
    apply_post: bool = True,
    builder_options: dict | None = None,
    fock_dim: int | None = None,
) -> ProtocolResult:
    """Run every step for t_i (1 + n_i) under ``engine`` and return the four-qubit result.

    Each step is evaluated with its own clock starting at zero. Under the
    beta-only error model Omega_S is rescaled within the step so that its
    accumulated angle keeps the nominal value. Resonator engines are projected
    onto the vacuum (and the full model onto the (g, s) levels); the norm kept
    is reported as ``vacuum_weight``. ``builder_options`` is forwarded to the
    effective or reduced Hamiltonian builder; ``fock_dim`` overrides the
    resonator truncation.
    """
    engine = Engine(engine)
    err = err or TimingError()
    opts = dict(builder_options or {})
    if fock_dim is not None:
        proto = replace(proto, params=replace(proto.params, fock_dim=fock_dim))
    fock = proto.params.fock_dim
    space = engine_space(engine, fock)
    psi = embed_qubits(psi0 if psi0 is not None else ket(qubit_space(), "gggg"), space)
    step_states = []
    leak_samples: list[tuple[float, float]] = []
    max_drift = 0.0
    total_steps = 0
    clock = 0.0

    for k, step in enumerate(proto.steps):
        duration = step.duration * (1 + err.rate(k))
        omega_s = proto.omega_s
        if err.model is ErrorModel.BETA_ONLY:
            omega_s = proto.omega_s * step.duration / duration
        p = proto.step_params(k, omega_s)

        if engine is Engine.ANALYTIC:
            pairs = [(l, m, step.beta) for l, m in step.expected_pairs]
            psi = evolve_step_analytic(pairs, omega_s, duration, psi, p.drive_sign)
        else:
            if engine is Engine.EFFECTIVE:
                H = build_h_eff(p, **opts)
            elif engine is Engine.REDUCED:
                H = build_h_reduced(p, **opts)
            elif engine is Engine.GROUND:
                H = build_h_ground(p)
            else:
                H = build_h_full(p)
            monitor = None
            if engine is Engine.FULL:
                offset = clock
                monitor = (leakage_every, lambda t, a: leak_samples.append((offset + t, excited_population(a, space))))
            psi, info = integrate_unitary(H, psi, 0.0, duration, steps_per_period, monitor=monitor, full_output=True)
            max_drift = max(max_drift, info["max_step_drift"])
            total_steps += info["steps"]
            if engine in (Engine.EFFECTIVE, Engine.REDUCED):
                psi = propagator(build_h0(p, space), duration) @ psi
        clock += duration
        step_states.append(_project(psi)[0])

    final, weight = _project(psi)
    if strict and weight < MIN_PROJECTION_WEIGHT:
        leak = max((v for _, v in leak_samples), default=0.0)
        raise PhysicsError(
            f"{engine.value} engine kept only {weight:.3f} of the norm in the (g, s) x vacuum block "
            f"(max excited population {leak:.3f}); the reduced description does not hold"
        )
    if apply_post:
        post = embed_many({a: u for a, u in proto.post_unitaries}, qubit_space()) if proto.post_unitaries else None
        if post is not None:
            final = post @ final
    return ProtocolResult(
        state=final,
        step_states=step_states,
        engine=engine,
        vacuum_weight=weight,
        max_leakage=max((v for _, v in leak_samples), default=0.0),
        leakage_samples=leak_samples,
        max_step_drift=max_drift,
        steps=total_steps,
    )


def _project(psi: StateVector) -> tuple[StateVector, float]:
    if psi.space == qubit_space():
        return psi, 1.0
    block = ground_block(psi)
    w = float(np.vdot(block, block).real)
    if w == 0:
        return StateVector(qubit_space(), block), 0.0
    return StateVector(qubit_space(), block / math.sqrt(w)), w


def protocol_to_dict(proto: Protocol) -> dict:
    p = proto.params
    return {
        "params": params_to_dict(p),
        "steps": [
            {
                "drives": [{"rabi": d.rabi, "detuning1": d.detuning1} for d in s.drives],
                "duration": s.duration,
                "expected_pairs": [list(pr) for pr in s.expected_pairs],
                "beta": s.beta,
            }
            for s in proto.steps
        ],
        "post_unitaries": [
            {"atom": a, "matrix": [[[z.real, z.imag] for z in row] for row in np.asarray(u, dtype=complex)]}
            for a, u in proto.post_unitaries
        ],
        "label_order": list(proto.label_order),
    }


def protocol_from_dict(data: dict) -> Protocol:
    steps = tuple(
        ScheduleStep(
            tuple(AtomDrive(**d) for d in s["drives"]),
            float(s["duration"]),
            tuple(tuple(pr) for pr in s["expected_pairs"]),
            float(s["beta"]),
        )
        for s in data["steps"]
    )
    post = tuple(
        (int(u["atom"]), np.array([[complex(*z) for z in row] for row in u["matrix"]]))
        for u in data.get("post_unitaries", [])
    )
    return Protocol(
        params_from_dict(data["params"]),
        steps,
        post,
        chi_target(),
        tuple(data.get("label_order", LABEL_ORDER)),
    )


def params_to_dict(p: SystemParams) -> dict:
    return {
        "drives": [{"rabi": d.rabi, "detuning1": d.detuning1} for d in p.drives],
        "detuning2": p.detuning2,
        "omega_s": p.omega_s,
        "fock_dim": p.fock_dim,
        "drive_sign": p.drive_sign,
    }


def params_from_dict(d: dict) -> SystemParams:
    return SystemParams(
        drives=tuple(AtomDrive(**x) for x in d["drives"]),
        detuning2=float(d["detuning2"]),
        omega_s=float(d.get("omega_s", 0.0)),
        fock_dim=d.get("fock_dim", 5),
        drive_sign=int(d.get("drive_sign", 1)),
    )
