"""Fidelity sweeps, model-hierarchy comparisons, entanglement and
decoherence diagnostics, and SI-unit feasibility numbers."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, is_dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .evolve import CollapseChannel, TimeDependentOperator, integrate_lindblad
from .model import ATOMS, RegimeReport, SystemParams, build_h0, build_h_eff, retained_pairs, validate_regime
from .protocol import (
    Engine,
    ErrorModel,
    Protocol,
    ScheduleStep,
    TimingError,
    chi_protocol,
    chi_target,
    params_to_dict,
    run_protocol,
)
from .statespace import StateVector, embed_many, fidelity, ket, partial_trace, qubit_space, von_neumann_entropy

REFERENCE_FIDELITY_AT_2PCT = 0.96
G_SI_DEFAULT = 2 * math.pi * 200e6
TAU_DEFAULT = 1.5e-6

BIPARTITIONS = (
    ("(3,2)|(1,4)", (3, 2)),
    ("(3,1)|(2,4)", (3, 1)),
    ("(3,4)|(2,1)", (3, 4)),
)


@dataclass
class SweepGrid:
    n1_values: np.ndarray
    n2_values: np.ndarray
    fidelities: np.ndarray
    model: str
    engine: str
    params: dict

    def __post_init__(self):
        self.n1_values = np.asarray(self.n1_values, dtype=float)
        self.n2_values = np.asarray(self.n2_values, dtype=float)
        self.fidelities = np.asarray(self.fidelities, dtype=float)
        if self.fidelities.shape != (len(self.n1_values), len(self.n2_values)):
            raise ValueError("fidelity grid shape does not match the axes")
        for axis in (self.n1_values, self.n2_values):
            d = np.diff(axis)
            if len(d) and not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("sweep axes must be monotone")

    def value_at(self, n1: float, n2: float, tol: float = 1e-12) -> float:
        i = np.flatnonzero(np.abs(self.n1_values - n1) <= tol)
        j = np.flatnonzero(np.abs(self.n2_values - n2) <= tol)
        if not len(i) or not len(j):
            raise KeyError(f"({n1}, {n2}) is not a grid point")
        return float(self.fidelities[i[0], j[0]])

    def rows(self):
        for i, n1 in enumerate(self.n1_values):
            for j, n2 in enumerate(self.n2_values):
                yield n1, n2, self.fidelities[i, j]


def _sweep_row(args):
    proto, n1, n2_values, model, engine, spp = args
    return [
        run_protocol(proto, engine=engine, err=TimingError(n1, n2, model), steps_per_period=spp).fidelity(proto.target)
        for n2 in n2_values
    ]


def timing_error_sweep(
    p: SystemParams,
    n1_values: Sequence[float],
    n2_values: Sequence[float],
    model: ErrorModel | str = ErrorModel.BETA_ONLY,
    engine: Engine | str = Engine.ANALYTIC,
    jobs: int = 1,
    steps_per_period: int = 100,
) -> SweepGrid:
    model, engine = ErrorModel(model), Engine(engine)
    proto = chi_protocol(p)
    n2_values = [float(x) for x in n2_values]
    tasks = [(proto, float(n1), n2_values, model, engine, steps_per_period) for n1 in n1_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    return SweepGrid(n1_values, n2_values, np.array(rows), model.value, engine.value, params_to_dict(proto.params))


def write_sweep_csv(grid: SweepGrid, path) -> Path:
    path = Path(path)
    lines = ["n1,n2,fidelity,model,engine"]
    for n1, n2, f in grid.rows():
        lines.append(f"{n1:.17g},{n2:.17g},{f:.17g},{grid.model},{grid.engine}")
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_sweep_csv(path) -> SweepGrid:
    rows = Path(path).read_text().splitlines()
    if rows[0] != "n1,n2,fidelity,model,engine":
        raise ValueError(f"unexpected header {rows[0]!r}")
    recs = [r.split(",") for r in rows[1:]]
    n1 = sorted({float(r[0]) for r in recs})
    n2 = sorted({float(r[1]) for r in recs})
    grid = np.full((len(n1), len(n2)), np.nan)
    for r in recs:
        grid[n1.index(float(r[0])), n2.index(float(r[1]))] = float(r[2])
    return SweepGrid(n1, n2, grid, recs[0][3], recs[0][4], {})


def sweep_summary(grids: Sequence[SweepGrid], probe=(0.02, 0.02)) -> dict:
    out = {"probe": list(probe), "reference_value_at_probe": REFERENCE_FIDELITY_AT_2PCT, "grids": []}
    for g in grids:
        entry = {"model": g.model, "engine": g.engine, "points": int(g.fidelities.size)}
        try:
            entry["origin"] = g.value_at(0.0, 0.0)
        except KeyError:
            entry["origin"] = None
        try:
            v = g.value_at(*probe)
            entry["at_probe"] = v
            entry["difference_from_reference"] = v - REFERENCE_FIDELITY_AT_2PCT
            entry["matches_reference_within_0.01"] = abs(v - REFERENCE_FIDELITY_AT_2PCT) <= 0.01
        except KeyError:
            entry["at_probe"] = None
        entry["min"] = float(np.min(g.fidelities))
        entry["max"] = float(np.max(g.fidelities))
        out["grids"].append(entry)
    out["note"] = (
        "The error model behind the reference value is not stated; both models are reported "
        "and no agreement is forced."
    )
    return out


def entanglement_diagnostics(psi: StateVector) -> list[tuple[str, float]]:
    """Entanglement entropy (ebits) across each 2|2 split, labelled in the 3,2,1,4 numbering."""
    return [(name, von_neumann_entropy(partial_trace(psi, [str(a) for a in keep]))) for name, keep in BIPARTITIONS]


@dataclass
class EngineOutcome:
    engine: str
    state: StateVector
    vacuum_weight: float
    max_leakage: float
    max_step_drift: float
    steps: int
    fidelity_to_target: float | None = None
    leakage_samples: list = field(default_factory=list)


@dataclass
class LadderReport:
    mode: str
    duration: float
    omega_s: float
    outcomes: dict[str, EngineOutcome]
    pairs: list[dict]
    regime: RegimeReport
    checks: dict = field(default_factory=dict)

    def fidelity(self, a: str, b: str) -> float:
        for pr in self.pairs:
            if {pr["a"], pr["b"]} == {a, b}:
                return pr["fidelity"]
        raise KeyError((a, b))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "duration": self.duration,
            "omega_s": self.omega_s,
            "engines": {
                k: {
                    "vacuum_weight": o.vacuum_weight,
                    "max_leakage": o.max_leakage,
                    "max_step_drift": o.max_step_drift,
                    "steps": o.steps,
                    "fidelity_to_target": o.fidelity_to_target,
                }
                for k, o in self.outcomes.items()
            },
            "pairs": self.pairs,
            "regime": self.regime.to_dict(),
            "checks": self.checks,
        }


LADDER_ENGINES = (Engine.FULL, Engine.GROUND, Engine.REDUCED, Engine.EFFECTIVE, Engine.ANALYTIC)


def fixed_time_protocol(p: SystemParams, t: float) -> Protocol:
    """A single step of length t with the drives of ``p``; no local corrections."""
    pairs = tuple((l, m) for l, m, _ in retained_pairs(p))
    used = [a for pr in pairs for a in pr]
    if len(used) != len(set(used)):
        pairs = ()
    betas = [b for _, _, b in retained_pairs(p)]
    step = ScheduleStep(p.drives, t, pairs, betas[0] if betas else 0.0)
    return Protocol(p, (step,), (), chi_target())


def approximation_ladder(
    p: SystemParams,
    psi0: StateVector | None = None,
    t: float | None = None,
    engines: Sequence[Engine | str] = LADDER_ENGINES,
    steps_per_period: int = 100,
    extra_checks: bool = True,
) -> LadderReport:
    """Final states of each model level and their pairwise fidelities.

    Without ``t`` the full two-step schedule of :func:`chi_protocol` is run;
    with ``t`` the drives of ``p`` act for a single step of that length and
    ``p.omega_s`` is used as given.
    """
    engines = [Engine(e) for e in engines]
    if t is None:
        proto = chi_protocol(p)
        mode = "protocol"
    else:
        proto = fixed_time_protocol(p, t)
        mode = "fixed_time"
        engines = [e for e in engines if e is not Engine.ANALYTIC]

    def run(engine, **opts):
        return run_protocol(proto, psi0, engine, steps_per_period=steps_per_period, strict=False, **opts)

    outcomes = {}
    for e in engines:
        r = run(e)
        fid = r.fidelity(proto.target) if mode == "protocol" else None
        outcomes[e.value] = EngineOutcome(
            e.value, r.state, r.vacuum_weight, r.max_leakage, r.max_step_drift, r.steps, fid, r.leakage_samples
        )
    pairs = [
        {"a": a, "b": b, "fidelity": fidelity(outcomes[a].state, outcomes[b].state)}
        for a, b in combinations(list(outcomes), 2)
    ]
    report = LadderReport(mode, proto.total_time, proto.omega_s, outcomes, pairs, validate_regime(proto.params))

    if extra_checks and Engine.REDUCED.value in outcomes:
        red = outcomes[Engine.REDUCED.value].state
        conv = {}
        for name in ("printed", "sum"):
            r = run(Engine.EFFECTIVE, builder_options={"convention": name, "keep_all": True})
            conv[name] = fidelity(red, r.state)
        conv["supported"] = max(("printed", "sum"), key=lambda k: conv[k])
        report.checks["pair_phase_convention"] = conv

        bigger = run(Engine.REDUCED, fock_dim=proto.params.fock_dim + 1)
        report.checks["fock_convergence"] = {
            "fock_dim": proto.params.fock_dim,
            "state_infidelity_vs_next": 1 - fidelity(red, bigger.state),
            "passed": 1 - fidelity(red, bigger.state) < 1e-6,
        }
        if Engine.GROUND.value in outcomes:
            pulled = run(Engine.REDUCED, builder_options={"cavity_pull": True})
            gnd = outcomes[Engine.GROUND.value].state
            report.checks["cavity_pull"] = {
                "ground_vs_reduced": fidelity(gnd, red),
                "ground_vs_reduced_with_pull": fidelity(gnd, pulled.state),
            }
    return report


def lindblad_channels(gamma_relax: float, gamma_dephase: float) -> list[CollapseChannel]:
    """Per-qubit |g><s| decay and sigma_z dephasing on the four (g, s) qubits."""
    space = qubit_space()
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    out = []
    for l in ATOMS:
        out.append(CollapseChannel(embed_many({l: lower}, space), gamma_relax))
        out.append(CollapseChannel(embed_many({l: sz}, space), gamma_dephase))
    return out


@dataclass
class DecoherenceResult:
    fidelity_open: float
    fidelity_closed: float
    loss: float
    gamma_relax: float
    gamma_dephase: float
    total_time: float
    total_time_si: float
    first_order_estimate: float


def decoherence_impact(
    p: SystemParams,
    tau_r: float = TAU_DEFAULT,
    tau_d: float = TAU_DEFAULT,
    g_si: float = G_SI_DEFAULT,
    proto: Protocol | None = None,
    steps_per_period: int = 100,
) -> DecoherenceResult:
    """Fidelity lost to qubit relaxation and dephasing over the schedule.

    Runs H0 + H_eff on the (g, s) qubits with Lindblad channels, rates given in
    units of g through ``g_si`` (rad/s). Relaxation is |g><s| at 1/tau_r and
    dephasing is sigma_z at 1/(2 tau_d).
    """
    if tau_r <= 0 or tau_d <= 0:
        raise ValueError("relaxation and dephasing times must be positive")
    proto = proto or chi_protocol(p)
    g_relax = 1 / (tau_r * g_si)
    g_deph = 1 / (2 * tau_d * g_si)
    channels = lindblad_channels(g_relax, g_deph)
    space = qubit_space()
    rho0 = ket(space, "gggg").density()

    def evolve(chs):
        rho = rho0
        for k, step in enumerate(proto.steps):
            sp = proto.step_params(k)
            H = TimeDependentOperator(space, build_h0(sp).matrix) + build_h_eff(sp)
            rho = integrate_lindblad(H, chs, rho, 0.0, step.duration, steps_per_period)
        if proto.post_unitaries:
            U = embed_many({a: u for a, u in proto.post_unitaries}, space).matrix
            rho = type(rho)(space, U @ rho.matrix @ U.conj().T)
        return rho.expectation(proto.target)

    f_open = evolve(channels)
    f_closed = evolve([])
    T = proto.total_time
    T_si = T / g_si
    estimate = 4 * (T_si / tau_r + T_si / tau_d) / 2
    return DecoherenceResult(f_open, f_closed, f_closed - f_open, g_relax, g_deph, T, T_si, estimate)


@dataclass
class FeasibilityReport:
    g_si: float
    t1: float
    t2: float
    t1_si: float
    t2_si: float
    total_si: float
    tau_r: float
    tau_d: float
    ratio: float
    passed: bool
    regime: RegimeReport


def feasibility_report(
    p: SystemParams, g_si: float = G_SI_DEFAULT, tau_r: float = TAU_DEFAULT, tau_d: float = TAU_DEFAULT
) -> FeasibilityReport:
    if g_si <= 0:
        raise ValueError("g_si must be positive")
    proto = chi_protocol(p)
    t1, t2 = (s.duration for s in proto.steps)
    t1_si, t2_si = t1 / g_si, t2 / g_si
    total = t1_si + t2_si
    return FeasibilityReport(
        g_si, t1, t2, t1_si, t2_si, total, tau_r, tau_d, total / tau_r, total < tau_r / 3, validate_regime(proto.params)
    )


def jsonable(obj):
    """Convert reports (dataclasses, arrays, complex numbers) to JSON-ready values."""
    if isinstance(obj, RegimeReport):
        return obj.to_dict()
    if isinstance(obj, LadderReport):
        return obj.to_dict()
    if isinstance(obj, StateVector):
        return [[z.real, z.imag] for z in obj.amplitudes]
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
