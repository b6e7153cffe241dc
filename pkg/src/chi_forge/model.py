"""Physical parameters and the Hamiltonians of the four-atom resonator model.

Frequencies are in units of the atom-resonator coupling g and times in 1/g.
Atom levels are indexed g=0, s=1, r=2; the ground-manifold models keep only
g and s. Atoms are the factors "1".."4" and the resonator, when present, is
the last factor "c".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable

import numpy as np

from .evolve import SIGMA_X, TimeDependentOperator
from .statespace import HilbertSpace, Operator, embed_many, qubit_space

ATOMS = (1, 2, 3, 4)

# pairs whose detunings differ by more than this fraction of their coupling are dropped
R_KEEP = 1e-3


class PhysicsError(ValueError):
    """Parameters outside the domain where the derivation applies."""


@dataclass(frozen=True)
class AtomDrive:
    rabi: float = 0.0
    detuning1: float = 0.0

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError(f"Rabi frequency must be non-negative, got {self.rabi}")
        if self.rabi > 0 and self.detuning1 <= 0:
            raise ValueError("a driven atom needs a positive detuning")


@dataclass(frozen=True)
class SystemParams:
    drives: tuple[AtomDrive, AtomDrive, AtomDrive, AtomDrive]
    detuning2: float
    omega_s: float
    fock_dim: int = 5
    coupling: float = 1.0
    drive_sign: int = 1

    def __post_init__(self):
        drives = tuple(d if isinstance(d, AtomDrive) else AtomDrive(**d) for d in self.drives)
        if len(drives) != 4:
            raise ValueError("exactly four atom drives are required")
        object.__setattr__(self, "drives", drives)
        if self.detuning2 <= 0:
            raise ValueError("detuning2 must be positive")
        if self.omega_s < 0:
            raise ValueError("omega_s must be non-negative")
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")
        if self.coupling != 1.0:
            raise ValueError("frequencies are expressed in units of g, so coupling must be 1")
        if self.drive_sign not in (1, -1):
            raise ValueError("drive_sign must be +1 or -1")

    def with_drives(self, drives) -> "SystemParams":
        return replace(self, drives=tuple(drives))

    @property
    def driven(self) -> tuple[int, ...]:
        return tuple(l for l, d in zip(ATOMS, self.drives) if d.rabi > 0)


def reference_params(omega_s: float = 10.0, fock_dim: int = 5) -> SystemParams:
    """The first-step parameter set quoted for the feasibility estimate."""
    return SystemParams(
        drives=(AtomDrive(1.0, 10.0), AtomDrive(1.0, 10.0), AtomDrive(0.725, 10.5), AtomDrive(0.725, 10.5)),
        detuning2=11.0,
        omega_s=omega_s,
        fock_dim=fock_dim,
    )


@dataclass(frozen=True)
class DerivedParams:
    eta: tuple[float, ...]
    lam: tuple[float, ...]
    delta: tuple[float, ...]
    xi: float
    alpha: tuple[float, ...]
    beta: tuple[tuple[float, ...], ...]

    def beta_pair(self, l: int, m: int) -> float:
        return self.beta[l - 1][m - 1]


def derive_params(p: SystemParams) -> DerivedParams:
    g = p.coupling
    eta, lam, delta, alpha = [], [], [], []
    for l, d in zip(ATOMS, p.drives):
        dl = p.detuning2 - d.detuning1
        if d.rabi > 0:
            if dl == 0:
                raise PhysicsError(f"atom {l}: two-photon detuning delta is zero (resonant case)")
            e = d.rabi**2 / d.detuning1
            la = d.rabi * g / 2 * (1 / d.detuning1 + 1 / p.detuning2)
            a = la**2 / (4 * dl)
        else:
            e = la = a = 0.0
        eta.append(e)
        lam.append(la)
        delta.append(dl)
        alpha.append(a)
    beta = [[0.0] * 4 for _ in range(4)]
    for l, m in combinations(range(4), 2):
        if lam[l] and lam[m]:
            b = lam[l] * lam[m] / 4 * (1 / delta[l] + 1 / delta[m])
            beta[l][m] = beta[m][l] = b
    return DerivedParams(
        eta=tuple(eta),
        lam=tuple(lam),
        delta=tuple(delta),
        xi=g**2 / p.detuning2,
        alpha=tuple(alpha),
        beta=tuple(tuple(r) for r in beta),
    )


@dataclass(frozen=True)
class RegimeCondition:
    name: str
    left: float
    right: float
    ratio: float
    passed: bool


@dataclass(frozen=True)
class RegimeReport:
    threshold: float
    conditions: tuple[RegimeCondition, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def table(self) -> str:
        rows = [f"{'condition':<28}{'left':>12}{'right':>12}{'ratio':>12}  pass"]
        for c in self.conditions:
            ratio = "inf" if math.isinf(c.ratio) else f"{c.ratio:.4g}"
            rows.append(f"{c.name:<28}{c.left:>12.5g}{c.right:>12.5g}{ratio:>12}  {'yes' if c.passed else 'NO'}")
        rows.append(f"threshold {self.threshold:g}: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "conditions": [
                {"name": c.name, "left": c.left, "right": c.right, "ratio": c.ratio, "passed": c.passed}
                for c in self.conditions
            ],
        }


def validate_regime(p: SystemParams, threshold: float = 5.0) -> RegimeReport:
    dp = derive_params(p)
    out = []

    def cond(name, left, right):
        ratio = math.inf if right == 0 else left / right
        out.append(RegimeCondition(name, float(left), float(right), float(ratio), ratio >= threshold))

    for l, d in zip(ATOMS, p.drives):
        if d.rabi > 0:
            cond(f"Delta1[{l}] >> Omega[{l}]", d.detuning1, d.rabi)
    cond("Delta2 >> g", p.detuning2, p.coupling)
    for l in p.driven:
        i = l - 1
        cond(f"2 Omega_S >> delta[{l}]", 2 * p.omega_s, abs(dp.delta[i]))
        cond(f"2 Omega_S >> lambda[{l}]", 2 * p.omega_s, dp.lam[i])
        cond(f"2 Omega_S >> eta[{l}]", 2 * p.omega_s, dp.eta[i])
    cond("2 Omega_S >> xi", 2 * p.omega_s, dp.xi)
    for l in p.driven:
        i = l - 1
        cond(f"delta[{l}] >> lambda[{l}]/2", abs(dp.delta[i]), dp.lam[i] / 2)
    return RegimeReport(threshold, tuple(out))


# single-site matrices


def _proj(levels: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((levels, levels), dtype=complex)
    m[i, j] = 1.0
    return m


def annihilation(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


S_PLUS = _proj(2, 1, 0)  # |s><g|
S_MINUS = _proj(2, 0, 1)


def build_h_full(p: SystemParams) -> TimeDependentOperator:
    """Three-level atoms and resonator in the interaction picture of the bare energies."""
    space = qubit_space(p.fock_dim, levels=3)
    a = annihilation(p.fock_dim)
    G, S, R = 0, 1, 2
    static = np.zeros((space.dim, space.dim), dtype=complex)
    terms = []
    for l, d in zip(ATOMS, p.drives):
        sg = embed_many({l: _proj(3, S, G)}, space).matrix
        static += p.drive_sign * p.omega_s * (sg + sg.conj().T)
        if d.rabi > 0:
            terms.append((d.detuning1, d.rabi * embed_many({l: _proj(3, R, G)}, space).matrix))
        terms.append((p.detuning2, p.coupling * embed_many({l: _proj(3, R, S), "c": a}, space).matrix))
    return TimeDependentOperator(space, static, tuple(terms))


def build_h_ground(p: SystemParams) -> TimeDependentOperator:
    """(g, s) manifold after eliminating the excited level, resonator included."""
    dp = derive_params(p)
    space = qubit_space(p.fock_dim)
    a = annihilation(p.fock_dim)
    n_op = a.conj().T @ a
    static = np.zeros((space.dim, space.dim), dtype=complex)
    terms = []
    for l in ATOMS:
        i = l - 1
        pg = embed_many({l: _proj(2, 0, 0)}, space).matrix
        ps_n = embed_many({l: _proj(2, 1, 1), "c": n_op}, space).matrix
        sx = embed_many({l: SIGMA_X}, space).matrix
        static += -dp.eta[i] * pg - dp.xi * ps_n + p.drive_sign * p.omega_s * sx
        if dp.lam[i]:
            terms.append((-dp.delta[i], -dp.lam[i] * embed_many({l: S_PLUS, "c": a.conj().T}, space).matrix))
    return TimeDependentOperator(space, static, tuple(terms))


_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def pm_basis_unitary(space: HilbertSpace) -> np.ndarray:
    """Columns are the (+, -) states of every two-level atom factor, expressed in (g, s)."""
    atoms = {lbl: _HADAMARD for lbl, d in space.factors if lbl != "c" and d == 2}
    if not atoms:
        raise ValueError("no two-level atom factors to rotate")
    return embed_many(atoms, space).matrix


def to_pm_basis(op):
    """Express ``op`` in the |±> = (|g> ± |s>)/sqrt2 basis of every atom."""
    U = pm_basis_unitary(op.space)
    if isinstance(op, TimeDependentOperator):
        return op.conjugate(U)
    return Operator(op.space, U.conj().T @ op.matrix @ U)


def build_h_reduced(p: SystemParams, cavity_pull: bool = False) -> TimeDependentOperator:
    """Ground-manifold model after dropping the terms rotating at 2 Omega_S.

    Lives in the interaction picture of H0 = Omega_S sum_l X_l. With
    ``cavity_pull`` the non-rotating part of -xi a^dag a |s><s|, a static shift
    -(xi/2) a^dag a per atom, is kept as well; it is a diagnostic variant and
    not part of the reduced model proper.
    """
    dp = derive_params(p)
    space = qubit_space(p.fock_dim)
    a = annihilation(p.fock_dim)
    static = np.zeros((space.dim, space.dim), dtype=complex)
    if cavity_pull:
        static += -dp.xi / 2 * len(ATOMS) * embed_many({"c": a.conj().T @ a}, space).matrix
    terms = []
    for l in ATOMS:
        i = l - 1
        if dp.lam[i]:
            terms.append((-dp.delta[i], -dp.lam[i] / 2 * embed_many({l: SIGMA_X, "c": a.conj().T}, space).matrix))
    return TimeDependentOperator(space, static, tuple(terms))


def retained_pairs(p: SystemParams, active: Iterable[int] | None = None, keep_all: bool = False):
    """Pairs (l, m, beta) kept by the dispersive decoupling rule."""
    dp = derive_params(p)
    active = sorted(p.driven if active is None else active)
    out = []
    for l, m in combinations(active, 2):
        b = dp.beta_pair(l, m)
        gap = abs(dp.delta[l - 1] - dp.delta[m - 1])
        if keep_all or gap <= R_KEEP * abs(b):
            out.append((l, m, b))
    return out


def build_h_eff(
    p: SystemParams,
    active: Iterable[int] | None = None,
    convention: str = "printed",
    keep_all: bool = False,
) -> TimeDependentOperator:
    """Dispersive atom-atom Hamiltonian on the four (g, s) qubits, no resonator.

    ``convention`` selects the phase of the S+S+ terms: "printed" attaches
    exp(-i(delta_l - delta_m)t) to both S+S+ and S+S-, "sum" gives S+S+ the
    factor exp(-i(delta_l + delta_m)t). ``keep_all`` bypasses the decoupling rule.
    """
    if convention not in ("printed", "sum"):
        raise ValueError(f"unknown phase convention {convention!r}")
    dp = derive_params(p)
    space = qubit_space()
    active = sorted(p.driven if active is None else active)
    for l in active:
        if p.drives[l - 1].rabi <= 0:
            raise ValueError(f"atom {l} is listed as active but is not driven")
    static = np.zeros((space.dim, space.dim), dtype=complex)
    for l in active:
        static += dp.alpha[l - 1] * np.eye(space.dim)
    terms = []
    for l, m, b in retained_pairs(p, active, keep_all):
        dl, dm = dp.delta[l - 1], dp.delta[m - 1]
        pp = b * embed_many({l: S_PLUS, m: S_PLUS}, space).matrix
        pm = b * embed_many({l: S_PLUS, m: S_MINUS}, space).matrix
        w_pm = -(dl - dm)
        w_pp = w_pm if convention == "printed" else -(dl + dm)
        terms += [(w_pp, pp), (w_pm, pm)]
    return TimeDependentOperator(space, static, tuple(terms))


def build_h0(p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    """Strong-drive reference Hamiltonian Omega_S sum_l X_l on the atom factors."""
    space = space or qubit_space()
    m = sum(embed_many({l: SIGMA_X}, space).matrix for l in ATOMS)
    return Operator(space, p.drive_sign * p.omega_s * m)
