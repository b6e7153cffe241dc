"""Time evolution: fixed-step RK4 for state vectors and density matrices,
plus the closed-form pair-rotation propagator used by the protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .statespace import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    embed_many,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)

# per-step norm drift that signals a step size far too large
DRIFT_ERROR = 1e-6
TRACE_ERROR = 1e-4
LINDBLAD_NEG_EIG = 1e-6

# components sparser than this are applied through CSR products
_SPARSE_DENSITY = 0.1


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TimeDependentOperator:
    """H(t) = static + sum_k [exp(i w_k t) M_k + exp(-i w_k t) M_k^dag].

    Every term of the Hamiltonians in this package is a constant operator times
    a single phase factor, so this Fourier form is exact and lets the
    integrators apply H(t) without re-assembling a matrix at each stage.
    """

    space: HilbertSpace
    static: np.ndarray
    terms: tuple[tuple[float, np.ndarray], ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        d = self.space.dim
        static = np.asarray(self.static, dtype=complex)
        if static.shape != (d, d):
            raise ValueError(f"static part must be {d}x{d}")
        merged: dict[float, np.ndarray] = {}
        for w, m in self.terms:
            m = np.asarray(m, dtype=complex)
            if m.shape != (d, d):
                raise ValueError(f"term at frequency {w} must be {d}x{d}")
            w = float(w)
            if w == 0.0:
                static = static + m + m.conj().T
            elif w in merged:
                merged[w] = merged[w] + m
            else:
                merged[w] = m
        object.__setattr__(self, "static", static)
        object.__setattr__(self, "terms", tuple(sorted(merged.items())))

    @classmethod
    def constant(cls, op: Operator) -> "TimeDependentOperator":
        return cls(op.space, op.matrix)

    @property
    def max_frequency(self) -> float:
        return max((abs(w) for w, _ in self.terms), default=0.0)

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm of H(t), valid for every t."""
        if "norm" not in self._cache:
            total = np.linalg.norm(self.static, 2)
            total += sum(2 * np.linalg.norm(m, 2) for _, m in self.terms)
            self._cache["norm"] = float(total)
        return self._cache["norm"]

    def matrix(self, t: float) -> np.ndarray:
        out = self.static.copy()
        for w, m in self.terms:
            c = np.exp(1j * w * t)
            out += c * m + np.conj(c) * m.conj().T
        return out

    def eval(self, t: float) -> Operator:
        return Operator(self.space, self.matrix(t))

    def _stack(self):
        if "stack" not in self._cache:
            blocks = [self.static]
            freqs = [0.0]
            for w, m in self.terms:
                blocks += [m, m.conj().T]
                freqs += [w, -w]
            stacked = np.vstack(blocks)
            if np.count_nonzero(stacked) < _SPARSE_DENSITY * stacked.size:
                stacked = sp.csr_matrix(stacked)
            self._cache["stack"] = stacked
            self._cache["freqs"] = 1j * np.array(freqs)
        return self._cache["stack"], self._cache["freqs"]

    def coefficients(self, t: float) -> np.ndarray:
        """Weights of the stacked blocks [static, M_1, M_1^dag, ...] at time t."""
        _, freqs = self._stack()
        return np.exp(freqs * t)

    def apply(self, t: float, psi: np.ndarray, coeffs: np.ndarray | None = None) -> np.ndarray:
        """H(t) @ psi for a vector or a matrix of column vectors."""
        stack, _ = self._stack()
        y = stack @ psi
        if not self.terms:
            return y
        c = self.coefficients(t) if coeffs is None else coeffs
        if psi.ndim == 1:
            return c @ y.reshape(-1, self.space.dim)
        return np.tensordot(c, y.reshape((-1, self.space.dim) + psi.shape[1:]), axes=1)

    def conjugate(self, U: np.ndarray) -> "TimeDependentOperator":
        """U^dag H(t) U, term by term."""
        Ud = U.conj().T
        return TimeDependentOperator(
            self.space, Ud @ self.static @ U, tuple((w, Ud @ m @ U) for w, m in self.terms)
        )

    def __add__(self, other: "TimeDependentOperator") -> "TimeDependentOperator":
        if other.space != self.space:
            raise ValueError("space mismatch")
        return TimeDependentOperator(self.space, self.static + other.static, self.terms + other.terms)


@dataclass(frozen=True)
class CollapseChannel:
    operator: Operator
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"collapse rate must be non-negative, got {self.rate}")


def fixed_step(H: TimeDependentOperator, t0: float, t1: float, steps_per_period: int) -> tuple[int, float]:
    """Number of steps and step size covering [t0, t1] exactly."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if steps_per_period < 20:
        raise ValueError("steps_per_period must be at least 20")
    rate = max(H.max_frequency, H.norm_bound())
    span = t1 - t0
    if span == 0 or rate == 0:
        return (0 if span == 0 else 1), span
    dt_max = 2 * math.pi / (steps_per_period * rate)
    n = max(1, math.ceil(span / dt_max - 1e-12))
    return n, span / n


def integrate_unitary(
    H: TimeDependentOperator,
    psi0: StateVector,
    t0: float,
    t1: float,
    steps_per_period: int = 100,
    monitor: tuple[int, Callable[[float, np.ndarray], None]] | None = None,
    full_output: bool = False,
):
    """Classical RK4 for i dpsi/dt = H(t) psi with renormalization after every step.

    ``monitor=(every, fn)`` calls ``fn(t, amplitudes)`` at t0, every ``every``
    steps and at t1. With ``full_output`` the per-step drift statistics are
    returned alongside the state.
    """
    if psi0.space != H.space:
        raise ValueError("state and Hamiltonian live on different spaces")
    n, dt = fixed_step(H, t0, t1, steps_per_period)
    psi = np.array(psi0.amplitudes, dtype=complex)
    timed = bool(H.terms)
    max_drift = 0.0
    total_drift = 0.0
    every, fn = monitor if monitor else (0, None)
    if fn:
        fn(t0, psi)
    for k in range(n):
        t = t0 + k * dt
        if timed:
            ca, cm, cb = H.coefficients(t), H.coefficients(t + dt / 2), H.coefficients(t + dt)
        else:
            ca = cm = cb = None
        k1 = -1j * H.apply(t, psi, ca)
        k2 = -1j * H.apply(t + dt / 2, psi + dt / 2 * k1, cm)
        k3 = -1j * H.apply(t + dt / 2, psi + dt / 2 * k2, cm)
        k4 = -1j * H.apply(t + dt, psi + dt * k3, cb)
        psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        nrm = np.linalg.norm(psi)
        if not np.isfinite(nrm):
            raise FloatingPointError(f"non-finite amplitudes at t={t + dt}")
        drift = abs(1.0 - nrm)
        if drift > DRIFT_ERROR:
            raise NormDriftError(f"norm drift {drift:.3e} in one step at t={t + dt}; step too large")
        max_drift = max(max_drift, drift)
        total_drift += drift
        psi /= nrm
        if fn and every and (k + 1) % every == 0 and k + 1 != n:
            fn(t + dt, psi)
    if fn:
        fn(t1, psi)
    out = StateVector(H.space, psi)
    if full_output:
        return out, {"steps": n, "dt": dt, "max_step_drift": max_drift, "total_drift": total_drift}
    return out


def lindblad_rhs(Hm: np.ndarray, rho: np.ndarray, L: np.ndarray, Ld: np.ndarray, K: np.ndarray) -> np.ndarray:
    """-i[H, rho] + sum_k L_k rho L_k^dag - {K, rho}/2 with rates folded into L and K."""
    out = -1j * (Hm @ rho - rho @ Hm)
    if L is not None:
        out += np.sum(L @ rho @ Ld, axis=0)
        out -= 0.5 * (K @ rho + rho @ K)
    return out


def liouvillian(Hm: np.ndarray, L: np.ndarray | None = None, K: np.ndarray | None = None) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    d = Hm.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(Hm, eye) - np.kron(eye, Hm.T))
    if L is not None:
        out += sum(np.kron(Lk, Lk.conj()) for Lk in L)
        out -= 0.5 * (np.kron(K, eye) + np.kron(eye, K.T))
    return out


def _lindblad_exact(Hm, L, K, rho, span):
    """Constant generator: repeated application of expm(Liouvillian * dt) with a unit-scale dt."""
    sup = liouvillian(Hm, L, K)
    scale = max(np.linalg.norm(sup, 1), 1e-300)
    n = max(1, math.ceil(span * scale))
    dt = span / n
    v = np.linalg.matrix_power(expm(sup * dt), n) @ rho.reshape(-1)
    rho = v.reshape(rho.shape)
    return n, dt, 0.5 * (rho + rho.conj().T)


def integrate_lindblad(
    H: TimeDependentOperator,
    channels: Sequence[CollapseChannel],
    rho0: DensityMatrix,
    t0: float,
    t1: float,
    steps_per_period: int = 100,
    full_output: bool = False,
):
    """Lindblad master equation. A constant generator is propagated exactly
    through the Liouvillian exponential; otherwise fixed-step RK4 is used with
    rho re-symmetrized each step.

    The commutator with H oscillates at eigenvalue differences, up to twice
    the Hamiltonian bandwidth, so the step is half the one used for states.
    """
    if rho0.space != H.space:
        raise ValueError("density matrix and Hamiltonian live on different spaces")
    n, dt = fixed_step(H, t0, t1, 2 * steps_per_period)
    live = [c for c in channels if c.rate > 0]
    for c in live:
        if c.operator.space != H.space:
            raise ValueError("collapse operator on a different space")
    if live:
        L = np.stack([math.sqrt(c.rate) * c.operator.matrix for c in live])
        Ld = L.conj().transpose(0, 2, 1)
        K = np.sum(Ld @ L, axis=0)
    else:
        L = Ld = K = None
    rho = np.array(rho0.matrix, dtype=complex)
    if not H.terms:
        n, dt, rho = _lindblad_exact(H.static, L, K, rho, t1 - t0)
    for k in range(n if H.terms else 0):
        t = t0 + k * dt
        Ha, Hm, Hb = H.matrix(t), H.matrix(t + dt / 2), H.matrix(t + dt)
        k1 = lindblad_rhs(Ha, rho, L, Ld, K)
        k2 = lindblad_rhs(Hm, rho + dt / 2 * k1, L, Ld, K)
        k3 = lindblad_rhs(Hm, rho + dt / 2 * k2, L, Ld, K)
        k4 = lindblad_rhs(Hb, rho + dt * k3, L, Ld, K)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        if not np.all(np.isfinite(rho)):
            raise FloatingPointError(f"non-finite density matrix at t={t + dt}")
    trace_drift = abs(np.trace(rho).real - 1.0)
    if trace_drift > TRACE_ERROR:
        raise NormDriftError(f"trace drift {trace_drift:.3e} exceeds {TRACE_ERROR}")
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if min_eig < -LINDBLAD_NEG_EIG:
        raise NormDriftError(f"density matrix eigenvalue {min_eig:.3e} below -{LINDBLAD_NEG_EIG}")
    # integrator round-off: clip the tiny negative tail and fix the trace
    if min_eig < 0:
        w, v = np.linalg.eigh(rho)
        rho = (v * np.clip(w, 0, None)) @ v.conj().T
    rho = rho / np.trace(rho).real
    rho = 0.5 * (rho + rho.conj().T)
    out = DensityMatrix(H.space, rho)
    if full_output:
        return out, {"steps": n, "dt": dt, "trace_drift": trace_drift, "min_eigenvalue": min_eig}
    return out


def pair_rotation(space: HilbertSpace, l, m, angle: float) -> np.ndarray:
    """exp(-i angle X_l X_m) = cos(angle) I - i sin(angle) X_l X_m."""
    xx = embed_many({l: SIGMA_X, m: SIGMA_X}, space).matrix
    return math.cos(angle) * np.eye(space.dim) - 1j * math.sin(angle) * xx


def drive_rotation(space: HilbertSpace, atoms, angle: float) -> np.ndarray:
    """prod_l exp(-i angle X_l) over the given atoms."""
    c, s = math.cos(angle), math.sin(angle)
    single = c * np.eye(2) - 1j * s * SIGMA_X
    return embed_many({a: single for a in atoms}, space).matrix


def evolve_step_analytic(
    pairs: Sequence[tuple[int, int, float]],
    omega_s: float,
    t: float,
    psi0: StateVector,
    drive_sign: int = 1,
) -> StateVector:
    """Closed-form exp(-i H0 t) exp(-i H_eff t) on the four (g, s) qubits.

    ``pairs`` holds (l, m, beta) for disjoint coupled pairs; each contributes
    exp(-i beta t X_l X_m). H0 = drive_sign * omega_s * sum_l X_l over all atoms
    present. The energy-shift terms of H_eff are proportional to the identity
    and are left out; see :func:`alpha_phase`.
    """
    seen: set = set()
    for l, m, _ in pairs:
        if l == m or {l, m} & seen:
            raise ValueError(f"pairs must be disjoint, got {[(a, b) for a, b, _ in pairs]}")
        seen |= {l, m}
    space = psi0.space
    psi = psi0.amplitudes
    for l, m, beta in pairs:
        psi = pair_rotation(space, str(l), str(m), beta * t) @ psi
    psi = drive_rotation(space, space.labels, drive_sign * omega_s * t) @ psi
    return StateVector(space, psi)


def alpha_phase(alphas: Sequence[float], t: float) -> float:
    """Global phase -sum_l alpha_l t dropped by :func:`evolve_step_analytic`."""
    return -float(sum(alphas)) * t

