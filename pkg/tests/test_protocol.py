import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import chi_forge.protocol as protocol
from chi_forge.model import AtomDrive, PhysicsError, derive_params
from chi_forge.protocol import (
    Engine,
    ErrorModel,
    TimingError,
    _printed_state,
    chi_protocol,
    chi_target,
    choose_omega_s,
    intermediate_after_step1,
    protocol_from_dict,
    protocol_to_dict,
    reorder_amplitudes,
    run_protocol,
    tune_partner_rabi,
)
from chi_forge.statespace import fidelity, ket, qubit_space

R = 1 / (2 * math.sqrt(2))


def test_target_matches_printed_sign_pattern():
    amps = reorder_amplitudes(chi_target().amplitudes)
    plus = ["0000", "0110", "1001", "1010", "1100", "1111"]
    minus = ["0011", "0101"]
    for bits in plus:
        assert amps[int(bits, 2)] == pytest.approx(R)
    for bits in minus:
        assert amps[int(bits, 2)] == pytest.approx(-R)
    assert np.sum(np.abs(amps) ** 2) == pytest.approx(1.0)


def test_reorder_is_a_permutation():
    psi = ket(qubit_space(), "gsgg")  # atom 2 in s
    amps = reorder_amplitudes(psi.amplitudes)
    # in 3214 order atom 2 sits in the second slot
    assert amps[int("0100", 2)] == 1


def test_choose_omega_s():
    t1 = 172.39578733984806
    w = choose_omega_s(10.0, t1)
    assert w * t1 / math.pi == pytest.approx(round(w * t1 / math.pi), abs=1e-9)
    assert abs(w - 10.0) <= math.pi / (2 * t1)
    with pytest.raises(PhysicsError):
        choose_omega_s(0.001, 1.0)
    with pytest.raises(ValueError):
        choose_omega_s(-1.0, 1.0)


def test_schedule_constraints(proto):
    t1, t2 = (s.duration for s in proto.steps)
    dp = derive_params(proto.params)
    assert t1 == pytest.approx(math.pi / (4 * dp.beta_pair(1, 2)))
    assert t2 == pytest.approx(t1, rel=1e-12)
    for step in proto.steps:
        assert all(c["ok"] for c in step.constraints if c["name"].startswith("Omega_S"))
    assert proto.steps[1].expected_pairs == ((2, 3),)


def test_step1_state_and_target_analytic(proto):
    res = run_protocol(proto)
    assert fidelity(res.step_states[0], intermediate_after_step1()) >= 1 - 1e-10
    assert res.fidelity(chi_target()) >= 1 - 1e-10


def test_state_before_local_unitary(proto):
    chi_prime = _printed_state(
        [("gggg", R), ("gssg", -1j * R), ("ggss", -1j * R), ("gsgs", -R), ("ssgg", -1j * R), ("sgsg", -R), ("ssss", -R), ("sggs", 1j * R)]
    )
    res = run_protocol(proto, apply_post=False)
    assert fidelity(res.state, chi_prime) >= 1 - 1e-10
    # amplitude-level agreement, not only up to a global phase
    assert np.allclose(res.state.amplitudes, chi_prime.amplitudes, atol=1e-10)


def test_partner_tuning(params):
    tuned = tune_partner_rabi(params)
    dp = derive_params(tuned)
    assert dp.beta_pair(3, 4) == pytest.approx(dp.beta_pair(1, 2), rel=1e-14)
    assert tuned.drives[2].rabi == pytest.approx(0.725, rel=1e-3)


def test_effective_engine_matches_analytic_when_tuned(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        proto = chi_protocol(tune_partner_rabi(params))
    a = run_protocol(proto, engine=Engine.ANALYTIC)
    e = run_protocol(proto, engine=Engine.EFFECTIVE)
    assert fidelity(a.state, e.state) >= 1 - 1e-8
    assert e.max_step_drift <= 1e-8


def test_beta_mismatch_is_fatal(params):
    d = list(params.drives)
    d[2] = d[3] = AtomDrive(0.5, 10.5)
    with pytest.raises(PhysicsError, match="beta_12"):
        chi_protocol(params.with_drives(d))


def test_moderate_beta_mismatch_warns(params):
    d = list(params.drives)
    d[2] = d[3] = AtomDrive(0.725 * 1.005, 10.5)
    with pytest.warns(UserWarning, match="differ"):
        chi_protocol(params.with_drives(d))


def test_undriven_atom_rejected(params):
    with pytest.raises(PhysicsError, match="atom 1"):
        chi_protocol(params.with_drives([AtomDrive(0, 10)] + list(params.drives[1:])))


def test_wrong_pairs_rejected(params):
    with pytest.raises(PhysicsError, match="exactly pairs"):
        chi_protocol(params.with_drives([AtomDrive(1, 10)] * 4))


def test_timing_error_bounds():
    with pytest.raises(ValueError):
        TimingError(1.0, 0.0)
    assert TimingError(0.1, -0.2).rate(1) == -0.2
    assert TimingError(model="full_phase").model is ErrorModel.FULL_PHASE


def brute_force_state(a1, a2):
    """exp(-i a2 X2X3) exp(-i a1 (X1X2 + X3X4)) |gggg> followed by diag(1, i) on atoms 1 and 3,
    built from explicit Kronecker products."""
    from functools import reduce

    from scipy.linalg import expm

    X, I = np.array([[0, 1], [1, 0]]), np.eye(2)
    D = np.diag([1, 1j])

    def op(**sites):
        return reduce(np.kron, [sites.get(f"a{k}", I) for k in range(1, 5)])

    psi = np.zeros(16, dtype=complex)
    psi[0] = 1
    psi = expm(-1j * a1 * (op(a1=X, a2=X) + op(a3=X, a4=X))) @ psi
    psi = expm(-1j * a2 * op(a2=X, a3=X)) @ psi
    return op(a1=D, a3=D) @ psi


@given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_beta_only_matches_brute_force(n1, n2):
    """Under the beta-only model the strong-drive rotation stays a multiple of pi,
    so only the pair angles (pi/4)(1 + n_i) matter."""
    import chi_forge.model as m

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        proto = chi_protocol(m.reference_params())
    f = run_protocol(proto, err=TimingError(n1, n2)).fidelity(chi_target())
    ref = brute_force_state(math.pi / 4 * (1 + n1), math.pi / 4 * (1 + n2))
    expected = abs(np.vdot(chi_target().amplitudes, ref)) ** 2
    assert 0 <= f <= 1 + 1e-9
    assert f == pytest.approx(expected, abs=1e-10)


def test_brute_force_reaches_target():
    ref = brute_force_state(math.pi / 4, math.pi / 4)
    assert abs(np.vdot(chi_target().amplitudes, ref)) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_projection_guard(proto, monkeypatch):
    monkeypatch.setattr(protocol, "MIN_PROJECTION_WEIGHT", 0.99)
    with pytest.raises(PhysicsError, match="kept only"):
        run_protocol(proto, engine=Engine.REDUCED)
    res = run_protocol(proto, engine=Engine.REDUCED, strict=False)
    assert 0.5 < res.vacuum_weight < 0.99


def test_serialization_round_trip(proto):
    back = protocol_from_dict(protocol_to_dict(proto))
    assert back.params == proto.params
    assert [s.duration for s in back.steps] == [s.duration for s in proto.steps]
    a = run_protocol(proto, err=TimingError(0.01, -0.02, "full_phase"))
    b = run_protocol(back, err=TimingError(0.01, -0.02, "full_phase"))
    assert np.allclose(a.state.amplitudes, b.state.amplitudes)


def test_fock_override_runs(proto):
    r = run_protocol(proto, engine=Engine.REDUCED, fock_dim=3, strict=False)
    assert r.state.space == qubit_space()
