import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from chi_forge.analysis import (
    BIPARTITIONS,
    SweepGrid,
    approximation_ladder,
    decoherence_impact,
    entanglement_diagnostics,
    feasibility_report,
    jsonable,
    read_sweep_csv,
    sweep_summary,
    timing_error_sweep,
    write_sweep_csv,
)
from chi_forge.model import AtomDrive, SystemParams
from chi_forge.protocol import chi_target
from chi_forge.statespace import StateVector, embed_many, qubit_space


@pytest.fixture(scope="module")
def small_grid(params):
    axis = np.linspace(-0.05, 0.05, 11)
    return timing_error_sweep(params, axis, axis, "beta_only")


def test_grid_origin_is_global_maximum(small_grid):
    assert small_grid.value_at(0.0, 0.0) == pytest.approx(1.0, abs=1e-10)
    assert np.max(small_grid.fidelities) <= small_grid.value_at(0.0, 0.0) + 1e-12
    assert np.all(small_grid.fidelities >= 0)


def test_parallel_sweep_is_identical(params, small_grid):
    axis = np.linspace(-0.05, 0.05, 11)
    par = timing_error_sweep(params, axis, axis, "beta_only", jobs=2)
    assert np.array_equal(par.fidelities, small_grid.fidelities)


def test_csv_format_and_determinism(tmp_path, small_grid):
    a = write_sweep_csv(small_grid, tmp_path / "a.csv")
    b = write_sweep_csv(small_grid, tmp_path / "b.csv")
    raw = a.read_bytes()
    assert hashlib.sha256(raw).digest() == hashlib.sha256(b.read_bytes()).digest()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "n1,n2,fidelity,model,engine"
    assert len(lines) == 1 + 11 * 11
    first = lines[1].split(",")
    assert first[3:] == ["beta_only", "analytic"]
    assert float(first[2]) == small_grid.fidelities[0, 0]
    back = read_sweep_csv(a)
    assert np.array_equal(back.fidelities, small_grid.fidelities)


def test_grid_validation():
    with pytest.raises(ValueError):
        SweepGrid([0, 1], [0], np.zeros((2, 2)), "m", "e", {})
    with pytest.raises(ValueError):
        SweepGrid([0, 1, 0.5], [0], np.zeros((3, 1)), "m", "e", {})
    g = SweepGrid([0.0], [0.0], [[1.0]], "m", "e", {})
    with pytest.raises(KeyError):
        g.value_at(0.1, 0.0)


def test_summary_reports_reference(small_grid):
    s = sweep_summary([small_grid])
    assert s["reference_value_at_probe"] == 0.96
    assert s["grids"][0]["origin"] == pytest.approx(1.0)
    assert s["grids"][0]["at_probe"] == pytest.approx(small_grid.value_at(0.02, 0.02))


def test_entanglement_of_target():
    vals = dict(entanglement_diagnostics(chi_target()))
    assert [name for name, _ in BIPARTITIONS] == list(vals)
    assert vals["(3,2)|(1,4)"] == pytest.approx(2.0, abs=1e-9)
    assert vals["(3,1)|(2,4)"] == pytest.approx(2.0, abs=1e-9)
    assert vals["(3,4)|(2,1)"] == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_entropies_invariant_under_local_unitaries(seed):
    rng = np.random.default_rng(seed)
    s = qubit_space()
    v = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi = StateVector(s, v / np.linalg.norm(v))
    U = embed_many({l: unitary_group.rvs(2, random_state=rng) for l in range(1, 5)}, s)
    a = [e for _, e in entanglement_diagnostics(psi)]
    b = [e for _, e in entanglement_diagnostics(U @ psi)]
    assert np.allclose(a, b, atol=1e-9)


@given(st.floats(1e8, 1e10))
def test_feasibility_scales_inversely_with_coupling(g_si):
    from chi_forge.model import reference_params

    p = reference_params()
    a = feasibility_report(p, g_si)
    b = feasibility_report(p, 2 * g_si)
    assert a.total_si == pytest.approx(2 * b.total_si, rel=1e-12)
    assert a.t1 == b.t1


def test_feasibility_numbers(params):
    r = feasibility_report(params)
    assert r.t1_si == pytest.approx(0.137e-6, rel=0.01)
    assert r.total_si == pytest.approx(0.274e-6, rel=0.01)
    assert r.passed and r.ratio < 1 / 3
    with pytest.raises(ValueError):
        feasibility_report(params, g_si=0)


def test_decoherence_vanishes_for_long_lifetimes(params):
    d = decoherence_impact(params, 1e3, 1e3)
    assert abs(d.loss) <= 1e-6
    assert d.fidelity_closed == pytest.approx(1.0, abs=1e-6)


def test_decoherence_monotone_in_rate(params):
    a = decoherence_impact(params, 3e-6, 3e-6)
    b = decoherence_impact(params, 1.5e-6, 1.5e-6)
    assert 0 < a.loss < b.loss
    with pytest.raises(ValueError):
        decoherence_impact(params, 0.0, 1.0)


def test_zero_drive_ladder_is_all_ones():
    p = SystemParams((AtomDrive(0.0, 10.0),) * 4, 11.0, 3.0, fock_dim=3)
    rep = approximation_ladder(p, t=20.0, engines=["effective", "reduced", "ground", "full"])
    assert rep.mode == "fixed_time"
    for pr in rep.pairs:
        assert pr["fidelity"] == pytest.approx(1.0, abs=1e-8)
    assert rep.fidelity("ground", "full") == pytest.approx(1.0, abs=1e-8)
    json.dumps(jsonable(rep))


def test_jsonable_conversions():
    out = jsonable({"z": 1 + 2j, "a": np.arange(2), "f": math.inf, "n": np.float64(0.5)})
    assert out == {"z": [1.0, 2.0], "a": [0, 1], "f": "inf", "n": 0.5}
