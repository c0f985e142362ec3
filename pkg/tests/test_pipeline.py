import numpy as np
import pytest

from kleinbox.core import Geometry
from kleinbox.lattice import build_hamiltonian, chain_from_params, eigensolve
from kleinbox.pipeline import (
    half_chain_data,
    recover_parameters,
    run_ensemble,
    spectroscopy_round_trip,
    split_halves,
    thread_count,
)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("KLEINBOX_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("KLEINBOX_THREADS", "0")
    assert thread_count() == 1
    monkeypatch.setenv("KLEINBOX_THREADS", "many")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.delenv("KLEINBOX_THREADS")
    assert 1 <= thread_count() <= 8


def test_split_halves_share_draws(e1):
    spec = chain_from_params((15, 15), e1, 2.7, seed=5)
    H = build_hamiltonian(spec)
    left, right = split_halves(spec)
    assert len(left.diagonal) == 30 and len(right.diagonal) == 30
    assert np.array_equal(np.concatenate([left.diagonal, right.diagonal]), H.diagonal)
    assert np.array_equal(left.offdiagonal, H.offdiagonal[:29])
    assert np.array_equal(right.offdiagonal, H.offdiagonal[30:])


def test_clean_halves_have_five_levels(e1):
    left, right = split_halves(chain_from_params((15, 15), e1))
    a0 = e1.lattice_const
    for H, side in ((left, "left"), (right, "right")):
        d = half_chain_data(H, side, 15, a0)
        assert len(d.levels) == 5
        assert d.pairs.shape == (5, 2)
        assert np.all(d.wavevectors > 0)


def test_recovery_clean_chain(e1):
    r = recover_parameters(e1, (15, 15), 0.0, seed=0)
    row = r.row(e1.lattice_const)
    assert row["converged"]
    # the lattice dispersion is not the continuum one, so recovery is biased but close
    assert abs(row["hbar_c_over_a0_mhz"] - 61.325) < 0.05 * 61.325
    assert abs(row["delta_f_mhz"] - e1.step_height) < 10.0
    assert np.isfinite(r.delta_f_seq)


def test_ensemble_is_thread_independent(e1, monkeypatch):
    seeds = range(6)
    a = run_ensemble(e1, Geometry(15, 15), 2.7, seeds, threads=1)
    monkeypatch.setenv("KLEINBOX_THREADS", "4")
    b = run_ensemble(e1, Geometry(15, 15), 2.7, seeds)
    assert [r["seed"] for r in b.rows] == list(seeds)
    assert a.rows == b.rows
    assert a.median == b.median
    table = a.table()
    assert {t["parameter"] for t in table} >= {"mc2_mhz", "f0_mhz", "delta_f_mhz"}


def test_round_trip_clean(e4):
    spec = chain_from_params((15, 9), e4)
    eig = eigensolve(build_hamiltonian(spec))
    rt = spectroscopy_round_trip(eig)
    assert len(rt.true_levels) == len(eig.window_indices)
    assert np.max(np.abs(rt.center_errors)) < 0.2
    assert np.max(rt.intensity_errors) < 1e-2
