import warnings

import numpy as np
import pytest

import oseen_dg.adaptivity as adaptivity
from oseen_dg.adaptivity import AdaptConfig, dorfler_mark, match_eigenvalues, run_algorithm1
from oseen_dg.eigensolver import NonConvergenceError
from oseen_dg.experiments import read_csv_columns


@pytest.mark.parametrize("eta,theta,expected", [
    ([4, 1, 1], 0.5, [0]),
    ([4, 1, 1], 0.9, [0, 1, 2]),
    ([1, 1, 1, 1], 0.5, [0, 1]),
    ([0, 3, 0, 5], 0.6, [3]),
    ([1, 2, 3], 0.999, [0, 1, 2]),
])
def test_dorfler_examples(eta, theta, expected):
    assert dorfler_mark(eta, theta).tolist() == expected


def test_dorfler_minimality_random():
    rng = np.random.default_rng(7)
    for trial in range(1000):
        n = int(rng.integers(1, 60))
        eta = rng.exponential(size=n) ** 3
        if trial % 10 == 0:
            eta = np.round(eta, 1)  # force ties
        if eta.sum() == 0:
            continue
        theta = float(rng.uniform(0.05, 0.95))
        marked = dorfler_mark(eta, theta)
        total = eta.sum()
        assert eta[marked].sum() >= theta * total * (1 - 1e-12)
        # dropping the smallest marked indicator breaks the bulk criterion
        assert eta[marked].sum() - eta[marked].min() < theta * total
        # no unmarked element beats a marked one
        rest = np.setdiff1d(np.arange(n), marked)
        if len(rest):
            assert eta[rest].max() <= eta[marked].min()


def test_dorfler_zero_and_invalid():
    with pytest.warns(UserWarning):
        assert len(dorfler_mark([0.0, 0.0], 0.5)) == 0
    with pytest.raises(ValueError):
        dorfler_mark([1.0, -1.0], 0.5)
    with pytest.raises(ValueError):
        dorfler_mark([1.0, np.nan], 0.5)
    with pytest.raises(ValueError):
        dorfler_mark([1.0], 1.0)


@pytest.mark.parametrize("prev,cur,expected", [
    ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0, 1, 2]),
    ([1.0, 2.0, 3.0], [3.01, 1.01, 2.01], [1, 2, 0]),
    ([23.1, 23.4], [23.42, 23.12], [1, 0]),
    ([1.0, 5.0], [1.1], [0, None]),
])
def test_match_eigenvalues(prev, cur, expected):
    assert match_eigenvalues(prev, cur) == expected


def test_match_eigenvalues_rejects_empty():
    with pytest.raises(ValueError):
        match_eigenvalues([], [1.0])


def test_config_validation():
    assert AdaptConfig(domain="cube").theta == 0.5
    assert AdaptConfig(domain="lshape").theta == 0.75
    assert AdaptConfig(domain="thick_l").max_dofs == 150_000
    assert AdaptConfig(domain="lshape").max_dofs == 200_000
    for bad in (dict(theta=1.0), dict(theta=0.0), dict(m=0), dict(first=0), dict(m=2, references=[1.0])):
        with pytest.raises(ValueError):
            AdaptConfig(**bad)


def test_smoke_zero_beta_one_iteration():
    cfg = AdaptConfig(domain="square", k=2, beta="ZERO", n0=4, m=1, max_iterations=1)
    trace = run_algorithm1(cfg)
    assert len(trace.rows) == 1
    row = trace.rows[0]
    assert row.n_marked > 0
    assert abs(row.eigenvalues[0].imag) <= 1e-8 * abs(row.eigenvalues[0])


def test_trace_grows_and_is_written_incrementally(tmp_path):
    refs = [13.6095931, 23.1297530]
    cfg = AdaptConfig(domain="square", k=1, n0=4, m=2, max_iterations=4, references=refs)
    path = tmp_path / "trace.csv"
    trace = run_algorithm1(cfg, path)
    assert np.all(np.diff(trace.dofs) > 0)
    cols = read_csv_columns(path)
    assert [int(v) for v in cols["dofs"]] == trace.dofs.tolist()
    # 17 significant digits reproduce the in-memory floats exactly
    assert [complex(float(a), float(b)) for a, b in zip(cols["lambda1_re"], cols["lambda1_im"])] == \
        trace.eigenvalues(0).tolist()
    assert [float(v) for v in cols["rerr2"]] == trace.relative_errors(1).tolist()
    assert trace.relative_errors(0)[-1] < 0.1 * trace.relative_errors(0)[0]
    for r in trace.rows:
        assert r.eta[0] > 0 and r.eta_star[0] > 0


def test_max_dofs_stops_before_solving():
    cfg = AdaptConfig(domain="square", k=1, n0=4, m=1, max_dofs=10)
    assert run_algorithm1(cfg).rows == []


def test_solver_failure_keeps_partial_trace(tmp_path, monkeypatch):
    real = adaptivity.solve_primal_system
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise NonConvergenceError("forced")
        return real(*args, **kw)

    monkeypatch.setattr(adaptivity, "solve_primal_system", flaky)
    path = tmp_path / "trace.csv"
    cfg = AdaptConfig(domain="square", k=1, n0=4, m=1, max_iterations=5)
    with pytest.raises(NonConvergenceError) as info:
        run_algorithm1(cfg, path)
    assert len(info.value.trace.rows) == 1
    assert "aborted" in info.value.trace.status
    assert len(read_csv_columns(path)["dofs"]) == 1


def test_cluster_mismatch_aborts(monkeypatch):
    real = adaptivity.solve_adjoint_system

    def drop_one(*args, **kw):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return real(*args, **kw)[:-1]

    monkeypatch.setattr(adaptivity, "solve_adjoint_system", drop_one)
    cfg = AdaptConfig(domain="square", k=1, n0=4, m=2, max_iterations=2)
    with pytest.raises(adaptivity.ClusterMismatchError):
        run_algorithm1(cfg)
