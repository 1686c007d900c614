"""End-to-end acceptance gate.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts at the stated tolerance.  Reference values are the published
benchmark numbers.
"""
import subprocess
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse.linalg as sla

from conftest import ACCEPTANCE
from oseen_dg.adaptivity import AdaptConfig, run_algorithm1
from oseen_dg.assembly import assemble_adjoint_direct, assemble_primal
from oseen_dg.dg_space import build_space
from oseen_dg.eigensolver import solve_adjoint_system, solve_primal_system
from oseen_dg.estimators import compute_indicators
from oseen_dg.experiments import convergence_order
from oseen_dg.fields import make_beta
from oseen_dg.mesh import generate

pytestmark = pytest.mark.slow

SQUARE_ROWS = {
    16: [13.6596320, 23.3381037, 23.6525846, 33.0749860],   # h = sqrt(2)/8
    32: [13.6130518, 23.1452062, 23.4375849, 32.3542953],   # h = sqrt(2)/16
}
SQUARE_LAMBDA1 = 13.6095931
CUBE_LAMBDA1 = 64.3790
LSHAPE_REFS = [32.9600408, 37.1171925, 42.3976455, 49.2536801]


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def square_level(n, k, gamma):
    """Eigenvalues, eta(u1, p1) and the worst divergence residual on square level n."""
    space = build_space(generate("square", n), k)
    beta = make_beta("BETA1")
    system = assemble_primal(space, 1.0, beta, gamma)
    pairs, _ = solve_primal_system(system, m=4)
    eta1 = compute_indicators(space, pairs[0], 1.0, beta, gamma).eta
    div = max(np.linalg.norm(system.B @ p.vel) for p in pairs)
    return [p.lam for p in pairs], eta1, div


def test_criterion_01_square_table_rows():
    t0 = time.perf_counter()
    worst = {}
    for n, row in SQUARE_ROWS.items():
        lams, _, _ = square_level(n, 2, 40.0)
        worst[n] = max(abs(lam - ref) / ref for lam, ref in zip(lams, row))
    elapsed = time.perf_counter() - t0
    ok = all(w <= 2e-3 for w in worst.values()) and elapsed < 180
    record(1, ok, f"max rel err n=16: {worst[16]:.2e}, n=32: {worst[32]:.2e} (tol 2e-3), {elapsed:.0f}s")


def orders(k, gamma):
    lams = [square_level(n, k, gamma)[0] for n in (16, 32, 64)]
    return [convergence_order(a, b, c) for a, b, c in zip(*lams)]


def test_criterion_02_convergence_orders():
    o2 = orders(2, 40.0)
    o3 = orders(3, 90.0)
    ok = all(o is not None and 3.4 <= o <= 4.3 for o in o2) and all(o is not None and o > 5.0 for o in o3)
    fmt = lambda os: ", ".join("undef" if o is None else f"{o:.2f}" for o in os)
    record(2, ok, f"k=2 orders [{fmt(o2)}] in [3.4, 4.3]; k=3 orders [{fmt(o3)}] > 5.0")


def test_criterion_03_cube_first_eigenvalue():
    t0 = time.perf_counter()
    space = build_space(generate("cube", 4), 2)
    system = assemble_primal(space, 1.0, make_beta("BETA1", 3), 50.0)
    pairs, _ = solve_primal_system(system, m=1)
    elapsed = time.perf_counter() - t0
    err = abs(pairs[0].lam - CUBE_LAMBDA1) / CUBE_LAMBDA1
    record(3, err <= 2e-3 and elapsed < 300,
           f"lambda1 = {pairs[0].lam.real:.4f} vs {CUBE_LAMBDA1}, rel err {err:.2e} (tol 2e-3), {elapsed:.0f}s")


def test_criterion_04_self_adjoint_reduction():
    cases = [("square", 16), ("lshape", 32), ("cube", 4), ("thick_l", 4)]
    sym, imag = 0.0, 0.0
    for domain, n in cases:
        space = build_space(generate(domain, n), 2)
        system = assemble_primal(space, 1.0, make_beta("ZERO", space.dim), 40.0)
        A = system.A
        sym = max(sym, sla.norm(A - A.T) / sla.norm(A))
        pairs, _ = solve_primal_system(system, m=4)
        imag = max(imag, max(abs(p.lam.imag) / abs(p.lam) for p in pairs))
    record(4, sym <= 1e-11 and imag <= 1e-8, f"asymmetry {sym:.1e} (tol 1e-11), max |Im|/|lambda| {imag:.1e} (tol 1e-8)")


def test_criterion_05_adjoint_consistency():
    space = build_space(generate("lshape", 4), 2)
    # exact quadrature for the integration by parts linking the two forms
    worst_a = 0.0
    for name in ("BETA1", "BETA2", "BETA3", "BETA4"):
        beta = make_beta(name, 2, domain="lshape")
        P = assemble_primal(space, 1.0, beta, 40.0, degree=16)
        D = assemble_adjoint_direct(space, 1.0, beta, 40.0, degree=16)
        worst_a = max(worst_a, sla.norm(D.K - P.K.T) / sla.norm(P.K))
    system = assemble_primal(build_space(generate("square", 8), 2), 1.0, make_beta("BETA1"), 40.0)
    pairs, factor = solve_primal_system(system, m=4)
    adj = solve_adjoint_system(system, pairs, m=4, factor=factor)
    worst_b = max(abs(a.lam - np.conj(p.lam)) for p, a in zip(pairs, adj))
    ok = worst_a <= 1e-10 and worst_b <= 1e-7 and all(a.matched for a in adj)
    record(5, ok, f"(a) ||Ahat - A^T|| rel {worst_a:.1e} (tol 1e-10); (b) conjugate gap {worst_b:.1e} (tol 1e-7)")


def test_criterion_06_discrete_divergence():
    worst = max(square_level(n, 2, 40.0)[2] for n in (16, 32, 64))
    worst = max(worst, max(square_level(n, 3, 90.0)[2] for n in (16, 32, 64)))
    for domain, n, k, beta in [("lshape", 8, 3, "BETA2"), ("cube", 2, 2, "BETA1")]:
        space = build_space(generate(domain, n), k)
        system = assemble_primal(space, 1.0, make_beta(beta, space.dim, domain=domain), 40.0)
        pairs, factor = solve_primal_system(system, m=4)
        worst = max(worst, max(np.linalg.norm(system.B @ p.vel) for p in pairs))
        adj = solve_adjoint_system(system, pairs, m=4, factor=factor)
        worst = max(worst, max(np.linalg.norm(system.B @ a.vel) for a in adj))
    record(6, worst <= 1e-8, f"max ||B vel|| = {worst:.1e} (tol 1e-8)")


def loglog_slope(dofs, err):
    return float(np.polyfit(np.log(dofs), np.log(err), 1)[0])


def test_criterion_07_adaptive_lshape_p2(tmp_path):
    cfg = AdaptConfig(domain="lshape", k=2, gamma=40.0, theta=0.75, beta="BETA1", m=4, n0=32,
                      max_dofs=150_000, references=LSHAPE_REFS)
    trace = run_algorithm1(cfg, tmp_path / "trace.csv")
    dofs, rerr = trace.dofs, trace.relative_errors(0)
    below = dofs[rerr < 1e-4]
    slope = loglog_slope(dofs[-5:], rerr[-5:]) if len(dofs) >= 5 else np.nan
    ok = len(below) > 0 and below[0] < 150_000 and slope <= -1.5
    first = f"{below[0]}" if len(below) else "never"
    record(7, ok, f"Rerr < 1e-4 first at {first} dofs; last-5 slope {slope:.2f} (need <= -1.5); "
                  f"final Rerr {rerr[-1]:.2e} at {dofs[-1]} dofs")


def test_criterion_08_adaptive_lshape_p3(tmp_path):
    cfg = AdaptConfig(domain="lshape", k=3, gamma=90.0, theta=0.75, beta="BETA1", m=4, n0=32,
                      max_dofs=55_000, references=LSHAPE_REFS)
    trace = run_algorithm1(cfg, tmp_path / "trace.csv")
    dofs, rerr = trace.dofs, trace.relative_errors(0)
    i = int(np.argmin(np.abs(dofs - 50_000)))
    record(8, rerr[i] <= 1e-3, f"Rerr {rerr[i]:.2e} at {dofs[i]} dofs (tol 1e-3)")


def test_criterion_09_estimator_ratio():
    ratios = []
    for n in (16, 32, 64):
        lams, eta1, _ = square_level(n, 2, 40.0)
        ratios.append(abs(lams[0] - SQUARE_LAMBDA1) / eta1**2)
    band = max(ratios) / min(ratios)
    record(9, band <= 10.0, "ratios " + ", ".join(f"{r:.2e}" for r in ratios) + f"; spread {band:.2f} (tol 10)")


PROPERTY_TESTS = [
    "test_quadrature.py::test_exact_for_all_monomials",
    "test_quadrature.py::test_weights_positive_and_sum_to_volume",
    "test_dg_space.py::test_partition_of_unity",
    "test_dg_space.py::test_monomial_roundtrip",
    "test_adaptivity.py::test_dorfler_minimality_random",
    "test_mesh.py::test_conformity_after_random_refinement",
    "test_monitors.py",
    "test_eigensolver.py::test_random_pencils_match_qz",
]


def test_criterion_10_property_suites():
    here = Path(__file__).parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(here / t) for t in PROPERTY_TESTS]],
                          capture_output=True, text=True, cwd=here.parent)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(10, proc.returncode == 0, summary)
