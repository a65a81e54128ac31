"""Acceptance criteria, one test per criterion.

Each test runs the matching validation check, prints its PASS/FAIL line and
then re-asserts the stated tolerance on the measured numbers. Run directly
(``python3 tests/test_acceptance.py``) for the summary table only.
"""

import sys

import numpy as np
import pytest

from erflow.cli.validation import CHECKS

SEED = 42
_cache = {}


def result(n):
    if n not in _cache:
        _cache[n] = CHECKS[n](SEED)
    return _cache[n]


@pytest.fixture
def run(capsys):
    def go(n):
        r = result(n)
        with capsys.disabled():
            print("\n" + r.line())
        return r.measured, r.passed
    return go


def test_c01_monotonicity(run):
    m, passed = run(1)
    assert m["worst_margin"] >= -1e-10
    assert passed


def test_c02_lipschitz(run):
    m, passed = run(2)
    assert m["max_ratio"] <= m["mu2"] + 1e-8
    assert passed


def test_c03_gateaux(run):
    m, passed = run(3)
    assert m["max_error"] <= 1e-5
    assert set(m["worst"]) == {"REGULAR", "REGULARIZED_BINGHAM", "EXTENDED_BINGHAM", "GIVEN_MU"}
    assert passed


def test_c04_infsup(run):
    m, passed = run(4)
    th = np.array(m["beta_taylor_hood"])
    assert (th.max() - th.min()) / th.max() < 0.10
    assert th.min() > 0.1
    for s, bt, bp in zip(m["spurious_p1p1"], th, m["beta_p1p1"]):
        assert s > 0 or bt >= 2 * bp
    assert passed


def test_c05_electric(run):
    m, passed = run(5)
    assert m["plate_error"] <= 1e-10
    assert m["interface_error"] <= 1e-9
    assert passed


def test_c06_manufactured(run):
    m, passed = run(6)
    assert m["poiseuille_velocity"] <= 1e-9 and m["poiseuille_pressure"] <= 1e-9
    assert min(m["velocity_rates"]) >= 2.7
    assert min(m["pressure_rates"]) >= 1.7
    assert passed


def test_c07_bingham_channel(run):
    m, passed = run(7)
    assert m["profile_error"] <= 0.02
    assert abs(m["plug_half_width"] - m["expected"]) / m["expected"] <= 0.10
    assert passed


def test_c08_augmented_lagrangian(run):
    m, passed = run(8)
    assert m["iterations"] <= 200
    assert m["final_div"] < 1e-8
    assert m["div_decreasing"] and m["p_error_nonincreasing"]
    assert passed


def test_c09_contraction(run):
    m, passed = run(9)
    assert m["closed_form_error"] <= 1e-12
    assert m["max_ratio"] <= m["k_t0"] + 0.02
    assert passed


def test_c10_continuation(run):
    m, passed = run(10)
    d = np.array(m["differences"])
    assert np.all(np.diff(d) < 0)
    assert m["relative"][-1] < 1e-3
    assert passed


def test_c11_inertia(run):
    m, passed = run(11)
    assert m["skew"] <= 1e-12
    for orders in m["orders"].values():
        assert all(abs(o - 1.0) < 0.1 for o in orders)
    assert passed


def test_c12_orientation_factor(run):
    m, passed = run(12)
    assert m["max_error"] <= 1e-14
    assert passed


if __name__ == "__main__":
    failed = 0
    for n in sorted(CHECKS):
        r = result(n)
        print(r.line(), flush=True)
        failed += not r.passed
    sys.exit(1 if failed else 0)
