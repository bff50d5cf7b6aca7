import itertools
import math
import re
import threading
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference_problems as ref
from uracma.errors import ConfigurationError, EvaluationError
from uracma.problems import (
    FeMeter,
    eval_lower,
    eval_lower_batch,
    eval_upper,
    eval_upper_batch,
    make_problem,
    make_smd,
    make_synthetic_quadratic,
    make_wra,
    mirror,
)
from uracma.problems.synthetic import optimal_response

FIXTURES = Path(__file__).parent / "fixtures"
NAME = re.compile(r"^(SMD|WRA)(\d+)\[(\d+)\+(\d+)\]$|^QUAD\(c=([^)]+)\)\[(\d+)\+(\d+)\]$")


def load_fixture(path):
    rows = []
    for line in path.read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        name, *nums = [t.strip() for t in line.split(",")]
        rows.append((name, [float(t) for t in nums]))
    return rows


def problem_for(name):
    m = NAME.match(name)
    assert m, name
    if m.group(1):
        suite, idx, dx, dy = m.group(1).lower(), int(m.group(2)), int(m.group(3)), int(m.group(4))
        return make_problem(suite, idx, dx, dy)
    return make_synthetic_quadratic(int(m.group(6)), int(m.group(7)), float(m.group(5)))


FIXTURE_FILES = sorted(FIXTURES.glob("*.txt"))


def test_fixture_set_is_complete():
    names = {p.stem for p in FIXTURE_FILES}
    assert names == {f"smd{i}" for i in range(1, 9)} | {f"wra{i}" for i in range(1, 12)} | {"synthetic"}


@pytest.mark.parametrize("path", FIXTURE_FILES, ids=lambda p: p.stem)
def test_problem_matches_fixture(path):
    rows = load_fixture(path)
    assert len(rows) >= 30
    for name, nums in rows:
        prob = problem_for(name)
        x = np.array(nums[: prob.d_x])
        y = np.array(nums[prob.d_x: prob.d_x + prob.d_y])
        F, f = nums[-2:]
        assert len(nums) == prob.d_x + prob.d_y + 2
        assert eval_upper(prob, x, y) == pytest.approx(F, rel=1e-12, abs=1e-12), name
        assert eval_lower(prob, x, y) == pytest.approx(f, rel=1e-12, abs=1e-12), name


@pytest.mark.parametrize("path", FIXTURE_FILES, ids=lambda p: p.stem)
def test_fixture_optimum_rows_match_metadata(path):
    seen = set()
    for name, nums in load_fixture(path):
        if name in seen:
            continue
        seen.add(name)
        prob = problem_for(name)
        x = np.array(nums[: prob.d_x])
        y = np.array(nums[prob.d_x: prob.d_x + prob.d_y])
        assert np.array_equal(x, prob.optimum.x) and np.array_equal(y, prob.optimum.y), name
        assert nums[-2] == pytest.approx(prob.optimum.F, abs=1e-12)
        assert nums[-1] == pytest.approx(prob.optimum.f, abs=1e-12)


@pytest.mark.parametrize("suite, count", [("smd", 8), ("wra", 11)])
def test_vectorised_batch_matches_scalar_reference(suite, count):
    rng = np.random.default_rng(0)
    for idx in range(1, count + 1):
        for dx, dy in [(2, 4), (3, 3), (4, 6)]:
            if suite == "smd" and dx > dy:
                continue
            prob = make_problem(suite, idx, dx, dy)
            X = rng.uniform(prob.lower_x, prob.upper_x, (25, dx))
            Y = rng.uniform(prob.lower_y, prob.upper_y, (25, dy))
            Fv = eval_upper_batch(prob, X, Y)
            fv = eval_lower_batch(prob, X, Y)
            for i in range(25):
                F, f = ref.reference(suite, idx, X[i], Y[i])
                assert Fv[i] == pytest.approx(F, rel=1e-12, abs=1e-12)
                assert fv[i] == pytest.approx(f, rel=1e-12, abs=1e-12)


# -- mirror -------------------------------------------------------------------

@pytest.mark.parametrize("q, expected", [(0.5, 0.5), (1.2, 0.8), (-0.3, 0.3), (0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (-1.0, 1.0)])
def test_mirror_examples(q, expected):
    assert mirror(np.array([q]), np.array([0.0]), np.array([1.0]))[0] == pytest.approx(expected, abs=1e-15)


def test_mirror_accepts_lists():
    assert mirror([1.2, -0.3], [0, 0], [1, 1]).tolist() == pytest.approx([0.8, 0.3])


def test_mirror_keeps_feasible_points_bitwise():
    rng = np.random.default_rng(1)
    q = rng.uniform(-5, 10, (100, 4))
    assert mirror(q, np.full(4, -5.0), np.full(4, 10.0)) is q or np.array_equal(
        mirror(q, np.full(4, -5.0), np.full(4, 10.0)), q
    )


def test_mirror_rejects_nonfinite():
    with pytest.raises(EvaluationError):
        mirror(np.array([0.1, np.inf]), np.zeros(2), np.ones(2))
    with pytest.raises(EvaluationError):
        mirror(np.array([np.nan]), np.zeros(1), np.ones(1))


def _fuzz_points(rng, n):
    lower = rng.uniform(-10, 10, (n, 3))
    width = 10.0 ** rng.uniform(-3, 2, (n, 3))
    upper = lower + width
    q = lower + rng.uniform(-10, 11, (n, 3)) * width
    return q, lower, upper


def test_mirror_fuzzed_feasibility_idempotence_periodicity():
    rng = np.random.default_rng(12345)
    q, lower, upper = _fuzz_points(rng, 10_000)
    width = upper - lower
    m = mirror(q, lower, upper)
    assert np.all((m >= lower) & (m <= upper))
    assert np.array_equal(mirror(m, lower, upper), m)
    for i in range(3):
        shifted = q.copy()
        shifted[:, i] += 2 * width[:, i]
        tol = 1e-12 * (np.abs(q) + np.abs(lower) + width)
        assert np.all(np.abs(mirror(shifted, lower, upper) - m) <= tol)


@settings(max_examples=300)
@given(
    st.floats(-1e3, 1e3),
    st.floats(-100, 100),
    st.floats(1e-3, 100),
    st.integers(-5, 5),
)
def test_mirror_properties(q, lower, width, k):
    lo, up = np.array([lower]), np.array([lower + width])
    m = mirror(np.array([q]), lo, up)
    assert lo[0] <= m[0] <= up[0]
    assert mirror(m, lo, up)[0] == m[0]
    w = up[0] - lo[0]
    shifted = mirror(np.array([q + 2 * k * w]), lo, up)[0]
    assert shifted == pytest.approx(m[0], abs=1e-9 * (1 + abs(q) + abs(k) * w))


# -- evaluation and metering --------------------------------------------------

def test_eval_counts_and_plain_values():
    prob = make_synthetic_quadratic(2, 2)
    meter = FeMeter(1000)
    assert eval_upper(prob, [1.0, 2.0], [0.0, 0.0], meter) == 10.0
    assert meter.upper_count == 1 and meter.lower_count == 0
    for _ in range(100):
        eval_lower(prob, [1.0, 2.0], [1.0, 2.0], meter)
    assert meter.lower_count == 100
    assert meter.total == 101 and meter.remaining == 899


def test_eval_uses_mirrored_point():
    prob = make_synthetic_quadratic(2, 2)
    delta = 0.7
    direct = eval_upper(prob, [5.0 - delta, 1.0], [0.3, 0.1])
    assert eval_upper(prob, [5.0 + delta, 1.0], [0.3, 0.1]) == pytest.approx(direct, rel=1e-15)
    y = np.array([-5.0 - delta, 0.0])
    reflected = mirror(y, prob.lower_y, prob.upper_y)
    assert reflected[0] == pytest.approx(-5.0 + delta, rel=1e-15)
    assert eval_lower(prob, [1.0, 1.0], y) == eval_lower(prob, [1.0, 1.0], reflected)


def test_batch_evaluation_broadcasts_single_rows_and_counts():
    prob = make_wra(5, 3, 2)
    meter = FeMeter(100)
    Y = np.random.default_rng(0).uniform(-3, 3, (7, 2))
    v = eval_lower_batch(prob, np.ones(3), Y, meter)
    assert v.shape == (7,) and meter.lower_count == 7
    assert v[3] == eval_lower(prob, np.ones(3), Y[3])


def test_batch_evaluation_rejects_wrong_shapes():
    prob = make_wra(1, 2, 2)
    with pytest.raises(ConfigurationError):
        eval_upper_batch(prob, np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ConfigurationError):
        eval_upper_batch(prob, np.zeros((3, 2)), np.zeros((2, 2)))


def test_nonfinite_objective_raises_evaluation_error():
    prob = make_smd(2, 2, 2)
    # log(0) at the boundary of the log domain is only reachable by bypassing the box
    from dataclasses import replace

    broken = replace(prob, lower_y=np.array([-5.0, -1.0]))
    with pytest.raises(EvaluationError):
        eval_upper(broken, [0.0, 0.0], [0.0, -0.5])


def test_meter_is_atomic_under_threads():
    meter = FeMeter(10**9)

    def work():
        for _ in range(5000):
            meter.add_lower(3)
            meter.add_upper()

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert meter.lower_count == 8 * 5000 * 3
    assert meter.upper_count == 8 * 5000


def test_meter_concurrent_evaluations_are_conserved():
    prob = make_synthetic_quadratic(3, 3)
    meter = FeMeter(10**9)
    X = np.zeros((16, 3))

    def work():
        for _ in range(300):
            eval_lower_batch(prob, X, X, meter)

    threads = [threading.Thread(target=work) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert meter.lower_count == 6 * 300 * 16


def test_meter_budget_flags():
    meter = FeMeter(10)
    assert not meter.exhausted
    meter.add_lower(12)
    assert meter.exhausted and meter.remaining == 0
    assert meter.snapshot() == (0, 12)
    with pytest.raises(ConfigurationError):
        FeMeter(0)


# -- SMD ------------------------------------------------------------------------

def test_smd_rejects_bad_configuration():
    with pytest.raises(ConfigurationError):
        make_smd(1, 6, 5)
    with pytest.raises(ConfigurationError):
        make_smd(9, 2, 2)
    with pytest.raises(ConfigurationError):
        make_smd(0, 2, 2)
    with pytest.raises(ConfigurationError):
        make_smd(5, 2, 2)  # one Rosenbrock coordinate only
    with pytest.raises(ConfigurationError):
        make_problem("nope", 1, 2, 2)


def test_smd_expected_failure_marker():
    assert make_smd(6, 5, 10).expected_failure
    assert not any(make_smd(i, 5, 10).expected_failure for i in (1, 2, 3, 4, 5, 7, 8))
    assert "infinite" in make_smd(6, 5, 10).comment


@pytest.mark.parametrize("idx", range(1, 9))
def test_smd_optimum_is_feasible_and_zero(idx):
    prob = make_smd(idx, 4, 6)
    opt = prob.optimum
    assert np.all((opt.x >= prob.lower_x) & (opt.x <= prob.upper_x))
    assert np.all((opt.y >= prob.lower_y) & (opt.y <= prob.upper_y))
    assert eval_upper(prob, opt.x, opt.y) == pytest.approx(opt.F, abs=1e-12)
    assert eval_lower(prob, opt.x, opt.y) == pytest.approx(opt.f, abs=1e-12)


def _grid(lower, upper, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lower, upper)]
    return np.array(list(itertools.product(*axes)))


@pytest.mark.parametrize("idx", [1, 2, 3, 4, 5, 7, 8])
def test_smd_optimal_response_by_grid(idx):
    """At x*, no grid point in the lower box beats y* at the lower level."""
    prob = make_smd(idx, 1, 3) if idx in (5, 8) else make_smd(idx, 2, 2)
    Y = _grid(prob.lower_y, prob.upper_y, 61)
    x = prob.optimum.x
    fv = eval_lower_batch(prob, x, Y)
    assert fv.min() >= prob.optimum.f - 1e-9


@pytest.mark.parametrize("idx", [1, 2, 3, 4, 5, 7, 8])
def test_smd_value_function_minimum_by_grid(idx):
    """Phi(x) = F(x, y*(x)) on an x grid is never below F*."""
    prob = make_smd(idx, 2, 3)
    for x in _grid(prob.lower_x, prob.upper_x, 9):
        Y = _grid(prob.lower_y, prob.upper_y, 25)
        fv = eval_lower_batch(prob, x, Y)
        y_best = Y[np.argmin(fv)]
        # refine around the grid minimiser
        for scale in (0.5, 0.1, 0.02):
            local = y_best + scale * (_grid(-np.ones(3), np.ones(3), 7))
            local = np.clip(local, prob.lower_y, prob.upper_y)
            lv = eval_lower_batch(prob, x, local)
            y_best = local[np.argmin(lv)]
        assert eval_upper(prob, x, y_best) >= prob.optimum.F - 1e-2


# -- WRA --------------------------------------------------------------------------

@pytest.mark.parametrize("idx", range(1, 12))
def test_wra_antisymmetry_exact(idx):
    rng = np.random.default_rng(idx)
    prob = make_wra(idx, 4, 3)
    X = rng.uniform(-3, 3, (1000, 4))
    Y = rng.uniform(-3, 3, (1000, 3))
    assert np.array_equal(eval_lower_batch(prob, X, Y), -eval_upper_batch(prob, X, Y))


def test_wra_box_and_metadata():
    prob = make_wra(1, 5, 5)
    assert np.all(prob.lower_x == -3) and np.all(prob.upper_y == 3)
    assert prob.comment == "Bilinear"
    assert make_wra(4, 5, 5).expected_failure
    with pytest.raises(ConfigurationError):
        make_wra(12, 2, 2)


def test_wra1_optimal_responses_are_vertices():
    prob = make_wra(1, 3, 3)
    x = np.array([0.4, -1.0, 2.0])
    Y = _grid(-3 * np.ones(3), 3 * np.ones(3), 13)
    best = Y[np.argmin(eval_lower_batch(prob, x, Y))]
    assert np.array_equal(np.abs(best), [3, 3, 3])
    assert np.array_equal(np.sign(best), np.sign(x))


@pytest.mark.parametrize("idx", [idx for idx in range(1, 12) if idx != 4])
@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (1, 2)])
def test_wra_minmax_saddle_by_grid(idx, dims):
    dx, dy = dims
    prob = make_wra(idx, dx, dy)
    Xg = _grid(-3 * np.ones(dx), 3 * np.ones(dx), 61)
    Yg = _grid(-3 * np.ones(dy), 3 * np.ones(dy), 121)
    phi = np.array([eval_upper_batch(prob, x, Yg).max() for x in Xg])
    # the grid contains the optimum exactly, so the grid min-max equals F*
    assert phi.min() == pytest.approx(prob.optimum.F, abs=1e-9)
    assert eval_upper_batch(prob, prob.optimum.x, Yg).max() == pytest.approx(prob.optimum.F, abs=1e-9)


def test_wra4_has_a_thin_optimal_response_set():
    prob = make_wra(4, 2, 2)
    assert eval_upper(prob, [0, 0], [3.0, -3.0]) == 1.0
    assert eval_upper(prob, [0, 0], [3.0, 2.9]) == 0.0


# -- synthetic ------------------------------------------------------------------

def test_synthetic_examples():
    prob = make_synthetic_quadratic(2, 2, conflict=1.0)
    assert np.array_equal(optimal_response([1.0, 2.0], 2, 1.0), [1.0, 2.0])
    assert eval_upper(prob, [1.0, 2.0], [1.0, 2.0]) == 5.0
    for c in (0.0, 0.3, 1.0, 2.0):
        p = make_synthetic_quadratic(3, 2, c)
        assert np.array_equal(optimal_response(np.zeros(3), 2, c), np.zeros(2))
        assert eval_upper(p, np.zeros(3), np.zeros(2)) == 0.0
    assert prob.name == "QUAD(c=1)"


def test_synthetic_decoupled_lower_level():
    prob = make_synthetic_quadratic(3, 3, conflict=0.0)
    Y = np.random.default_rng(0).uniform(-5, 5, (50, 3))
    a = eval_lower_batch(prob, np.array([1.0, -2.0, 4.0]), Y)
    b = eval_lower_batch(prob, np.zeros(3), Y)
    assert np.array_equal(a, b)


def test_synthetic_grid_oracle():
    prob = make_synthetic_quadratic(2, 2, conflict=1.0)
    axis = np.linspace(-5, 5, 101)
    Y = np.array(list(itertools.product(axis, axis)))
    step = axis[1] - axis[0]
    rng = np.random.default_rng(99)
    for x in rng.uniform(-5, 5, (50, 2)):
        best = Y[np.argmin(eval_lower_batch(prob, x, Y))]
        y_star = optimal_response(x, 2, 1.0)
        assert np.all(np.abs(best - y_star) <= step / 2 + 1e-12)
        assert eval_upper(prob, x, y_star) == pytest.approx(float(x @ x), rel=1e-15)


@pytest.mark.parametrize("dx, dy", [(3, 2), (2, 4)])
def test_synthetic_head_padding(dx, dy):
    x = np.arange(1.0, dx + 1) / 2
    y_star = optimal_response(x, dy, 1.0)
    k = min(dx, dy)
    assert np.array_equal(y_star[:k], x[:k]) and not y_star[k:].any()


def test_problem_validates_boxes():
    from uracma.problems import BilevelProblem

    with pytest.raises(ConfigurationError):
        BilevelProblem(
            name="bad", d_x=1, d_y=1,
            lower_x=np.zeros(1), upper_x=np.zeros(1),
            lower_y=np.zeros(1), upper_y=np.ones(1),
            F=lambda X, Y: X[:, 0], f=lambda X, Y: Y[:, 0],
        )
