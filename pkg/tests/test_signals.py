import numpy as np
import pytest
from hypothesis import given, strategies as st

from tbsd.signals import (
    PeriodicSpec,
    QuasiSpec,
    composite_quasi_bound,
    compose,
    detect_period,
    lcm_of,
    make_periodic,
    make_quasi,
    outer_2d,
    verify_quasi,
)


def brute_period(s, tol=1e-9):
    # independent scan: every shift checked pairwise, no vector tricks
    n = len(s)
    for T in range(2, n):
        if all(abs(s[i + T] - s[i]) <= tol for i in range(n - T)):
            return T
    return None


def test_make_periodic_examples():
    assert make_periodic(PeriodicSpec([1, 2], 6)).tolist() == [1, 2, 1, 2, 1, 2]
    assert make_periodic(PeriodicSpec([1, 2, 3], 7)).tolist() == [1, 2, 3, 1, 2, 3, 1]


@pytest.mark.parametrize("mode,n", [([3], 6), ([1, 2, 3], 3), ([1, 2, 3], 2)])
def test_make_periodic_rejects_bad_period(mode, n):
    with pytest.raises(ValueError):
        PeriodicSpec(mode, n)


def test_detect_period_examples():
    assert detect_period([1, 2, 1, 2, 1, 2], 0) == 2
    assert detect_period([1, 2, 3, 4, 5, 6], 0) is None
    with pytest.raises(ValueError):
        detect_period([1, 2])


def test_compose_two_three_gives_six():
    a = make_periodic(PeriodicSpec([0.0, 1.0], 12))
    b = make_periodic(PeriodicSpec([0.0, 0.5, 2.0], 12))
    c = compose([a, b], [1, 1])
    assert detect_period(c) == 6 == brute_period(c.tolist())


def test_compose_identity_and_zero_weight():
    a = np.array([0.3, 0.1, 0.7, 0.3, 0.1, 0.7])
    b = np.array([5.0, -1.0, 2.0, 5.0, -1.0, 2.0])
    assert np.array_equal(compose([a], [1.0]), a)
    assert np.array_equal(compose([a, b], [1.0, 0.0]), a)
    with pytest.raises(ValueError):
        compose([], [])


def test_compose_pads_by_periodic_extension():
    short = make_periodic(PeriodicSpec([1.0, 2.0], 4))
    long = np.zeros(9)
    out = compose([short, long], [1, 1])
    assert out.size == 9
    assert out.tolist() == [1, 2, 1, 2, 1, 2, 1, 2, 1]


@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_compose_period_divides_lcm(t1, t2, seed):
    r = np.random.default_rng(seed)
    N = 3 * lcm_of([t1, t2]) + 1
    a = make_periodic(PeriodicSpec(r.integers(0, 9, t1).astype(float), N))
    b = make_periodic(PeriodicSpec(r.integers(0, 9, t2).astype(float), N))
    T = detect_period(compose([a, b], [1.0, 2.0]))
    assert T is not None and lcm_of([t1, t2]) % T == 0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.integers(7, 30))
def test_periodic_output_satisfies_shift(mode, n):
    spec = PeriodicSpec(mode, n)
    s = make_periodic(spec)
    T = spec.period
    assert np.array_equal(s[T:], s[:-T])
    found = detect_period(s, 0)
    assert found == brute_period(s.tolist(), 0)
    # the smallest divisor d of T under which the mode repeats cyclically
    d = next(d for d in range(1, T + 1) if T % d == 0 and np.array_equal(np.roll(spec.mode, d), spec.mode))
    if d > 1 and n >= 2 * T:
        # two periods with p + q - gcd(p, q) <= n force gcd(p, q) to be a period too
        assert found == d


def test_make_quasi_examples():
    mode = np.arange(10) / 10.0
    periodic = make_quasi(QuasiSpec(mode, (10, 10, 10), 0.0), 3)
    assert detect_period(periodic) == 10
    spec = QuasiSpec(mode, (10, 12, 11), 0.1)
    s1, s2 = make_quasi(spec, 42), make_quasi(spec, 42)
    assert np.array_equal(s1, s2)
    ok, devs = verify_quasi(s1, spec)
    assert ok and len(devs) == 3 and max(devs) <= 0.01
    with pytest.raises(ValueError):
        QuasiSpec(mode, (10, 12), -0.1)


def test_quasi_spec_invariants():
    with pytest.raises(ValueError):
        QuasiSpec([1, 2, 3], (5,), 0.0)  # fewer than 2 segments
    with pytest.raises(ValueError):
        QuasiSpec([1, 2, 3], (2, 5), 0.0)  # segment shorter than the mode


def test_verify_quasi_detects_one_bad_segment():
    spec = PeriodicSpec([1.0, 2.0, 3.0], 12)
    s = make_periodic(spec)
    q = QuasiSpec.from_periodic(spec, 0.0)
    assert verify_quasi(s, q)[0]
    s[4] += 0.5
    ok, devs = verify_quasi(s, q)
    assert not ok
    assert sum(d > 0 for d in devs) == 1
    with pytest.raises(ValueError):
        verify_quasi(s[:-1], q)


@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_generated_quasi_always_verifies(seed, sigma):
    r = np.random.default_rng(seed)
    T = int(r.integers(2, 8))
    segs = tuple(int(v) for v in r.integers(T, T + 4, int(r.integers(2, 6))))
    spec = QuasiSpec(r.normal(size=T), segs, sigma)
    assert verify_quasi(make_quasi(spec, seed), spec)[0]


def test_composite_bound_examples():
    spec = QuasiSpec([1.0, 0.0, 2.0], (3, 3, 3), 0.0)
    s = make_quasi(spec, 0)
    lhs, bound = composite_quasi_bound([(s, spec)], [1.0], (3, 6))
    assert lhs == 0.0 <= bound
    spec2 = QuasiSpec([1.0, 0.0, 2.0], (3, 3, 3), 0.2)
    s2 = make_quasi(spec2, 9)
    lhs, _ = composite_quasi_bound([(s2, spec2), (s2, spec2)], [1.0, -1.0], (0, 3))
    assert lhs == 0.0
    with pytest.raises(ValueError):
        composite_quasi_bound([(s, spec)], [1.0], (0, 4))


def test_outer_2d():
    assert outer_2d([1, 2], [3, 4]).tolist() == [[3, 4], [6, 8]]
    p = make_periodic(PeriodicSpec([1.0, 2.0, 5.0], 9))
    M = outer_2d([1.0, 2.0, 3.0], p)
    assert all(detect_period(row) == 3 for row in M)
    q = make_quasi(QuasiSpec([0.2, 0.4, 0.1], (3, 4), 0.1), 1)
    M = outer_2d(np.ones(3), q)
    assert all(np.array_equal(row, q) for row in M)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.lists(st.floats(-3, 3), min_size=1, max_size=5))
def test_outer_transpose_symmetry(a, b):
    assert np.array_equal(outer_2d(a, b).T, outer_2d(b, a))
