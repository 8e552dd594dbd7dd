import itertools

import numpy as np
from hypothesis import given, settings, strategies as st

from hcwalk.voltage import LiftVerdict, hermite_rows, lattice_index, lift_verdict

vec2 = st.lists(st.integers(-6, 6), min_size=2, max_size=2)


def brute_index(vectors):
    """Index of the lattice in Z^2 by counting cosets inside a big box."""
    if not vectors:
        return 0
    M = np.array(vectors)
    if np.linalg.matrix_rank(M) < 2:
        return 0
    # index = gcd of all 2x2 minors
    g = 0
    for a, b in itertools.combinations(vectors, 2):
        g = np.gcd(g, abs(a[0] * b[1] - a[1] * b[0]))
    return int(g)


@settings(max_examples=200, deadline=None)
@given(st.lists(vec2, max_size=5))
def test_lattice_index_matches_minor_gcd(vectors):
    assert lattice_index(vectors, 2) == brute_index(vectors)


@settings(max_examples=100, deadline=None)
@given(st.lists(vec2, min_size=1, max_size=5))
def test_hermite_rows_span_same_lattice(vectors):
    basis = hermite_rows(vectors, 2)
    # every input vector is an integer combination of the basis
    B = np.array(basis, dtype=float).reshape(-1, 2)
    for v in vectors:
        if not any(v):
            continue
        coef, *_ = np.linalg.lstsq(B.T, np.array(v, dtype=float), rcond=None)
        assert np.allclose(coef, np.round(coef), atol=1e-9)
        assert np.allclose(B.T @ np.round(coef), v)


def test_one_dimensional_index():
    assert lattice_index([[2], [3]], 1) == 1
    assert lattice_index([[4], [6]], 1) == 2
    assert lattice_index([], 1) == 0


def test_verdicts():
    # single node with a self loop of one period: connected and unbounded
    assert lift_verdict([0], [(0, 0, [1])], 1) is LiftVerdict.CONNECTED_UNBOUNDED
    # two nodes linked without translation: bounded
    assert lift_verdict([0, 1], [(0, 1, [0])], 1) is LiftVerdict.BOUNDED
    # unreachable node
    assert lift_verdict([0, 1], [(0, 0, [1])], 1) is LiftVerdict.DISCONNECTED
    # cycle of voltage 2: lift splits into two copies
    assert lift_verdict([0], [(0, 0, [2])], 1) is LiftVerdict.DISCONNECTED
    # 2-D with only horizontal translations
    assert lift_verdict([0], [(0, 0, [1, 0])], 2) is LiftVerdict.DISCONNECTED
    assert lift_verdict([0], [(0, 0, [1, 0]), (0, 0, [0, 1])], 2) is LiftVerdict.CONNECTED_UNBOUNDED
