import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import docs
from hcwalk.environment import (
    EnvironmentValidationError, check_document, component_index, general_label,
    lift_connectivity, load_environment, single_component_label,
)
from hcwalk.samples import BUILTIN, builtin, builtin_document, random_document, random_environment
from hcwalk.voltage import LiftVerdict
from oracles import lift_bfs


def failing_check(doc, strict=True):
    report, _ = check_document(doc, strict=strict)
    bad = report.first_failure
    return None if bad is None else bad.name, (bad.message if bad else "")


def test_one_d_example():
    env = builtin("one_d")
    assert env.partition.n_fast == 1 and env.partition.n_astral == 1
    assert env.jumps.c1 == 2
    assert env.eps_max == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert tuple(env.labels) == ("fast:1", "astral:1")


def test_builtins_validate(builtin_name):
    report, env = check_document(builtin_document(builtin_name))
    assert report.ok, report.lines()
    assert all(v is LiftVerdict.CONNECTED_UNBOUNDED for v in lift_connectivity(env).values())


def test_symmetry_violation_names_pair():
    doc = docs.set_edge(docs.one_d(), [1], [-1], v=2.0)
    name, msg = failing_check(doc)
    assert name == "symmetry"
    assert "cell (0), offset (1)" in msg


def test_negative_diagonal():
    doc = docs.one_d()
    docs.set_edge(doc, [0], [2], p0=0.7)
    docs.set_edge(doc, [0], [-2], p0=0.7)
    name, msg = failing_check(doc)
    assert name == "row_sum"
    assert "-0.4" in msg


def test_empty_fast_set_rejected():
    doc = docs.one_d()
    for s in doc["sites"]:
        s["class"] = "astral"
    for e in doc["edges"]:
        e["p0"] = 0.0
        e["v"] = abs(e["v"])
    name, msg = failing_check(doc)
    assert name == "partition"
    assert "B is empty" in msg


def test_load_raises_with_check_name():
    doc = docs.set_edge(docs.one_d(), [1], [-1], v=2.0)
    with pytest.raises(EnvironmentValidationError) as exc:
        load_environment(doc)
    assert exc.value.check == "symmetry"


def test_schema_rejects_unknown_fields_and_bad_class():
    doc = docs.one_d()
    doc["colour"] = "red"
    assert failing_check(doc)[0] == "schema"
    doc = docs.one_d()
    doc["sites"][0]["class"] = "fast"
    assert failing_check(doc)[0] == "schema"


def test_missing_site_rejected():
    doc = docs.one_d()
    doc["sites"].pop()
    assert failing_check(doc)[0] == "sites"


def test_zero_offset_rejected():
    doc = docs.one_d()
    doc["edges"].append(docs.edge([0], [0], 0.1, 0.0))
    assert failing_check(doc)[0] == "edges"


def test_component_index_examples():
    env = builtin("one_d")
    assert component_index(env, [4]) == 0
    assert single_component_label(component_index(env, [4])) == 0
    assert component_index(env, [-3]) == 1
    assert general_label(component_index(env, [-3])) == 2
    env2 = load_environment(docs.two_d_3x3())
    assert env2.labels[component_index(env2, [4, 4])] == "astral:1"


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(-5, 5), min_size=2, max_size=2),
       st.lists(st.integers(-3, 3), min_size=2, max_size=2))
def test_component_index_periodic(seed, x, m):
    env = random_environment(np.random.default_rng(seed), dim=2)
    x = np.array(x)
    shifted = x + np.array(env.period) * np.array(m)
    assert component_index(env, x) == component_index(env, shifted)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_rows_are_probability_vectors(seed, frac):
    env = random_environment(np.random.default_rng(seed))
    eps = max(frac, 1e-3) * env.eps_max
    offsets, probs = env.transition_rows(eps)
    assert np.all(probs >= -1e-12) and np.all(probs <= 1 + 1e-12)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_transition_symmetry(seed, frac):
    env = random_environment(np.random.default_rng(seed))
    eps = frac * env.eps_max
    j = env.jumps
    index = {(int(c), tuple(o)): e for e, (c, o) in enumerate(zip(j.cells, j.offsets.tolist()))}
    for e in range(len(j)):
        partner = index[(int(j.targets[e]), tuple((-j.offsets[e]).tolist()))]
        a = j.p0[e] + eps**2 * j.v[e]
        b = j.p0[partner] + eps**2 * j.v[partner]
        assert abs(a - b) <= 1e-15


def test_eps_above_max_rejected():
    env = builtin("one_d")
    with pytest.raises(ValueError):
        env.transition_rows(env.eps_max * 1.01)


def test_eps_ceiling_clamps():
    doc = docs.one_d()
    doc["eps_ceiling"] = 0.3
    assert load_environment(doc).eps_max == 0.3


def test_eps_max_attained_on_diagonal():
    doc = docs.document([1], {(0,): "fast:1"}, [((0,), (1,), 0.4, -0.1)])
    # lenient: no astral site, so only the structural checks run
    report, env = check_document(doc, strict=False)
    assert report.ok
    # off-diagonal 0.4 - 0.1 eps^2 >= 0 -> 2; diagonal 0.2 + 0.2 eps^2 <= 1 -> 2
    assert env.eps_max == 1.0


def test_lift_bounded_and_split():
    # fast cell whose only moves stay inside the period cell: bounded lift
    doc = docs.document(
        [3], {(0,): "fast:1", (1,): "fast:1", (2,): "astral"},
        [((0,), (1,), 0.5, 0.0), ((1,), (1,), 0.0, 1.0), ((0,), (-1,), 0.0, 1.0)],
    )
    name, msg = failing_check(doc)
    assert name == "connectivity" and "bounded" in msg
    # 2-D single cell jumping by (2,0) only
    doc = docs.document(
        [2, 2], {(0, 0): "fast:1", (1, 0): "astral", (0, 1): "astral", (1, 1): "astral"},
        [((0, 0), (2, 0), 0.25, 0.0), ((0, 0), (1, 0), 0.0, 1.0), ((0, 0), (0, 1), 0.0, 1.0),
         ((1, 0), (0, 1), 0.0, 1.0)],
    )
    report, env = check_document(doc, strict=False)
    assert report.ok
    assert lift_connectivity(env)[0] is LiftVerdict.DISCONNECTED
    _, reaches = lift_bfs(env, 0, radius=2)
    assert not reaches


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lift_connectivity_matches_bfs(seed):
    rng = np.random.default_rng(seed)
    doc = random_document(rng, max_cells=16)
    # drop random p0 edges (both directions) so some lifts break
    keep = []
    for e in doc["edges"]:
        key = tuple(sorted([(tuple(e["from"]), tuple(e["offset"])),
                            (tuple((np.add(e["from"], e["offset"]) % doc["period"]).tolist()),
                             tuple(-np.array(e["offset"])))]))
        keep.append(key)
    drop = {k for k in set(keep) if rng.random() < 0.3}
    for e, k in zip(doc["edges"], keep):
        if k in drop:
            e["p0"] = 0.0
            e["v"] = max(e["v"], 0.0)
    report, env = check_document(doc, strict=False)
    assert report.ok, report.lines()
    c1 = env.jumps.c1
    for k, verdict in lift_connectivity(env).items():
        cells = env.partition.component_cells(k)
        n_small, hits_small = lift_bfs(env, k, radius=2 * c1 + 1)
        n_big, hits_big = lift_bfs(env, k, radius=2 * (2 * c1 + 1))
        unbounded = n_big > n_small
        reaches_all = hits_big
        # a connected unbounded lift reaches every period translate of its start
        # and contains every cell of the component
        if verdict is LiftVerdict.CONNECTED_UNBOUNDED:
            assert reaches_all and unbounded
        else:
            assert not (reaches_all and _covers_component(env, k, cells))


def _covers_component(env, k, cells):
    """Whether the lift from the first cell reaches a copy of every cell."""
    d, period = env.dim, np.array(env.period)
    j = env.jumps
    cellset = set(cells.tolist())
    reached = {int(cells[0])}
    frontier = [int(cells[0])]
    while frontier:
        c = frontier.pop()
        for e in np.flatnonzero((j.cells == c) & (j.p0 > 0)):
            t = int(j.targets[e])
            if t in cellset and t not in reached:
                reached.add(t)
                frontier.append(t)
    return reached == cellset


def test_validation_report_lines():
    report, _ = check_document(docs.one_d())
    lines = report.lines()
    assert lines[0].startswith("PASS") and "schema" in lines[0]
    assert len([ln for ln in lines if ln.startswith("PASS")]) == 16


def test_failure_skips_later_checks():
    doc = docs.set_edge(docs.one_d(), [1], [-1], v=2.0)
    report, env = check_document(doc)
    assert env is None
    statuses = [c.status for c in report.checks]
    i = statuses.index("fail")
    assert all(s == "skip" for s in statuses[i + 1:])


def test_zero_rate_warning():
    report, _ = check_document(docs.decoupled_pair())
    assert report.ok
    assert any("fast:1 -> fast:2" in w for w in report.warnings)


def test_all_builtins_listed():
    assert set(BUILTIN) == {"one_d", "two_cell", "two_fast", "perforated_2d"}
