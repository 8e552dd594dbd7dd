"""Small environment documents built by hand for the validation tests."""

import copy

from hcwalk.samples import builtin_document


def edge(src, off, p0=0.0, v=0.0):
    return {"from": list(src), "offset": list(off), "p0": p0, "v": v}


def pair(period, src, off, p0=0.0, v=0.0):
    """Both directions of one symmetric entry."""
    tgt = [(s + o) % p for s, o, p in zip(src, off, period)]
    return [edge(src, off, p0, v), edge(tgt, [-o for o in off], p0, v)]


def document(period, classes, pairs, **extra):
    """``classes`` maps coordinate tuples to class strings; ``pairs`` are (src, off, p0, v)."""
    edges = []
    for src, off, p0, v in pairs:
        edges += pair(period, src, off, p0, v)
    doc = {
        "dim": len(period),
        "period": list(period),
        "sites": [{"coord": list(c), "class": k} for c, k in sorted(classes.items())],
        "edges": edges,
    }
    doc.update(extra)
    return doc


def one_d():
    return copy.deepcopy(builtin_document("one_d"))


def set_edge(doc, src, off, **values):
    for e in doc["edges"]:
        if e["from"] == list(src) and e["offset"] == list(off):
            e.update(values)
            return doc
    raise KeyError((src, off))


def decoupled_pair():
    """Two copies of the one-cell fast component on period 4: Theta = 8 each."""
    return document(
        [4],
        {(0,): "fast:1", (1,): "astral", (2,): "fast:2", (3,): "astral"},
        [((0,), (4,), 0.5, -1.5), ((2,), (4,), 0.5, -1.5),
         ((0,), (1,), 0.0, 1.0), ((0,), (-1,), 0.0, 1.0),
         ((2,), (1,), 0.0, 1.0), ((2,), (-1,), 0.0, 1.0)],
    )


def two_d_3x3():
    """Period (3,3), one astral site at (1,1), the rest one fast component."""
    period = [3, 3]
    classes = {(i, j): "fast:1" for i in range(3) for j in range(3)}
    classes[(1, 1)] = "astral"
    pairs = []
    for i in range(3):
        for j in range(3):
            if (i, j) == (1, 1):
                continue
            for off in ((1, 0), (0, 1)):
                tgt = ((i + off[0]) % 3, (j + off[1]) % 3)
                if tgt != (1, 1):
                    pairs.append(((i, j), off, 0.2, 0.0))
    pairs.append(((0, 1), (1, 0), 0.0, 1.0))
    return document(period, classes, pairs)


def builtin(name):
    return copy.deepcopy(builtin_document(name))


def _partner(doc, src, off):
    tgt = [(s + o) % p for s, o, p in zip(src, off, doc["period"])]
    return tgt, [-o for o in off]


def set_pair(doc, src, off, **values):
    """Change an entry and its symmetric partner together."""
    set_edge(doc, src, off, **values)
    tgt, neg = _partner(doc, src, off)
    if (list(tgt), neg) != (list(src), list(off)):
        set_edge(doc, tgt, neg, **values)
    return doc


def drop_edge(doc, src, off):
    doc["edges"] = [e for e in doc["edges"] if not (e["from"] == list(src) and e["offset"] == list(off))]
    return doc


def shift_offset(doc, src, old, new):
    for e in doc["edges"]:
        if e["from"] == list(src) and e["offset"] == list(old):
            e["offset"] = list(new)
    return doc


def invalid_suite():
    """(expected failing check, document) for twenty hand-built invalid environments."""
    out = []
    # broken symmetry
    out.append(("symmetry", set_edge(builtin("one_d"), [1], [-1], v=2.0)))
    out.append(("symmetry", set_edge(builtin("one_d"), [0], [2], p0=0.4)))
    out.append(("symmetry", set_edge(builtin("two_cell"), [2], [1], v=0.5)))
    out.append(("symmetry", drop_edge(builtin("perforated_2d"), [0, 1], [0, 1])))
    # bad row sums
    d = builtin("one_d")
    out.append(("row_sum", set_pair(set_pair(d, [0], [2], p0=0.7), [0], [-2], p0=0.7)))
    d = builtin("two_cell")
    for src, off in (([0], [1]), ([0], [-3])):
        set_pair(d, src, off, p0=0.6)
    out.append(("row_sum", d))
    d = builtin("two_fast")
    out.append(("row_sum", set_pair(set_pair(d, [2], [4], p0=0.6), [2], [-4], p0=0.6)))
    d = builtin("perforated_2d")
    for off in ([1, 0], [-1, 0], [0, 1], [0, -1]):
        set_pair(d, [0, 0], off, p0=0.3)
    out.append(("row_sum", d))
    # range violations against a declared c1
    out.append(("range", dict(builtin("one_d"), c1=1)))
    out.append(("range", dict(builtin("two_cell"), c1=2)))
    out.append(("range", dict(builtin("two_fast"), c1=3)))
    d = dict(builtin("perforated_2d"), c1=1)
    d["edges"] += [edge([1, 1], [0, 2], 0.0, 0.1), edge([1, 1], [0, -2], 0.0, 0.1)]
    out.append(("range", d))
    # fast lifts that are not connected and unbounded
    d = builtin("one_d")
    out.append(("connectivity", shift_offset(shift_offset(d, [0], [2], [4]), [0], [-2], [-4])))
    d = builtin("two_cell")
    out.append(("connectivity", drop_edge(drop_edge(d, [0], [-3]), [1], [3])))
    d = builtin("perforated_2d")
    for src, off in (([0, 0], [0, 1]), ([0, 0], [0, -1]), ([0, 1], [0, -1]), ([0, 1], [0, 1])):
        drop_edge(d, src, off)
    out.append(("connectivity", d))
    d = builtin("two_fast")
    out.append(("connectivity", shift_offset(shift_offset(d, [2], [4], [8]), [2], [-4], [-8])))
    # P0 coupling between different classes
    d = builtin("one_d")
    set_pair(set_pair(d, [0], [2], p0=0.4), [0], [-2], p0=0.4)
    out.append(("block_structure", set_pair(set_pair(d, [0], [1], p0=0.1), [0], [-1], p0=0.1)))
    d = builtin("two_fast")
    for src in ([0], [2]):
        set_pair(set_pair(d, src, [4], p0=0.4), src, [-4], p0=0.4)
    out.append(("block_structure", set_pair(set_pair(d, [0], [2], p0=0.1), [0], [-2], p0=0.1)))
    out.append(("block_structure", set_pair(builtin("two_cell"), [2], [1], p0=0.1)))
    out.append(("block_structure", set_pair(builtin("perforated_2d"), [1, 0], [0, 1], p0=0.1)))
    return out


def valid_suite():
    return [builtin(n) for n in ("one_d", "two_cell", "two_fast", "perforated_2d")] + [two_d_3x3()]


def two_fast_unequal():
    """two_fast with the second component's jump weight halved: Theta = (8, 4)."""
    d = builtin("two_fast")
    return set_pair(set_pair(d, [2], [4], p0=0.25), [2], [-4], p0=0.25)
