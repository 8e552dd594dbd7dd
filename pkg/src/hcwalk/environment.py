"""High-contrast periodic environments on Z^d.

An environment is a periodic symmetric transition kernel
``P(eps) = P0 + eps**2 * V`` stored per (cell, offset) pair, together with
a partition of the period cell into astral sites (where ``P0`` is the
identity) and fast components (on which ``P0`` moves at unit rate).

Cells are flattened in C order over ``period``. Component labels are
0-based internally: ``0 .. N-1`` are the fast components ``fast:1 ..
fast:N`` and ``N .. N+M-1`` the astral sites ``astral:1 .. astral:M``,
astral sites numbered in lexicographic cell order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .voltage import LiftVerdict, lift_verdict

ATOL = 1e-12
DEFAULT_EPS_CEILING = 1.0

SCHEMA = {
    "type": "object",
    "required": ["dim", "period", "sites", "edges"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "dim": {"type": "integer", "minimum": 1},
        "period": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "integer", "minimum": 1},
        },
        "sites": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["coord", "class"],
                "additionalProperties": False,
                "properties": {
                    "coord": {"type": "array", "items": {"type": "integer"}},
                    "class": {
                        "type": "string",
                        "pattern": "^(astral|fast:[1-9][0-9]*)$",
                    },
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "offset", "p0", "v"],
                "additionalProperties": False,
                "properties": {
                    "from": {"type": "array", "items": {"type": "integer"}},
                    "offset": {"type": "array", "items": {"type": "integer"}},
                    "p0": {"type": "number"},
                    "v": {"type": "number"},
                },
            },
        },
        "eps_ceiling": {"type": "number", "exclusiveMinimum": 0},
        "c1": {"type": "integer", "minimum": 1},
    },
}


class EnvironmentValidationError(ValueError):
    """Raised when an environment document fails a named check."""

    def __init__(self, check, message):
        super().__init__(f"[{check}] {message}")
        self.check = check
        self.message = message


@dataclass(frozen=True)
class TorusGeometry:
    dim: int
    period: tuple

    def __post_init__(self):
        if self.dim < 1 or len(self.period) != self.dim or min(self.period) < 1:
            raise ValueError(f"bad torus geometry dim={self.dim} period={self.period}")

    @property
    def cell_count(self):
        return int(np.prod(self.period))

    def flat(self, coords):
        """Flat cell index of lattice point(s), reducing modulo the period."""
        coords = np.asarray(coords, dtype=np.int64)
        red = np.mod(coords, self.period)
        return np.ravel_multi_index(tuple(np.moveaxis(red, -1, 0)), self.period)

    def coords(self, flat):
        return np.stack(np.unravel_index(np.asarray(flat), self.period), axis=-1)


@dataclass(frozen=True)
class SitePartition:
    """Assignment of every torus cell to a component label."""

    label_of: np.ndarray  # (cell_count,) int, internal label per cell
    n_fast: int
    n_astral: int
    astral_cells: tuple  # flat index of astral site j, in label order

    @property
    def n_labels(self):
        return self.n_fast + self.n_astral

    @property
    def names(self):
        return [f"fast:{i + 1}" for i in range(self.n_fast)] + [
            f"astral:{j + 1}" for j in range(self.n_astral)
        ]

    def is_astral(self, label):
        return label >= self.n_fast

    def component_cells(self, label):
        return np.flatnonzero(self.label_of == label)


@dataclass(frozen=True)
class JumpTable:
    """Off-diagonal entries stored per (cell, offset), both directions."""

    cells: np.ndarray  # (E,) flat source cell
    offsets: np.ndarray  # (E, d) int offset
    p0: np.ndarray  # (E,)
    v: np.ndarray  # (E,)
    targets: np.ndarray  # (E,) flat target cell
    shifts: np.ndarray  # (E, d) period translation of the lifted target
    diag_p0: np.ndarray  # (cell_count,)
    diag_v: np.ndarray  # (cell_count,)
    c1: int

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True)
class PeriodicEnvironment:
    geometry: TorusGeometry
    partition: SitePartition
    jumps: JumpTable
    eps_max: float
    name: str = ""
    warnings: tuple = field(default=())

    @property
    def dim(self):
        return self.geometry.dim

    @property
    def period(self):
        return self.geometry.period

    @property
    def labels(self):
        return self.partition.names

    def label_coupling(self):
        """Matrix ``W[cell, label]`` of total off-diagonal V mass from a cell into a label.

        Sums over every offset whose lifted target carries the label, so all
        periodic copies of a site are aggregated. Mass into the cell's own
        label is included; callers drop it where needed.
        """
        W = np.zeros((self.geometry.cell_count, self.partition.n_labels))
        tgt_label = self.partition.label_of[self.jumps.targets]
        np.add.at(W, (self.jumps.cells, tgt_label), self.jumps.v)
        return W

    def transition_rows(self, eps):
        """Per-cell offsets and probabilities of ``P0 + eps**2 V``.

        Returns
        -------
        offsets : (K, d) int ndarray
            Distinct offsets, row 0 is the zero offset (stay put).
        probs : (cell_count, K) ndarray
            Transition probability of each cell along each offset.
        """
        if not 0 < eps <= self.eps_max * (1 + 1e-12):
            raise ValueError(f"eps={eps} outside (0, eps_max={self.eps_max}]")
        d = self.dim
        table = [tuple([0] * d)] + sorted(
            set(map(tuple, self.jumps.offsets.tolist())) - {tuple([0] * d)}
        )
        col = {off: i for i, off in enumerate(table)}
        probs = np.zeros((self.geometry.cell_count, len(table)))
        e2 = eps * eps
        probs[:, 0] = self.jumps.diag_p0 + e2 * self.jumps.diag_v
        for e in range(len(self.jumps)):
            off = tuple(self.jumps.offsets[e].tolist())
            probs[self.jumps.cells[e], col[off]] += self.jumps.p0[e] + e2 * self.jumps.v[e]
        np.clip(probs, 0.0, 1.0, out=probs)
        return np.array(table, dtype=np.int64).reshape(len(table), d), probs


def component_index(env, x):
    """Internal component label of lattice point(s) ``x`` in Z^d."""
    return env.partition.label_of[env.geometry.flat(x)]


def single_component_label(k, n_fast=1):
    """Convert an internal label to the one-fast-component convention {0, 1, .., M}."""
    if n_fast != 1:
        raise ValueError("the {0..M} labelling only exists for a single fast component")
    return int(k)


def general_label(k):
    """Convert an internal label to the 1-based convention {1, .., N+M}."""
    return int(k) + 1


# ----------------------------------------------------------------------------
# validation

@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "skip"
    message: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.status != "fail" for c in self.checks)

    @property
    def first_failure(self):
        return next((c for c in self.checks if c.status == "fail"), None)

    def lines(self):
        out = [f"{c.status.upper():4s}  {c.name:18s} {c.message}".rstrip() for c in self.checks]
        out += [f"WARN  {w}" for w in self.warnings]
        return out


class _Fail(Exception):
    pass


def _read_document(source):
    if isinstance(source, dict):
        return source
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("{"):
        with open(source) as fh:
            return json.load(fh)
    return json.loads(source)


def _fmt(coord):
    return "(" + ",".join(str(int(c)) for c in np.atleast_1d(coord)) + ")"


class _Builder:
    """Runs the named checks in order, accumulating the parsed environment."""

    STRUCTURAL = (
        "schema", "geometry", "sites", "labels", "edges", "range", "p0_bounds",
        "symmetry", "row_sum", "block_structure", "v_sign", "eps_max",
    )
    MODEL = ("partition", "connectivity", "irreducibility", "rates")

    def __init__(self, doc):
        self.doc = doc
        self.warnings = []

    def check_schema(self):
        try:
            jsonschema.validate(self.doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise _Fail(f"{exc.message} at /{path}")

    def check_geometry(self):
        d, period = self.doc["dim"], tuple(self.doc["period"])
        if len(period) != d:
            raise _Fail(f"period has {len(period)} entries, dim is {d}")
        self.geom = TorusGeometry(d, period)

    def check_sites(self):
        g = self.geom
        self.cls = [None] * g.cell_count
        for site in self.doc["sites"]:
            c = site["coord"]
            if len(c) != g.dim or any(not 0 <= a < p for a, p in zip(c, g.period)):
                raise _Fail(f"site coordinate {_fmt(c)} outside the period cell")
            k = int(g.flat(c))
            if self.cls[k] is not None:
                raise _Fail(f"cell {_fmt(c)} listed twice")
            self.cls[k] = site["class"]
        missing = [i for i, c in enumerate(self.cls) if c is None]
        if missing:
            raise _Fail(f"cell {_fmt(g.coords(missing[0]))} not listed")

    def check_labels(self):
        fast = sorted({int(c.split(":")[1]) for c in self.cls if c.startswith("fast:")})
        if fast != list(range(1, len(fast) + 1)):
            raise _Fail(f"fast component numbers {fast} are not 1..{len(fast)}")
        n_fast = len(fast)
        label_of = np.empty(len(self.cls), dtype=np.int64)
        astral = []
        for i, c in enumerate(self.cls):
            if c == "astral":
                label_of[i] = n_fast + len(astral)
                astral.append(i)
            else:
                label_of[i] = int(c.split(":")[1]) - 1
        self.part = SitePartition(label_of, n_fast, len(astral), tuple(astral))

    def check_partition(self):
        if self.part.n_fast == 0:
            raise _Fail("no fast cells: B is empty")
        if self.part.n_astral == 0:
            raise _Fail("no astral cells: A is empty")

    def check_edges(self):
        g = self.geom
        seen = set()
        cells, offs, p0, v = [], [], [], []
        for e in self.doc["edges"]:
            y, xi = e["from"], e["offset"]
            if len(y) != g.dim or len(xi) != g.dim:
                raise _Fail(f"edge {_fmt(y)} {_fmt(xi)} has wrong dimension")
            if any(not 0 <= a < p for a, p in zip(y, g.period)):
                raise _Fail(f"edge source {_fmt(y)} outside the period cell")
            if not any(xi):
                raise _Fail(f"edge at {_fmt(y)} has zero offset; diagonals are derived")
            key = (tuple(y), tuple(xi))
            if key in seen:
                raise _Fail(f"duplicate entry at cell {_fmt(y)} offset {_fmt(xi)}")
            seen.add(key)
            cells.append(int(g.flat(y)))
            offs.append(xi)
            p0.append(float(e["p0"]))
            v.append(float(e["v"]))
        if not all(map(math.isfinite, p0 + v)):
            raise _Fail("non-finite p0 or v")
        self.cells = np.array(cells, dtype=np.int64)
        self.offs = np.array(offs, dtype=np.int64).reshape(len(cells), g.dim)
        self.p0 = np.array(p0)
        self.v = np.array(v)
        src = g.coords(self.cells).reshape(len(cells), g.dim)
        lifted = src + self.offs
        self.targets = g.flat(lifted) if len(cells) else np.zeros(0, dtype=np.int64)
        self.shifts = np.floor_divide(lifted, np.array(g.period))
        self.index = {
            (int(c), tuple(o)): i for i, (c, o) in enumerate(zip(self.cells, self.offs.tolist()))
        }

    def check_range(self):
        live = (self.p0 != 0) | (self.v != 0)
        norms = np.abs(self.offs).max(axis=1) if len(self.offs) else np.zeros(0, int)
        c1 = self.doc.get("c1")
        if c1 is not None:
            bad = np.flatnonzero(live & (norms > c1))
            if len(bad):
                e = bad[0]
                raise _Fail(
                    f"offset {_fmt(self.offs[e])} at cell {_fmt(self.geom.coords(self.cells[e]))} "
                    f"exceeds c1={c1}"
                )
        else:
            c1 = int(norms[live].max()) if live.any() else 1
        self.c1 = max(int(c1), 1)

    def check_p0_bounds(self):
        bad = np.flatnonzero((self.p0 < -ATOL) | (self.p0 > 1 + ATOL))
        if len(bad):
            e = bad[0]
            raise _Fail(self._where(e) + f" p0={self.p0[e]} not in [0,1]")

    def check_symmetry(self):
        for e in range(len(self.cells)):
            partner = self.index.get((int(self.targets[e]), tuple((-self.offs[e]).tolist())))
            pp0, pv = (self.p0[partner], self.v[partner]) if partner is not None else (0.0, 0.0)
            if abs(pp0 - self.p0[e]) > ATOL or abs(pv - self.v[e]) > ATOL:
                raise _Fail(
                    "symmetry violation at " + self._where(e)
                    + f": (p0,v)=({self.p0[e]},{self.v[e]}) vs partner ({pp0},{pv})"
                )

    def check_row_sum(self):
        n = self.geom.cell_count
        out_p0 = np.bincount(self.cells, weights=self.p0, minlength=n)
        out_v = np.bincount(self.cells, weights=self.v, minlength=n)
        diag = 1.0 - out_p0
        bad = np.flatnonzero((diag < -ATOL) | (diag > 1 + ATOL))
        if len(bad):
            c = bad[0]
            raise _Fail(f"diagonal p0 at cell {_fmt(self.geom.coords(c))} is {diag[c]:.12g}, not in [0,1]")
        self.diag_p0 = np.clip(diag, 0.0, 1.0)
        self.diag_v = -out_v

    def check_block_structure(self):
        lab = self.part.label_of
        src, tgt = lab[self.cells], lab[self.targets]
        moving = self.p0 > 0
        n_fast = self.part.n_fast
        bad = moving & ((src >= n_fast) | (tgt >= n_fast) | (src != tgt))
        hits = np.flatnonzero(bad)
        if len(hits):
            e = hits[0]
            names = self.part.names
            raise _Fail(
                f"p0>0 at {self._where(e)} links {names[src[e]]} to {names[tgt[e]]}"
            )

    def check_v_sign(self):
        bad = np.flatnonzero((self.p0 <= 0) & (self.v < -ATOL))
        if len(bad):
            e = bad[0]
            raise _Fail(f"v={self.v[e]} < 0 where p0=0 at " + self._where(e))

    def check_eps_max(self):
        ceiling = float(self.doc.get("eps_ceiling", DEFAULT_EPS_CEILING))
        best, where = ceiling, None
        n = self.geom.cell_count
        entries = [(self.p0[e], self.v[e], self._where(e)) for e in range(len(self.cells))]
        entries += [
            (self.diag_p0[c], self.diag_v[c], f"diagonal of cell {_fmt(self.geom.coords(c))}")
            for c in range(n)
        ]
        for p, v, label in entries:
            if v < 0:
                bound = math.sqrt(max(p, 0.0) / -v)
            elif v > 0:
                bound = math.sqrt(max(1.0 - p, 0.0) / v)
            else:
                continue
            if bound < best:
                best, where = bound, label
        if best <= 0:
            raise _Fail(f"eps_max = 0: P0 + eps^2 V leaves [0,1] for every eps > 0 at {where}")
        self.eps_max = best

    def check_connectivity(self):
        verdicts = lift_connectivity(self.env)
        for k, verdict in verdicts.items():
            if verdict is not LiftVerdict.CONNECTED_UNBOUNDED:
                raise _Fail(f"{self.part.names[k]} lift is {verdict.value}")

    def check_irreducibility(self):
        g = self.geom
        live = (self.p0 > 0) | (self.v > 0)
        edges = zip(self.cells[live], self.targets[live], self.shifts[live])
        verdict = lift_verdict(list(range(g.cell_count)), edges, g.dim)
        if verdict is not LiftVerdict.CONNECTED_UNBOUNDED:
            raise _Fail(f"walk under P0 + eps^2 V is not irreducible on Z^d ({verdict.value})")

    def check_rates(self):
        W = self.env.label_coupling()
        lab = self.part.label_of
        L = self.part.n_labels
        alpha = np.zeros((L, L))
        for k in range(L):
            alpha[k] = W[lab == k].mean(axis=0)
        np.fill_diagonal(alpha, 0.0)
        lam = alpha.sum(axis=1)
        names = self.part.names
        for k in range(L):
            if lam[k] <= 0:
                raise _Fail(f"intensity lambda({names[k]}) = {lam[k]} is not positive")
        for k in range(L):
            for j in range(L):
                if k != j and alpha[k, j] == 0:
                    self.warnings.append(f"rate alpha[{names[k]} -> {names[j]}] is zero")

    def _where(self, e):
        return f"(cell {_fmt(self.geom.coords(self.cells[e]))}, offset {_fmt(self.offs[e])})"

    def build(self):
        j = JumpTable(
            cells=self.cells, offsets=self.offs, p0=self.p0, v=self.v,
            targets=np.asarray(self.targets, dtype=np.int64), shifts=self.shifts,
            diag_p0=self.diag_p0, diag_v=self.diag_v, c1=self.c1,
        )
        self.env = PeriodicEnvironment(
            self.geom, self.part, j, self.eps_max, name=self.doc.get("name", ""),
        )


def check_document(source, strict=True):
    """Run every named check on an environment document.

    Returns the report and the environment (``None`` when a structural check
    failed). With ``strict=False`` the model-level checks (both classes
    present, lift connectivity, irreducibility, positive intensities) are
    skipped.
    """
    doc = _read_document(source)
    b = _Builder(doc)
    report = ValidationReport()
    failed = False
    order = list(_Builder.STRUCTURAL[:4]) + ["partition"] + list(_Builder.STRUCTURAL[4:])
    for name in order + ["build", "connectivity", "irreducibility", "rates"]:
        if name == "build":
            if not failed:
                b.build()
            continue
        if failed or (not strict and name in _Builder.MODEL):
            report.checks.append(CheckResult(name, "skip"))
            continue
        try:
            getattr(b, "check_" + name)()
            report.checks.append(CheckResult(name, "pass"))
        except _Fail as exc:
            report.checks.append(CheckResult(name, "fail", str(exc)))
            failed = True
    report.warnings = list(b.warnings)
    env = None
    if report.ok:
        env = b.env
        object.__setattr__(env, "warnings", tuple(b.warnings))
    return report, env


def load_environment(source, strict=True):
    """Load and validate an environment.

    Parameters
    ----------
    source : dict, path or JSON text
        Environment document (see README for the schema).
    strict : bool
        Also require A and B nonempty, connected unbounded fast lifts,
        irreducibility and positive jump intensities.

    Raises
    ------
    EnvironmentValidationError
        On the first failed check, naming it and the offending cell/offset.
    """
    report, env = check_document(source, strict=strict)
    bad = report.first_failure
    if bad is not None:
        raise EnvironmentValidationError(bad.name, bad.message)
    return env


def lift_connectivity(env):
    """Decide, per fast component, whether its periodic lift is connected and unbounded.

    Builds the quotient graph on the component's cells with edges where
    ``p0 > 0``, labels every edge by the period translation it performs,
    and compares the cycle-voltage lattice with Z^d.

    Returns
    -------
    dict
        Internal fast label -> :class:`LiftVerdict`.
    """
    j = env.jumps
    lab = env.partition.label_of
    out = {}
    for k in range(env.partition.n_fast):
        nodes = env.partition.component_cells(k).tolist()
        m = (j.p0 > 0) & (lab[j.cells] == k) & (lab[j.targets] == k)
        out[k] = lift_verdict(nodes, zip(j.cells[m], j.targets[m], j.shifts[m]), env.dim)
    return out
