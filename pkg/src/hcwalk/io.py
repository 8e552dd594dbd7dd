"""Readers and writers for every artifact the command line produces.

JSON floats use Python's shortest round-trip repr, so values survive a
write/read cycle bit for bit. CSV floats use the same repr.
"""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ComparisonReport, ComparisonRow
from .corrector import EffectiveModel
from .simulate import Estimate


def write_json(path, obj):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text)


def read_json(path):
    return json.loads(Path(path).read_text())


def _f(x):
    return repr(float(x))


def _coord_key(coord):
    return ",".join(str(int(c)) for c in np.atleast_1d(coord))


# ----------------------------------------------------------------------------
# effective model

def model_to_dict(model, env=None, correctors=None):
    out = {
        "labels": list(model.labels),
        "n_fast": int(model.n_fast),
        "dim": int(model.dim),
        "theta": [m.tolist() for m in model.theta],
        "alpha": model.alpha.tolist(),
        "lambda": model.lam.tolist(),
        "mu": model.mu.tolist(),
    }
    if env is not None and correctors is not None:
        h, g, q = correctors.cell_fields(env)
        fields = {}
        for flat in range(env.geometry.cell_count):
            fields[_coord_key(env.geometry.coords(flat))] = {
                "label": env.labels[int(env.partition.label_of[flat])],
                "h": h[flat].tolist(),
                "g": g[flat].tolist(),
                "q": q[flat].tolist(),
            }
        out["correctors"] = fields
        out["residuals"] = {k: float(v) for k, v in correctors.residuals.items()}
    return out


def model_from_dict(doc):
    d = int(doc["dim"])
    theta = np.array(doc["theta"], dtype=float).reshape(-1, d, d)
    return EffectiveModel(
        theta,
        np.array(doc["alpha"], dtype=float),
        np.array(doc["lambda"], dtype=float),
        np.array(doc["mu"], dtype=float),
        tuple(doc["labels"]),
        int(doc["n_fast"]),
    )


def write_theta_csv(path, model):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "i", "j", "theta"])
        for k, m in enumerate(model.theta):
            for i in range(model.dim):
                for j in range(model.dim):
                    w.writerow([model.labels[k], i + 1, j + 1, _f(m[i, j])])


def read_theta_csv(path, labels, dim):
    theta = np.zeros((sum(lab.startswith("fast") for lab in labels), dim, dim))
    index = {lab: k for k, lab in enumerate(labels)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            theta[index[row["label"]], int(row["i"]) - 1, int(row["j"]) - 1] = float(row["theta"])
    return theta


def write_rates_csv(path, model):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "alpha", "mu", "lambda_from"])
        for k in range(model.n_labels):
            for j in range(model.n_labels):
                w.writerow([model.labels[k], model.labels[j], _f(model.alpha[k, j]),
                            _f(model.mu[k, j]), _f(model.lam[k])])


def read_rates_csv(path, labels):
    L = len(labels)
    index = {lab: k for k, lab in enumerate(labels)}
    alpha, mu, lam = np.zeros((L, L)), np.zeros((L, L)), np.zeros(L)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k, j = index[row["from"]], index[row["to"]]
            alpha[k, j], mu[k, j], lam[k] = float(row["alpha"]), float(row["mu"]), float(row["lambda_from"])
    return alpha, mu, lam


# ----------------------------------------------------------------------------
# comparison reports

def _est(e):
    return {"mean": e.mean, "stderr": e.stderr, "n": e.n, "half_width": e.half_width}


def report_to_dict(report):
    rows = []
    for r in report.rows:
        rows.append({
            "eps": r.eps, "times": list(r.times), "function": r.function,
            "micro": _est(r.micro), "micro_method": r.micro_method, "limit": _est(r.limit),
            "discrepancy": r.discrepancy, "tolerance": r.tolerance, "within": report.within(r),
        })
    trends = [
        {"times": list(t.times), "function": t.function, "eps": t.eps,
         "discrepancy": t.discrepancy, "tolerance": t.tolerance,
         "verdict": t.verdict, "final_within": t.final_within}
        for t in report.trends
    ]
    return {"abs_tol": report.abs_tol, "verdict": report.verdict, "rows": rows, "trends": trends}


def report_from_dict(doc):
    rows = [
        ComparisonRow(
            float(r["eps"]), tuple(float(t) for t in r["times"]), r["function"],
            Estimate(float(r["micro"]["mean"]), float(r["micro"]["stderr"]), int(r["micro"]["n"])),
            r["micro_method"],
            Estimate(float(r["limit"]["mean"]), float(r["limit"]["stderr"]), int(r["limit"]["n"])),
        )
        for r in doc["rows"]
    ]
    return ComparisonReport(rows, abs_tol=float(doc.get("abs_tol", 0.0))).summarize()


CSV_FIELDS = ["eps", "times", "function", "micro_method", "micro_mean", "micro_stderr", "micro_n",
              "limit_mean", "limit_stderr", "limit_n", "discrepancy", "tolerance", "within"]


def write_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in report.rows:
            w.writerow([
                _f(r.eps), " ".join(_f(t) for t in r.times), r.function, r.micro_method,
                _f(r.micro.mean), _f(r.micro.stderr), r.micro.n,
                _f(r.limit.mean), _f(r.limit.stderr), r.limit.n,
                _f(r.discrepancy), _f(r.tolerance), int(report.within(r)),
            ])


def read_report_csv(path, abs_tol=0.0):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append(ComparisonRow(
                float(r["eps"]), tuple(float(t) for t in r["times"].split()), r["function"],
                Estimate(float(r["micro_mean"]), float(r["micro_stderr"]), int(r["micro_n"])),
                r["micro_method"],
                Estimate(float(r["limit_mean"]), float(r["limit_stderr"]), int(r["limit_n"])),
            ))
    return ComparisonReport(rows, abs_tol=abs_tol).summarize()


# ----------------------------------------------------------------------------
# trajectories

def write_trajectories_csv(path, trajectories, labels):
    """Long format: one row per record, ``path, process, eps, time, x1..xd, k``."""
    d = trajectories[0].positions.shape[1] if trajectories else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "process", "eps", "time"] + [f"x{i + 1}" for i in range(d)] + ["k"])
        for p, tr in enumerate(trajectories):
            eps = "" if tr.eps is None else _f(tr.eps)
            for t, x, k in zip(tr.times, tr.positions, tr.labels):
                w.writerow([p, tr.kind, eps, _f(t)] + [_f(v) for v in x] + [labels[int(k)]])


def read_trajectories_csv(path, labels):
    """Returns ``{(process, eps, path): (times, positions, label indices)}``."""
    index = {lab: k for k, lab in enumerate(labels)}
    acc = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        d = len(head) - 5
        for row in reader:
            key = (row[1], float(row[2]) if row[2] else None, int(row[0]))
            acc.setdefault(key, []).append(row)
    out = {}
    for key, rows in acc.items():
        out[key] = (
            np.array([float(r[3]) for r in rows]),
            np.array([[float(v) for v in r[4:4 + d]] for r in rows]).reshape(len(rows), d),
            np.array([index[r[-1]] for r in rows]),
        )
    return out


def write_endpoints_csv(path, samples, labels):
    """One row per path and observation time of each :class:`PathSample`."""
    d = samples[0].positions.shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["process", "eps", "path", "time"] + [f"x{i + 1}" for i in range(d)] + ["k"])
        for s in samples:
            eps = "" if s.eps is None else _f(s.eps)
            for p in range(s.positions.shape[0]):
                for ti, t in enumerate(s.times):
                    w.writerow([s.kind, eps, p, _f(t)] + [_f(v) for v in s.positions[p, ti]]
                               + [labels[int(s.labels[p, ti])]])


def read_endpoints_csv(path, labels):
    index = {lab: k for k, lab in enumerate(labels)}
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        d = len(head) - 5
        for r in reader:
            key = (r[0], float(r[1]) if r[1] else None)
            out.setdefault(key, []).append((int(r[2]), float(r[3]), [float(v) for v in r[4:4 + d]], index[r[-1]]))
    return out


def write_summary_csv(path, rows):
    """``rows`` is a list of flat dicts sharing keys."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([_f(v) if isinstance(v, float) else v for v in r.values()])


def read_csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------------------
# provenance

def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to repeat a run, minus the worker count."""

    command: str
    environment: str
    environment_sha256: str
    parameters: dict = field(default_factory=dict)
    output: str = ""
    tool: str = "hcwalk"
    version: str = __version__

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    def write(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path):
        return cls.from_dict(read_json(path))
