"""Polytope models {x : Ax = b, l <= x <= u} with density exp(-alpha' x), plus I/O.

The on-disk model format is a JSON document

    {"n": int, "m": int, "A": [[row, col, value], ...],
     "b": [...], "l": [...], "u": [...], "alpha": [...] (optional)}

with ``null`` bounds meaning -inf / +inf (clamped to +-1e7 on load).
Samples are written as CSV with one row per sample and a header of variable
indices; chain statistics go to a JSON sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .barrier import clamp_bounds
from .sparse import SparseMatrix


@dataclass
class PolytopeModel:
    """Constraint matrix, right-hand side, box bounds, and linear objective."""

    A: SparseMatrix
    b: np.ndarray
    l: np.ndarray
    u: np.ndarray
    alpha: np.ndarray = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        self.l, self.u = clamp_bounds(self.l, self.u)
        if self.alpha is None:
            self.alpha = np.zeros(self.n)
        else:
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.A.n_rows != self.b.size:
            raise ValueError("b length must match the number of rows of A")
        for name, v in (("l", self.l), ("u", self.u), ("alpha", self.alpha)):
            if v.size != self.n:
                raise ValueError(f"{name} length must match the number of columns of A")

    @property
    def n(self):
        return self.A.n_cols

    @property
    def m(self):
        return self.A.n_rows

    @property
    def nnz(self):
        return self.A.nnz

    def uniform(self):
        return bool(np.all(self.alpha == 0.0))

    def equality_residual(self, x):
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.A.matvec(x) - self.b)))

    def box_feasible(self, x, strict=True):
        x = np.asarray(x)
        if strict:
            return bool(np.all(x > self.l) and np.all(x < self.u))
        return bool(np.all(x >= self.l) and np.all(x <= self.u))


def hypercube(n):
    """The box [-1/2, 1/2]^n; no equality constraints, full dimension n."""
    A = SparseMatrix.from_triplets(0, n, [])
    return PolytopeModel(A, np.zeros(0), np.full(n, -0.5), np.full(n, 0.5))


def simplex(n):
    """{x >= 0, sum x = 1}; one equality row, full dimension n - 1."""
    A = SparseMatrix.from_triplets(1, n, [(0, j, 1.0) for j in range(n)])
    return PolytopeModel(A, np.ones(1), np.zeros(n), np.full(n, np.inf))


def birkhoff(k):
    """Doubly stochastic k x k matrices in k^2 variables.

    Column sums and all but the last row sum are kept (the dropped row sum is
    implied), so A has 2k - 1 independent rows; full dimension (k - 1)^2.
    """
    n = k * k
    entries = []
    for i in range(k - 1):  # row sums, last dropped
        for j in range(k):
            entries.append((i, i * k + j, 1.0))
    for j in range(k):  # column sums
        for i in range(k):
            entries.append((k - 1 + j, i * k + j, 1.0))
    A = SparseMatrix.from_triplets(2 * k - 1, n, entries)
    return PolytopeModel(A, np.ones(2 * k - 1), np.zeros(n), np.full(n, np.inf))


class ModelParseError(ValueError):
    pass


def _bounds_from_json(raw, n, default):
    if raw is None:
        return np.full(n, default)
    out = np.empty(n)
    for i, v in enumerate(raw):
        if v is None:
            out[i] = default
        elif isinstance(v, (int, float)) and np.isfinite(v):
            out[i] = float(v)
        else:
            raise ModelParseError(f"bound entry {i} is not a finite number or null: {v!r}")
    return out


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: malformed JSON: {exc}") from exc
    try:
        n = int(doc["n"])
        m = int(doc["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelParseError(f"{path}: missing or bad 'n'/'m'") from exc
    triplets = doc.get("A", [])
    entries = []
    for t, item in enumerate(triplets):
        if len(item) != 3:
            raise ModelParseError(f"{path}: A[{t}] is not a [row, col, value] triplet")
        r, c, v = int(item[0]), int(item[1]), float(item[2])
        if not (0 <= r < m and 0 <= c < n):
            raise ModelParseError(f"{path}: A[{t}] index ({r},{c}) out of range")
        if not np.isfinite(v):
            raise ModelParseError(f"{path}: A[{t}] value is not finite")
        entries.append((r, c, v))
    b = np.asarray(doc.get("b", []), dtype=np.float64)
    if b.size != m:
        raise ModelParseError(f"{path}: b has length {b.size}, expected {m}")
    if b.size and not np.all(np.isfinite(b)):
        bad = int(np.nonzero(~np.isfinite(b))[0][0])
        raise ModelParseError(f"{path}: b[{bad}] is not finite")
    l = _bounds_from_json(doc.get("l"), n, -np.inf)
    u = _bounds_from_json(doc.get("u"), n, np.inf)
    alpha = doc.get("alpha")
    if alpha is not None:
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.size != n:
            raise ModelParseError(f"{path}: alpha has length {alpha.size}, expected {n}")
        if alpha.size and not np.all(np.isfinite(alpha)):
            bad = int(np.nonzero(~np.isfinite(alpha))[0][0])
            raise ModelParseError(f"{path}: alpha[{bad}] is not finite")
    A = SparseMatrix.from_triplets(m, n, entries)
    return PolytopeModel(A, b, l, u, alpha)


def save_model(model, path):
    rows, cols, vals = model.A.to_triplets()
    doc = {
        "n": model.n,
        "m": model.m,
        "A": [[int(r), int(c), float(v)] for r, c, v in zip(rows, cols, vals)],
        "b": [float(v) for v in model.b],
        "l": [float(v) for v in model.l],
        "u": [float(v) for v in model.u],
    }
    if not model.uniform():
        doc["alpha"] = [float(v) for v in model.alpha]
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def save_samples(samples, path):
    """CSV, one sample per row, header x0,x1,...; shortest round-trip decimals."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = samples.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(n)])
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def load_samples(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    n = len(header)
    if not rows:
        return np.zeros((0, n))
    return np.asarray(rows, dtype=np.float64)


def save_stats(stats_dict, path):
    with open(path, "w") as fh:
        json.dump(stats_dict, fh, indent=2)
        fh.write("\n")


def load_stats(path):
    with open(path) as fh:
        return json.load(fh)
