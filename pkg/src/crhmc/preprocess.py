"""Model simplification pipeline and the analytic-center solver.

Steps, iterated to a fixed point: eliminate variables with equal bounds,
split dense columns through chained auxiliary variables, drop dependent
rows of A via the rank-revealing Cholesky of A A^T, rescale for numerical
stability, then collapse any coordinate whose analytic center sits within
1e-8 of a bound.  Every coordinate-changing step is recorded so samples can
be lifted back to the original coordinates exactly.

Row scalings and row deletions never change the coordinate map; only
column operations enter the transform record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .barrier import BoxBarrier
from .errors import ModelInfeasibleError, NumericalFailureError
from .models import PolytopeModel
from .sparse import (
    CholeskySymbolic,
    GramBuilder,
    SparseMatrix,
    cholesky_factorize,
    dependent_rows,
)

RANK_TOL = 1e-12  # times the largest diagonal of A A^T
CENTER_TIGHT_TOL = 1e-8


@dataclass
class DropColumns:
    """Remove fixed variables: x_after = x_before[kept]."""

    n_before: int
    kept: np.ndarray
    fixed: dict

    def collapse(self, X):
        return X[:, self.kept]

    def lift(self, X):
        out = np.empty((X.shape[0], self.n_before))
        out[:, self.kept] = X
        for idx, val in self.fixed.items():
            out[:, idx] = val
        return out


@dataclass
class SplitColumn:
    """Duplicate a column into chained pieces appended at the end."""

    n_before: int
    source: int
    pieces: int

    def collapse(self, X):
        extra = np.repeat(X[:, self.source:self.source + 1], self.pieces, axis=1)
        return np.hstack([X, extra])

    def lift(self, X):
        keep = X[:, :self.n_before].copy()
        group = np.hstack([X[:, self.source:self.source + 1], X[:, self.n_before:]])
        keep[:, self.source] = group.mean(axis=1)
        return keep


@dataclass
class ScaleColumns:
    """Diagonal change of variables: x_before = factors * x_after."""

    factors: np.ndarray

    def collapse(self, X):
        return X / self.factors

    def lift(self, X):
        return X * self.factors


@dataclass
class DropRows:
    """Bookkeeping for removed equality rows; no effect on coordinates."""

    removed: list

    def collapse(self, X):
        return X

    def lift(self, X):
        return X


@dataclass
class TransformRecord:
    """Ordered, invertible coordinate steps from original to preprocessed."""

    steps: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, step):
        self.steps.append(step)

    def collapse(self, samples):
        X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        for step in self.steps:
            X = step.collapse(X)
        return X

    def lift(self, samples):
        X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        for step in reversed(self.steps):
            X = step.lift(X)
        return X


def lift_samples(samples, record):
    """Samples of the preprocessed model back in original coordinates."""
    return record.lift(samples)


def analytic_center(model, tol=1e-8, max_iters=200):
    """Damped Newton for min phi(x) subject to Ax = b.

    Steps stay inside the Dikin ellipsoid (length min(1, 0.5/|dx|_g)), so all
    iterates are strictly feasible.  Returns x with equality residual below
    1e-10 and projected barrier gradient below ``tol`` in the metric norm.
    """
    barrier = BoxBarrier(model.l, model.u)
    x = barrier.center()
    m = model.m
    if m > 0:
        gram = GramBuilder(model.A)
        pat = gram.pattern
        symbolic = CholeskySymbolic(pat.n_rows, pat.indptr, pat.indices)
        # metric-weighted least-norm jump toward {Ax = b}; cuts the crawl from
        # the box midpoint when the bounds are clamped orders of magnitude wide
        g0 = barrier.hessian_diag(x)
        F0 = cholesky_factorize(gram.numeric(1.0 / g0), reuse_symbolic=symbolic)
        jump = model.A.matvec_t(F0.solve(model.b - model.A.matvec(x))) / g0
        t_max = barrier.step_to_boundary(x, jump)
        if t_max > 1.0 and barrier.contains(x + jump):
            x = x + jump  # full jump solves Ax = b outright
        else:
            x = x + 0.99 * min(t_max, 1.0) * jump
    feas_tol = 1e-10 * (1.0 + float(np.max(np.abs(model.b))) if m else 1.0)
    last_resid = np.inf
    stalled = 0
    for _ in range(max_iters):
        g = barrier.hessian_diag(x)
        grad = barrier.gradient(x)
        if m > 0:
            r = model.b - model.A.matvec(x)
            F = cholesky_factorize(gram.numeric(1.0 / g), reuse_symbolic=symbolic)
            y = -F.solve(model.A.matvec(grad / g) + r)
            dx = (-grad - model.A.matvec_t(y)) / g
            resid = float(np.max(np.abs(r)))
        else:
            dx = -grad / g
            resid = 0.0
        lam = float(np.sqrt(np.sum(g * dx * dx)))
        if resid <= feas_tol and lam <= tol:
            return x
        # no Newton progress and a flat residual: bail out early rather than
        # looping to the cap (badly scaled inputs belong in rescale first)
        stalled = stalled + 1 if (lam <= tol and resid >= 0.5 * last_resid) else 0
        if stalled >= 5:
            break
        t = min(1.0, 0.5 / lam) if lam > 0 else 1.0
        x = x + t * dx
        last_resid = resid
    if m > 0 and last_resid > 1e-6 * (1.0 + float(np.max(np.abs(model.b)))):
        raise ModelInfeasibleError(
            f"equality constraints unreachable inside the bounds "
            f"(residual stalled at {last_resid:.3e})"
        )
    raise NumericalFailureError(
        f"analytic center did not converge in {max_iters} iterations"
    )


def _next_pow2(v):
    return float(2.0 ** np.floor(np.log2(v)))


def rescale(model):
    """Row/column equilibration of A by powers of two.

    Brings the max absolute entry of every nonempty row and column into
    [1, 2) (well within the [1/16, 16] contract); power-of-two factors keep
    the transform exact in floating point.  Returns the rescaled model and
    the column-scaling record step (or None when nothing changed).
    """
    if model.m == 0 or model.nnz == 0:
        return model, None
    rows, cols, vals = model.A.to_triplets()
    b = model.b.copy()
    col_factor = np.ones(model.n)
    changed_any = False
    for _ in range(30):
        changed = False
        row_max = np.zeros(model.m)
        np.maximum.at(row_max, rows, np.abs(vals))
        active = row_max > 0
        scale_r = np.ones(model.m)
        scale_r[active] = 1.0 / np.array([_next_pow2(v) for v in row_max[active]])
        if np.any(scale_r != 1.0):
            vals = vals * scale_r[rows]
            b = b * scale_r
            changed = True
        col_max = np.zeros(model.n)
        np.maximum.at(col_max, cols, np.abs(vals))
        activec = col_max > 0
        scale_c = np.ones(model.n)
        scale_c[activec] = 1.0 / np.array([_next_pow2(v) for v in col_max[activec]])
        if np.any(scale_c != 1.0):
            vals = vals * scale_c[cols]
            col_factor = col_factor * scale_c
            changed = True
        changed_any = changed_any or changed
        if not changed:
            break
    if not changed_any:
        return model, None
    A = SparseMatrix.from_triplets(model.m, model.n, list(zip(rows, cols, vals)))
    # A' = A diag(col_factor), so x_before = col_factor * x_after
    out = PolytopeModel(
        A, b, model.l / col_factor, model.u / col_factor, model.alpha * col_factor
    )
    return out, ScaleColumns(factors=col_factor)


def _eliminate_columns(model, fixes):
    """Substitute fixed variables into Ax = b; returns (model', DropColumns)."""
    n = model.n
    kept = np.array([i for i in range(n) if i not in fixes], dtype=np.int64)
    shift = np.zeros(model.m)
    for idx, val in fixes.items():
        rows, vals = model.A.col(idx)
        if rows.size:
            contrib = np.zeros(model.m)
            contrib[rows] = vals * val
            shift += contrib
    old_of_new = {old: new for new, old in enumerate(kept)}
    rows, cols, vals = model.A.to_triplets()
    keep_mask = np.isin(cols, kept)
    new_entries = [
        (int(r), old_of_new[int(c)], float(v))
        for r, c, v in zip(rows[keep_mask], cols[keep_mask], vals[keep_mask])
    ]
    A = SparseMatrix.from_triplets(model.m, kept.size, new_entries)
    out = PolytopeModel(
        A, model.b - shift, model.l[kept], model.u[kept], model.alpha[kept]
    )
    return out, DropColumns(n_before=n, kept=kept, fixed=dict(fixes))


def _split_dense_columns(model, record, threshold):
    model_cur = model
    while True:
        counts = np.diff(model_cur.A.indptr)
        dense_cols = np.nonzero(counts > threshold)[0]
        if dense_cols.size == 0:
            return model_cur
        j = int(dense_cols[0])
        rows, vals = model_cur.A.col(j)
        rows = rows.copy()
        vals = vals.copy()
        # leave room for the two chain entries a piece picks up
        n_pieces = int(np.ceil(rows.size / max(threshold - 2, 1)))
        chunks = np.array_split(np.arange(rows.size), n_pieces)
        n0, m0 = model_cur.n, model_cur.m
        extras = n_pieces - 1
        r2, c2, v2 = model_cur.A.to_triplets()
        keep = c2 != j
        entries = list(zip(r2[keep].tolist(), c2[keep].tolist(), v2[keep].tolist()))
        piece_vars = [j] + [n0 + t for t in range(extras)]
        for t, chunk in enumerate(chunks):
            var = piece_vars[t]
            for idx in chunk:
                entries.append((int(rows[idx]), var, float(vals[idx])))
        # chain equalities piece_{t-1} - piece_t = 0
        for t in range(1, n_pieces):
            entries.append((m0 + t - 1, piece_vars[t - 1], 1.0))
            entries.append((m0 + t - 1, piece_vars[t], -1.0))
        A = SparseMatrix.from_triplets(m0 + extras, n0 + extras, entries)
        b = np.concatenate([model_cur.b, np.zeros(extras)])
        l = np.concatenate([model_cur.l, np.full(extras, model_cur.l[j])])
        u = np.concatenate([model_cur.u, np.full(extras, model_cur.u[j])])
        alpha = np.concatenate([model_cur.alpha, np.zeros(extras)])
        model_cur = PolytopeModel(A, b, l, u, alpha)
        record.add(SplitColumn(n_before=n0, source=j, pieces=extras))


def simplify(model, dense_threshold=None, max_rounds=20):
    """Iterated presolve of the model; returns (model', TransformRecord).

    Raises ``ModelInfeasibleError`` when the interior is provably empty and
    ``NumericalFailureError`` when the fixed point is not reached.
    """
    record = TransformRecord()
    if np.any(model.l > model.u):
        bad = int(np.argmax(model.l - model.u))
        raise ModelInfeasibleError(
            f"bounds cross at variable {bad}: l={model.l[bad]} > u={model.u[bad]}"
        )
    threshold = dense_threshold
    if threshold is None:
        threshold = max(30, int(np.ceil(0.1 * model.m)))

    fixes = {i: float(model.l[i]) for i in range(model.n) if model.l[i] == model.u[i]}
    if fixes:
        model, step = _eliminate_columns(model, fixes)
        record.add(step)
    model = _split_dense_columns(model, record, threshold)

    removed_rows = []  # (dense row, rhs) pairs pending a consistency check
    rounds = 0
    for _ in range(max_rounds):
        rounds += 1
        changed = False

        model, scale_step = rescale(model)
        if scale_step is not None:
            record.add(scale_step)

        if model.m > 0:
            dep = dependent_rows(model.A, RANK_TOL)
            if dep:
                dense = model.A.to_dense()
                for r in sorted(dep):
                    removed_rows.append((dense[r].copy(), float(model.b[r])))
                keep = np.array(sorted(set(range(model.m)) - dep), dtype=np.int64)
                rows, cols, vals = model.A.to_triplets()
                new_of_old = {old: new for new, old in enumerate(keep)}
                mask = np.isin(rows, keep)
                entries = [
                    (new_of_old[int(r)], int(c), float(v))
                    for r, c, v in zip(rows[mask], cols[mask], vals[mask])
                ]
                A = SparseMatrix.from_triplets(keep.size, model.n, entries)
                model = PolytopeModel(A, model.b[keep], model.l, model.u, model.alpha)
                record.add(DropRows(removed=sorted(dep)))
                changed = True

        if model.m == model.n and model.m > 0:
            # square full-rank system pins every variable
            x_pin = np.linalg.solve(model.A.to_dense(), model.b)
            if np.any(x_pin < model.l) or np.any(x_pin > model.u):
                raise ModelInfeasibleError(
                    "equalities pin the model to a point outside the bounds"
                )
            _consistency_check(removed_rows, x_pin)
            removed_rows = []
            fixes = {i: float(x_pin[i]) for i in range(model.n)}
            model, step = _eliminate_columns(model, fixes)
            record.add(step)
            continue  # vacuous rows drop next round

        if model.n == 0:
            _consistency_check(removed_rows, np.zeros(0))
            record.meta["rounds"] = rounds
            return model, record

        center = analytic_center(model)
        # removed rows and the center live in the same coordinates: nothing
        # coordinate-changing runs between removal and this check
        _consistency_check(removed_rows, center)
        removed_rows = []

        tight = {}
        for i in range(model.n):
            if center[i] - model.l[i] < CENTER_TIGHT_TOL:
                tight[i] = float(model.l[i])
            elif model.u[i] - center[i] < CENTER_TIGHT_TOL:
                tight[i] = float(model.u[i])
        if tight:
            model, step = _eliminate_columns(model, tight)
            record.add(step)
            changed = True

        if not changed:
            record.meta["rounds"] = rounds
            return model, record
    raise NumericalFailureError(f"simplification did not settle in {max_rounds} rounds")


def record_to_dict(record):
    steps = []
    for step in record.steps:
        if isinstance(step, DropColumns):
            steps.append({
                "type": "drop_columns",
                "n_before": int(step.n_before),
                "kept": [int(i) for i in step.kept],
                "fixed": {str(k): float(v) for k, v in step.fixed.items()},
            })
        elif isinstance(step, SplitColumn):
            steps.append({
                "type": "split_column",
                "n_before": int(step.n_before),
                "source": int(step.source),
                "pieces": int(step.pieces),
            })
        elif isinstance(step, ScaleColumns):
            steps.append({
                "type": "scale_columns",
                "factors": [float(v) for v in step.factors],
            })
        elif isinstance(step, DropRows):
            steps.append({"type": "drop_rows", "removed": [int(i) for i in step.removed]})
        else:
            raise TypeError(f"unknown record step {type(step)!r}")
    return {"steps": steps, "meta": dict(record.meta)}


def record_from_dict(doc):
    record = TransformRecord(meta=dict(doc.get("meta", {})))
    for step in doc.get("steps", []):
        kind = step["type"]
        if kind == "drop_columns":
            record.add(DropColumns(
                n_before=int(step["n_before"]),
                kept=np.asarray(step["kept"], dtype=np.int64),
                fixed={int(k): float(v) for k, v in step["fixed"].items()},
            ))
        elif kind == "split_column":
            record.add(SplitColumn(
                n_before=int(step["n_before"]),
                source=int(step["source"]),
                pieces=int(step["pieces"]),
            ))
        elif kind == "scale_columns":
            record.add(ScaleColumns(factors=np.asarray(step["factors"])))
        elif kind == "drop_rows":
            record.add(DropRows(removed=list(step["removed"])))
        else:
            raise ValueError(f"unknown record step type {kind!r}")
    return record


def _consistency_check(removed_rows, point):
    for row, rhs in removed_rows:
        resid = abs(float(row @ point) - rhs)
        if resid > 1e-6 * (1.0 + abs(rhs)):
            raise ModelInfeasibleError(
                "a removed dependent row is inconsistent with the remaining "
                f"system (residual {resid:.3e})"
            )
