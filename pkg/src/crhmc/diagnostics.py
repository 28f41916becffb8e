"""Sampling-quality measurements: effective sample size, double thinning,
radial uniformity statistic, and steps/time-per-effective-sample reports.

ESS uses the initial monotone positive sequence estimator on biased (1/N)
autocovariances: consecutive autocorrelations are summed in pairs, truncated
at the first non-positive pair, clamped to be non-increasing, and combined
as ESS = N / (1 + 2 sum rho_k), capped at N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EssReport:
    per_coordinate: np.ndarray
    min_ess: float
    truncation_lags: np.ndarray
    constant_coordinates: np.ndarray  # flagged: zero variance, assigned ESS = N

    @property
    def any_flagged(self):
        return bool(self.constant_coordinates.any())


def _autocorr_fft(x):
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov


def ess(samples):
    """Per-coordinate effective sample size of an N x d sample matrix."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.ndim != 2:
        raise ValueError("samples must be a 2-d array")
    N, d = X.shape
    if N < 10:
        raise ValueError(f"need at least 10 samples to estimate ESS, got {N}")
    per = np.empty(d)
    lags = np.zeros(d, dtype=np.int64)
    constant = np.zeros(d, dtype=bool)
    for j in range(d):
        x = X[:, j] - X[:, j].mean()
        c0 = float(x @ x) / N
        scale = max(1.0, float(np.max(np.abs(X[:, j]))) ** 2)
        if c0 <= 1e-30 * scale:
            per[j] = N
            constant[j] = True
            continue
        rho = _autocorr_fft(x) / c0
        n_pairs = N // 2
        gamma = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
        stop = n_pairs
        for m_idx in range(1, n_pairs):
            if gamma[m_idx] <= 0.0:
                stop = m_idx
                break
        kept = np.minimum.accumulate(gamma[:stop])
        tau = 2.0 * float(kept.sum()) - 1.0
        per[j] = N if tau <= 0 else min(float(N), N / tau)
        lags[j] = 2 * stop - 1
    return EssReport(per, float(per.min()), lags, constant)


def thin_twice(samples):
    """Two rounds of: compute min-ESS, keep floor(ESS) evenly strided samples."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[0] < 10:
        raise ValueError("need at least 10 samples to thin")
    for _ in range(2):
        if X.shape[0] < 10:
            break
        k = max(1, int(np.floor(ess(X).min_ess)))
        idx = (np.arange(k) * X.shape[0]) // k
        X = X[idx]
    return X


def uniformity_radii(samples, model, center):
    """Scaling radius of each sample about the center, via the box ratio test.

    r(s) is the factor by which the polytope must be scaled about the center
    for s to reach the boundary; scaling preserves Ax = b, so only box faces
    participate.  For exact uniform samples r^dim is Uniform[0, 1] with
    dim = n - m.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    c = np.asarray(center, dtype=np.float64)
    slack = 1e-9 * np.maximum(1.0, np.abs(model.u - model.l))
    if np.any(X < model.l - slack) or np.any(X > model.u + slack):
        raise ValueError("infeasible sample passed to the uniformity test")
    up = model.u - c
    lo = c - model.l
    r = np.zeros(X.shape[0])
    d = X - c
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_up = np.where(d > 0, d / up, 0.0)
        ratio_lo = np.where(d < 0, -d / lo, 0.0)
    r = np.maximum(ratio_up, ratio_lo).max(axis=1)
    return np.clip(r, 0.0, 1.0)


def uniformity_statistic(samples, model, center):
    """u = r^dim with dim the full dimension n - m; Uniform[0,1] under H0."""
    r = uniformity_radii(samples, model, center)
    dim = model.n - model.m
    return r ** dim


def ks_statistic(values):
    """Sup distance between the empirical CDF of values in [0,1] and the identity."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("ks_statistic needs at least one value")
    n = v.size
    i = np.arange(1, n + 1)
    return float(np.maximum(i / n - v, v - (i - 1) / n).max())


@dataclass
class MixingRow:
    label: str
    n: int
    nnz: int
    steps: int
    min_ess: float
    seconds: float
    reliable: bool = True

    @property
    def steps_per_ess(self):
        return self.steps / self.min_ess

    @property
    def seconds_per_ess(self):
        return self.seconds / self.min_ess


@dataclass
class MixingReport:
    rows: list = field(default_factory=list)
    steps_slope: float = None
    seconds_slope: float = None

    def format_table(self):
        lines = [
            f"{'model':<18}{'n':>8}{'nnz':>8}{'steps/ESS':>14}{'sec/ESS':>12}  note"
        ]
        for row in self.rows:
            note = "" if row.reliable else "unreliable (ESS < 10)"
            lines.append(
                f"{row.label:<18}{row.n:>8}{row.nnz:>8}"
                f"{row.steps_per_ess:>14.2f}{row.seconds_per_ess:>12.4f}  {note}"
            )
        if self.steps_slope is not None:
            lines.append(f"log-log slope of steps/ESS vs n: {self.steps_slope:.3f}")
        if self.seconds_slope is not None:
            lines.append(f"log-log slope of sec/ESS vs n:   {self.seconds_slope:.3f}")
        return "\n".join(lines)


def mixing_entry(label, model, batch):
    """Row for one run: ESS of the twice-thinned recorded samples.

    Sampling-phase steps and wall time only; preprocessing and warm-up are
    excluded from the timing by construction.
    """
    thinned = thin_twice(batch.samples)
    if thinned.shape[0] >= 10:
        min_ess = ess(thinned).min_ess
    else:
        min_ess = float(thinned.shape[0])
    return MixingRow(
        label=label,
        n=model.n,
        nnz=model.nnz,
        steps=batch.stats.sampling_steps,
        min_ess=min_ess,
        seconds=batch.stats.sampling_seconds,
        reliable=min_ess >= 10.0,
    )


def mixing_report(rows):
    """Assemble rows; slopes regress reliable rows on log n (>= 2 sizes)."""
    report = MixingReport(rows=list(rows))
    good = [r for r in report.rows if r.reliable]
    sizes = sorted({r.n for r in good})
    if len(sizes) >= 2:
        ln = np.log([r.n for r in good])
        report.steps_slope = float(
            np.polyfit(ln, np.log([r.steps_per_ess for r in good]), 1)[0]
        )
        report.seconds_slope = float(
            np.polyfit(ln, np.log([max(r.seconds_per_ess, 1e-12) for r in good]), 1)[0]
        )
    return report
