"""Solution-set analytics: dominance, hypervolume, rank controllability, spread."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

# Exact null distribution of Kendall's S is used up to this size (ties force the normal approximation).
EXACT_TAU_MAX_N = 50


@dataclass
class SolutionSet:
    """Evaluated mean return per preference, one row each."""

    prefs: np.ndarray  # (M, N)
    means: np.ndarray  # (M, N)
    stds: np.ndarray  # (M, N)
    episodes: np.ndarray  # (M,)

    def __post_init__(self):
        self.prefs = np.atleast_2d(np.asarray(self.prefs, dtype=float))
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.stds = np.atleast_2d(np.asarray(self.stds, dtype=float))
        self.episodes = np.asarray(self.episodes, dtype=int).reshape(-1)
        m = self.means.shape[0]
        if not (self.prefs.shape[0] == self.stds.shape[0] == len(self.episodes) == m):
            raise ShapeError("solution set columns have different lengths")
        if self.means.shape != self.stds.shape:
            raise ShapeError("means and stds differ in shape")
        if (self.episodes < 1).any():
            raise ValueError("episode counts must be >= 1")

    def __len__(self):
        return self.means.shape[0]

    @property
    def n_objectives(self) -> int:
        return self.means.shape[1]

    def concat(self, other: "SolutionSet") -> "SolutionSet":
        return SolutionSet(
            np.vstack([self.prefs, other.prefs]),
            np.vstack([self.means, other.means]),
            np.vstack([self.stds, other.stds]),
            np.concatenate([self.episodes, other.episodes]),
        )

    def to_csv(self, path):
        n_p, n_o = self.prefs.shape[1], self.n_objectives
        header = [f"pref_{j}" for j in range(n_p)] + [f"mean_{j}" for j in range(n_o)]
        header += [f"std_{j}" for j in range(n_o)] + ["episodes"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for p, m, s, e in zip(self.prefs, self.means, self.stds, self.episodes):
                w.writerow([repr(float(v)) for v in (*p, *m, *s)] + [int(e)])

    @classmethod
    def from_csv(cls, path) -> "SolutionSet":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
        cols = {name: data[:, i] for i, name in enumerate(header)}
        pick = lambda prefix: np.column_stack([cols[h] for h in header if h.startswith(prefix)])  # noqa: E731
        return cls(pick("pref_"), pick("mean_"), pick("std_"), cols["episodes"].astype(int))


def dominates(a, b) -> bool:
    """``a >= b`` everywhere and ``a > b`` somewhere (maximisation)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"{a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def pareto_mask(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros(0, dtype=bool)
    ge = np.all(pts[:, None, :] >= pts[None, :, :], axis=-1)
    gt = np.any(pts[:, None, :] > pts[None, :, :], axis=-1)
    dominated = np.any(ge & gt, axis=0)  # column j dominated by some row i
    return ~dominated


def pareto_filter(points) -> np.ndarray:
    """Non-dominated rows, in input order. Duplicates of a non-dominated point are all kept."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
    return pts[pareto_mask(pts)]


def _prepare(points, ref):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(ref, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, ref.size), ref
    if pts.shape[1] != ref.size:
        raise ShapeError(f"points have {pts.shape[1]} objectives, reference has {ref.size}")
    return pts[np.all(pts > ref, axis=1)], ref


def hypervolume_2d(points, ref) -> float:
    """Exact area dominated by ``points`` above ``ref`` (sweep over x, descending)."""
    pts, ref = _prepare(points, ref)
    if ref.size != 2:
        raise ShapeError("hypervolume_2d needs two objectives")
    area = 0.0
    top = ref[1]
    for x, y in pts[np.argsort(-pts[:, 0], kind="stable")]:
        if y > top:
            area += (x - ref[0]) * (y - top)
            top = y
    return float(area)


def hypervolume_mc(points, ref, n_samples=1_000_000, seed=0, chunk=100_000):
    """Monte-Carlo estimate over the box ``[ref, max(points)]``; returns ``(value, standard_error)``."""
    pts, ref = _prepare(points, ref)
    if len(pts) == 0:
        return 0.0, 0.0
    hi = pts.max(axis=0)
    box = float(np.prod(hi - ref))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        u = ref + rng.random((m, ref.size)) * (hi - ref)
        covered = np.zeros(m, dtype=bool)
        for p in pts:
            covered |= np.all(u <= p, axis=1)
        hits += int(covered.sum())
        done += m
    frac = hits / n_samples
    return box * frac, box * math.sqrt(frac * (1 - frac) / n_samples)


def hypervolume(points, ref, n_samples=1_000_000, seed=0) -> float:
    """Dominated volume relative to ``ref``: exact for one or two objectives, Monte-Carlo beyond."""
    ref = np.asarray(ref, dtype=float)
    pts, _ = _prepare(points, ref)
    if ref.size == 1:
        return float(pts.max() - ref[0]) if len(pts) else 0.0
    if ref.size == 2:
        return hypervolume_2d(pts, ref)
    return hypervolume_mc(pts, ref, n_samples, seed)[0]


def projection_score(point, ref=(0.0, 0.0)):
    """``pi/2 - arctan((r2 - ref2) / (r1 - ref1))``; rows with ``r1 == ref1`` score 0.

    Larger scores mean a larger share of the first objective. Accepts one point or ``(M, 2)``.
    """
    pts = np.asarray(point, dtype=float)
    ref = np.asarray(ref, dtype=float)
    d = np.atleast_2d(pts) - ref
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.pi / 2 - np.arctan(d[:, 1] / d[:, 0])
    s = np.where(d[:, 0] == 0, 0.0, s)
    return float(s[0]) if pts.ndim == 1 else s


def _tie_counts(x):
    _, counts = np.unique(x, return_counts=True)
    return counts[counts > 1].astype(float)


def _s_null_cdf(n):
    """P(number of discordant pairs <= k) for a random permutation of ``n`` items, k = 0..n(n-1)/2."""
    dist = np.array([1.0])
    for i in range(2, n + 1):
        dist = np.convolve(dist, np.ones(i)) / i
    return np.cumsum(dist)


def kendall_tau(x, y):
    """Kendall's tau-b with a two-sided p-value.

    The p-value is exact (permutation distribution of S) for tie-free samples
    up to ``EXACT_TAU_MAX_N`` and a tie-corrected normal approximation otherwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("kendall_tau needs two equal-length 1-D sequences")
    n = x.size
    if n < 2:
        raise ValueError("kendall_tau needs at least two observations")
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, 1)
    prod = (dx * dy)[iu]
    s = float(prod.sum())
    n0 = n * (n - 1) / 2
    tx, ty = _tie_counts(x), _tie_counts(y)
    n1 = float((tx * (tx - 1) / 2).sum())
    n2 = float((ty * (ty - 1) / 2).sum())
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0:
        return float("nan"), float("nan")
    tau = s / denom
    if not len(tx) and not len(ty) and n <= EXACT_TAU_MAX_N:
        discordant = int(round((n0 - s) / 2))
        cdf = _s_null_cdf(n)
        k = min(discordant, int(n0) - discordant)
        p = min(1.0, 2.0 * cdf[k])
    else:
        v0 = n * (n - 1) * (2 * n + 5)
        vt = float((tx * (tx - 1) * (2 * tx + 5)).sum())
        vu = float((ty * (ty - 1) * (2 * ty + 5)).sum())
        v1 = float((tx * (tx - 1)).sum() * (ty * (ty - 1)).sum()) / (2 * n * (n - 1))
        v2 = float((tx * (tx - 1) * (tx - 2)).sum() * (ty * (ty - 1) * (ty - 2)).sum())
        v2 = v2 / (9 * n * (n - 1) * (n - 2)) if n > 2 else 0.0
        var = (v0 - vt - vu) / 18 + v1 + v2
        p = math.erfc(abs(s) / math.sqrt(var) / math.sqrt(2)) if var > 0 else 1.0
    return float(tau), float(p)


def mean_pairwise_distance(points) -> float:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if n < 2:
        raise ValueError("mean pairwise distance needs at least two points")
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    return float(d[np.triu_indices(n, 1)].mean())


def nvd(a, b) -> float:
    """Distance between the unit vectors along ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("nvd is undefined for a zero vector")
    return float(np.linalg.norm(a / na - b / nb))


def controllability(solutions: SolutionSet, ref=None):
    """Rank agreement between preference weights and achieved returns.

    Two objectives: one ``(tau, p)`` between the first preference weight and
    :func:`projection_score`. More objectives: a list with one ``(tau, p)``
    per objective between ``p_j`` and the mean return ``j``.
    """
    if solutions.n_objectives == 2:
        ref = (0.0, 0.0) if ref is None else ref
        return kendall_tau(solutions.prefs[:, 0], projection_score(solutions.means, ref))
    return [kendall_tau(solutions.prefs[:, j], solutions.means[:, j]) for j in range(solutions.n_objectives)]


def summarize(solutions: SolutionSet, ref, n_samples=1_000_000, seed=0) -> dict:
    """Hypervolume, controllability tau / p and MPD of a solution set."""
    out = {"n_points": len(solutions)}
    if solutions.n_objectives > 2:
        hv, se = hypervolume_mc(solutions.means, ref, n_samples, seed)
        out.update(hypervolume=hv, hypervolume_se=se)
        taus = controllability(solutions, ref)
        for j, (t, p) in enumerate(taus):
            out[f"tau_o{j}"] = t
            out[f"tau_p_o{j}"] = p
        out["tau"] = float(np.nanmean([t for t, _ in taus]))
        out["tau_p"] = float("nan")
    else:
        out.update(hypervolume=hypervolume(solutions.means, ref), hypervolume_se=0.0)
        tau, p = controllability(solutions, ref) if len(solutions) >= 2 else (float("nan"), float("nan"))
        out.update(tau=tau, tau_p=p)
    out["mpd"] = mean_pairwise_distance(solutions.means) if len(solutions) >= 2 else 0.0
    return out
