"""Dolan-More performance profiles.

For problems p and solvers s with cost t[p, s] (evaluations to target),

    r[p, s]   = t[p, s] / min_s t[p, s]
    rho_s(tau) = |{p : r[p, s] <= tau}| / |P|

Unsolved pairs get the sentinel ratio 2 * (largest finite ratio) so that
emitted tables stay finite; the sentinel never counts as "solved" at any tau.
"""
from __future__ import annotations

import csv
import html
import io
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# a pair is unsolved unless at least this fraction of replicates hit the target
QUORUM = 0.5


@dataclass(frozen=True)
class RunRecord:
    problem: str
    solver: str
    mean_evals_to_target: Optional[float]
    n_replicates: int
    n_solved: int = 0
    total_evals: int = 0

    @property
    def solved(self) -> bool:
        return self.mean_evals_to_target is not None


def aggregate(problem: str, solver: str, evals_to_target: Sequence[Optional[int]], total_evals: int = 0) -> RunRecord:
    """Average evaluations-to-target over the replicates that reached it.

    ``None`` entries are replicates that did not reach the target; the pair
    counts as unsolved when fewer than half of the replicates succeeded.
    """
    if not evals_to_target:
        raise ValueError("no replicates to aggregate")
    hits = [e for e in evals_to_target if e is not None]
    n = len(evals_to_target)
    mean = float(np.mean(hits)) if hits and len(hits) >= QUORUM * n else None
    return RunRecord(problem, solver, mean, n, len(hits), total_evals)


@dataclass(frozen=True)
class RatioTable:
    problems: tuple
    solvers: tuple
    ratios: np.ndarray  # sentinel where unsolved
    solved: np.ndarray  # bool mask
    sentinel: float

    def ratio(self, problem, solver) -> float:
        return float(self.ratios[self.problems.index(problem), self.solvers.index(solver)])


@dataclass(frozen=True)
class ProfileCurve:
    solver: str
    points: tuple  # ((log2_tau, rho), ...)

    @property
    def rho(self) -> np.ndarray:
        return np.array([r for _, r in self.points])


def performance_ratios(records: Sequence[RunRecord]) -> RatioTable:
    if not records:
        raise ValueError("no run records")
    problems = tuple(dict.fromkeys(r.problem for r in records))
    solvers = tuple(dict.fromkeys(r.solver for r in records))
    cost = np.full((len(problems), len(solvers)), np.inf)
    seen = set()
    for r in records:
        key = (r.problem, r.solver)
        if key in seen:
            raise ValueError(f"duplicate record for problem {r.problem!r}, solver {r.solver!r}")
        seen.add(key)
        if r.solved:
            cost[problems.index(r.problem), solvers.index(r.solver)] = r.mean_evals_to_target
    solved = np.isfinite(cost)
    best = np.min(cost, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        ratios = np.where(solved, cost / best, np.nan)
    finite_max = float(np.nanmax(ratios)) if solved.any() else 1.0
    sentinel = 2.0 * finite_max
    ratios = np.where(solved, ratios, sentinel)
    return RatioTable(problems, solvers, ratios, solved, sentinel)


def default_tau_grid(points: int = 64, log2_max: float = 10.0) -> np.ndarray:
    return np.logspace(0.0, log2_max, points, base=2.0)


def profile_curve(table: RatioTable, solver: str, tau_grid) -> ProfileCurve:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise ValueError("tau_grid must be a nonempty 1-d sequence")
    if tau[0] != 1.0:
        raise ValueError(f"tau_grid must start at 1, got {tau[0]!r}")
    if np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be strictly increasing")
    j = table.solvers.index(solver)
    r = table.ratios[:, j]
    ok = table.solved[:, j]
    n_prob = len(table.problems)
    points = tuple(
        (float(math.log2(t)), float(np.count_nonzero(ok & (r <= t)) / n_prob)) for t in tau
    )
    return ProfileCurve(solver, points)


# ---------------------------------------------------------------------------
# Output

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(x: float) -> str:
    return f"{x:.17g}"


def profile_csv(curves: Sequence[ProfileCurve]) -> str:
    grid = [t for t, _ in curves[0].points]
    for c in curves[1:]:
        if [t for t, _ in c.points] != grid:
            raise ValueError("all curves must share one tau grid")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["log2_tau"] + [c.solver for c in curves])
    for i, t in enumerate(grid):
        writer.writerow([_num(t)] + [_num(c.points[i][1]) for c in curves])
    return buf.getvalue()


def profile_svg(curves: Sequence[ProfileCurve], title: str = "") -> str:
    """Step-interpolated line chart of rho_s against log2(tau)."""
    w, h, left, right, top, bottom = 640, 420, 60, 170, 40, 50
    pw, ph = w - left - right, h - top - bottom
    xmax = max(c.points[-1][0] for c in curves) or 1.0

    def px(t):
        return left + pw * t / xmax

    def py(r):
        return top + ph * (1.0 - r)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.2f}" y="24" text-anchor="middle" font-size="14">{html.escape(title)}</text>')
    for i in range(6):
        r = i / 5
        out.append(f'<text x="{left - 8}" y="{py(r) + 4:.2f}" text-anchor="end" font-size="11">{r:.1f}</text>')
    for i in range(6):
        t = xmax * i / 5
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{t:.1f}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{h - 10}" text-anchor="middle" font-size="12">log2(tau)</text>')
    for k, c in enumerate(curves):
        color = _PALETTE[k % len(_PALETTE)]
        pts = []
        prev = None
        for t, r in c.points:
            if prev is not None:
                pts.append(f"{px(t):.2f},{py(prev):.2f}")
            pts.append(f"{px(t):.2f},{py(r):.2f}")
            prev = r
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(pts)}"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{w - right + 12}" y1="{ly}" x2="{w - right + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{w - right + 42}" y="{ly + 4}" font-size="11">{html.escape(c.solver)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_profile_data(curves: Sequence[ProfileCurve], stem, title: str = "") -> tuple[str, str]:
    """Write ``<stem>.csv`` and ``<stem>.svg``; returns both paths."""
    if not curves:
        raise ValueError("need at least one profile curve")
    csv_path, svg_path = f"{stem}.csv", f"{stem}.svg"
    text_csv, text_svg = profile_csv(curves), profile_svg(curves, title)
    parent = os.path.dirname(os.fspath(csv_path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        fh.write(text_csv)
    with open(svg_path, "w", newline="") as fh:
        fh.write(text_svg)
    return csv_path, svg_path
