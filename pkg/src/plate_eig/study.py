"""Convergence studies over a level hierarchy: eigenvalue tables, orders, trends.

Errors are measured against the finest level of the run, so the finest level
itself has error zero and carries no order.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigensolve import solve_sparse
from .errors import InvalidArgumentError, PlateEigError
from .linsolve import BlockFactorization
from .multilevel import build_hierarchy, multilevel_eigs, u_component_errors

log = logging.getLogger(__name__)

CSV_HEADER = ["eig_index", "level", "lambda", "error", "ord_lambda", "ord_u", "trend", "seconds"]
UP, DOWN = "↗", "↘"
TABLE_COLUMNS = 4           # trailing levels summarized by the trend symbol


@dataclass
class StudyConfig:
    domain: str = "square"
    triple: str = "B"
    method: str = "single"
    levels: int = 5
    k: int = 6
    n0: int = 4
    out: str | None = None
    seed: int = 0
    pattern: str = "crisscross"

    def validate(self):
        if self.domain not in ("square", "lshape"):
            raise InvalidArgumentError(f"unknown domain {self.domain!r}")
        if self.triple not in ("A", "B"):
            raise InvalidArgumentError(f"unknown triple {self.triple!r}")
        if self.method not in ("single", "multi"):
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if self.levels < 1:
            raise InvalidArgumentError("levels must be >= 1")
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if self.n0 < 1 or (self.domain == "lshape" and self.n0 % 2):
            raise InvalidArgumentError("n0 must be positive (and even on the L-shape)")
        return self


@dataclass
class StudyResult:
    config: StudyConfig
    h: np.ndarray                      # (L,) mesh size per level
    lambdas: np.ndarray                # (k, L)
    u_errors: np.ndarray               # (k, L), H1 distance to the finest level
    seconds: np.ndarray                # (L,)
    dofs: np.ndarray                   # (L,)
    status: str = "ok"
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def n_levels(self):
        return self.lambdas.shape[1]

    @property
    def k(self):
        return self.lambdas.shape[0]

    @property
    def complete(self):
        return self.status == "ok"

    @property
    def trends(self) -> list[str]:
        lo = max(0, self.n_levels - TABLE_COLUMNS)
        return [trend_symbol(row[lo:]) for row in self.lambdas]

    @property
    def errors(self) -> np.ndarray:
        """Signed errors, positive when the level approaches the reference monotonically.

        An eigenvalue ending with an upward step is treated as approaching from
        below (error ``lambda_N - lambda_l``), otherwise from above.
        """
        ref = self.lambdas[:, -1:]
        out = self.lambdas - ref
        for j, t in enumerate(self.trends):
            if t.endswith(UP):
                out[j] = -out[j]
        return out + 0.0            # no negative zeros at the reference level

    @property
    def ord_lambda(self) -> np.ndarray:
        return orders(self.errors)

    @property
    def ord_u(self) -> np.ndarray:
        return orders(self.u_errors)

    def tabulated(self, values):
        """The trailing columns a printed table would show."""
        return values[..., max(0, self.n_levels - TABLE_COLUMNS):]

    @property
    def from_below(self) -> np.ndarray:
        """(k, L) flags, True where the level value is below the reference."""
        return self.lambdas < self.lambdas[:, -1:]

    def extrapolated(self, order: float, fine: int | None = None) -> np.ndarray:
        """Richardson extrapolation from levels ``fine - 1`` and ``fine``."""
        fine = self.n_levels - 1 if fine is None else fine
        return richardson(self.lambdas[:, fine - 1], self.lambdas[:, fine], order)


def trend_symbol(values) -> str:
    """Arrow pattern of a sequence: monotone, one turn, or ``mixed``."""
    d = np.sign(np.diff(np.asarray(values, dtype=float)))
    d = d[d != 0]
    if len(d) == 0:
        return "-"
    runs = [d[0]] + [s for a, s in zip(d[:-1], d[1:]) if s != a]
    if len(runs) > 2:
        return "mixed"
    return "".join(UP if s > 0 else DOWN for s in runs)


def orders(errors) -> np.ndarray:
    """``log2(e_{l-1} / e_l)`` for l = 1..L-2; NaN where undefined.

    Index ``l`` of the result holds the order ending at level ``l``; entries
    0 and L-1 are always NaN.
    """
    e = np.atleast_2d(np.asarray(errors, dtype=float))
    out = np.full(e.shape, np.nan)
    for l in range(1, e.shape[1] - 1):
        a, b = e[:, l - 1], e[:, l]
        ok = (a != 0) & (b != 0) & (np.sign(a) == np.sign(b))
        with np.errstate(divide="ignore", invalid="ignore"):
            out[ok, l] = np.log2(a[ok] / b[ok])
    return out


def richardson(coarse, fine, order):
    r = 2.0 ** order
    return (r * np.asarray(fine) - np.asarray(coarse)) / (r - 1.0)


def fit_slope(h, err):
    """Least-squares slope of log|err| against log h, ignoring zero errors."""
    h, err = np.asarray(h, float), np.abs(np.asarray(err, float))
    keep = (err > 0) & np.isfinite(err)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(h[keep]), np.log(err[keep]), 1)[0])


# -- drivers ---------------------------------------------------------------

def _single_level(hier, k, seed, sink):
    rng = np.random.default_rng(seed)
    for lev, system in enumerate(hier.systems):
        tic = time.perf_counter()
        F = BlockFactorization(system)
        v0 = F.solve(system.B @ rng.standard_normal(system.size))
        pairs = solve_sparse(system.A, system.B, k, factorization=F,
                             u_index=system.field_slice("u"), v0=v0)
        del F
        sink(lev, pairs, time.perf_counter() - tic)


def _multi_level(hier, k, sink):
    multilevel_eigs(hier, k, on_level=lambda rec: sink(rec.level, rec.pairs, rec.seconds))


def run_study(config: StudyConfig) -> StudyResult:
    """Solve on every level of the hierarchy and collect the convergence data.

    Failures after some levels have finished leave a partial result with
    ``status="failed"`` instead of raising, so that callers can still write
    what was obtained.  Failures before any level finished propagate.
    """
    config.validate()
    tic = time.perf_counter()
    hier = build_hierarchy(config.domain, config.n0, config.levels, config.triple,
                           pattern=config.pattern)
    setup = time.perf_counter() - tic
    L = hier.n_levels
    lam = np.full((config.k, L), np.nan)
    secs = np.full(L, np.nan)
    level_us = {}

    def sink(lev, pairs, seconds):
        lam[:, lev] = [p.lam for p in pairs]
        secs[lev] = seconds
        sl = hier.systems[lev].field_slice("u")
        level_us[lev] = [p.vector[sl].copy() for p in pairs]
        log.info("level %d done in %.2fs: %s", lev, seconds, lam[:, lev])

    status, message = "ok", ""
    try:
        if config.method == "single":
            _single_level(hier, config.k, config.seed, sink)
        else:
            _multi_level(hier, config.k, sink)
    except PlateEigError as exc:
        if not level_us:
            raise
        status, message = "failed", f"{type(exc).__name__}: {exc}"
        log.error("study stopped: %s", message)

    uerr = np.full((config.k, L), np.nan)
    if status == "ok":
        for lev, e in u_component_errors(hier, level_us, lam[:, -1]).items():
            uerr[:, lev] = e
    result = StudyResult(config, np.array(hier.mesh_sizes()), lam, uerr, secs,
                         np.array([s.size for s in hier.systems]), status, message)
    result.extra["setup_seconds"] = setup
    return result


# -- output ----------------------------------------------------------------

def _fmt(x, digits=12):
    if x is None or not np.isfinite(x):
        return ""
    return f"{x:.{digits}g}"


def emit_csv(result: StudyResult, path, timing: bool = False) -> Path:
    """Write the study table; rows ordered by eigenvalue index, then level.

    Wall-clock seconds are only filled in with ``timing=True`` so that
    reruns produce identical files by default.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    err, ol, ou, trends = result.errors, result.ord_lambda, result.ord_u, result.trends
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for j in range(result.k):
            for lev in range(result.n_levels):
                if not np.isfinite(result.lambdas[j, lev]):
                    continue
                w.writerow([j + 1, lev, _fmt(result.lambdas[j, lev], 15),
                            _fmt(err[j, lev]) if result.complete else "",
                            _fmt(ol[j, lev], 6), _fmt(ou[j, lev], 6),
                            trends[j] if result.complete else "",
                            _fmt(result.seconds[lev], 4) if timing else ""])
    return path


def emit_plotdata(result: StudyResult, path, which: str = "lambda") -> Path:
    """Blocks of ``h error`` pairs, one per eigenpair, plus a reference slope.

    Blocks are separated by blank lines and start with a ``#`` header that
    names the series and, when at least two points exist, the fitted slope.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    err = result.errors if which == "lambda" else result.u_errors
    ref_order = {"lambda": 4 if result.config.triple == "B" else 2, "u": 2}[which]
    lines = []
    for j in range(result.k):
        keep = np.isfinite(err[j]) & (err[j] != 0)
        slope = fit_slope(result.h[keep], err[j][keep])
        head = f"# {which}_{j + 1}" + ("" if slope is None else f" slope {slope:.4f}")
        lines.append(head)
        lines += [f"{h:.10g} {abs(e):.10g}" for h, e in zip(result.h[keep], err[j][keep])]
        lines.append("")
    keep = np.isfinite(err[0]) & (err[0] != 0)
    if keep.sum() >= 2:
        h = result.h[keep]
        c = abs(err[0][keep][0]) / h[0] ** ref_order
        lines.append(f"# reference slope {ref_order}")
        lines += [f"{x:.10g} {c * x ** ref_order:.10g}" for x in h]
        lines.append("")
    path.write_text("\n".join(lines))
    return path


def summary_table(result: StudyResult) -> str:
    """Human-readable table of the trailing levels, orders and trends."""
    cols = list(range(max(0, result.n_levels - TABLE_COLUMNS), result.n_levels))
    ol, ou = result.ord_lambda, result.ord_u
    k_ord = result.n_levels - 2
    head = ["j"] + [f"level {c}" for c in cols] + ["ord_lambda", "ord_u", "trend"]
    rows = [head]
    for j in range(result.k):
        rows.append([str(j + 1)] + [f"{result.lambdas[j, c]:.5f}" for c in cols]
                    + [_fmt(ol[j, k_ord], 5) or "-", _fmt(ou[j, k_ord], 5) or "-",
                       result.trends[j]])
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def significant_digits_agree(a, b, digits=4) -> bool:
    scale = 10.0 ** (math.floor(math.log10(abs(a))) - digits + 1)
    return abs(a - b) < 0.5 * scale
