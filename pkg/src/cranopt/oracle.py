"""Brute-force certification for tiny instances.

Exhaustive enumeration of every coverage-satisfying association, each scored
by the branch-and-bound engine in frozen-binary mode (rates are the only
branched coordinates there).  Independence comes from the exhaustive outer
loop, not from reimplementing the conic layer.  A separate single-user oracle
works on a plain rate grid with closed-form matched-filter beamforming and
touches no solver code at all.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import dbrb
from .model import Solution, assemble_solution
from .scenario import ChannelMatrix, Scenario

_MAX_CELLS = 12          # enumeration guard: at most 2^12 - ish patterns


@dataclass
class AssignmentRecord:
    x: np.ndarray
    s: np.ndarray
    feasible: bool
    ee: float = -math.inf

    def bitmask(self) -> int:
        """Row-major association bits packed into one integer."""
        bits = 0
        for v in self.x.ravel():
            bits = (bits << 1) | int(round(v))
        return bits


@dataclass
class OracleResult:
    best: Solution | None
    table: list[AssignmentRecord] = field(default_factory=list)
    enumerated: int = 0

    @property
    def best_ee(self) -> float:
        return self.best.ee if self.best is not None else -math.inf


def enumerate_assignments(scenario: Scenario):
    """Yield every (x, s) with all users covered, activity derived from x."""
    B, K = scenario.B, scenario.K
    if B * K > _MAX_CELLS:
        raise ValueError(
            f"refusing to enumerate B*K = {B * K} > {_MAX_CELLS} association cells")
    # nonempty serving subsets per user, smallest bitmask first
    subsets = [np.array([(mask >> b) & 1 for b in range(B)], dtype=float)
               for mask in range(1, 2 ** B)]
    for cols in itertools.product(subsets, repeat=K):
        x = np.stack(cols, axis=1)
        s = (x.sum(axis=1) > 0.0).astype(float)
        yield x, s


def inner_continuous_solve(scenario: Scenario, channels: ChannelMatrix,
                           x: np.ndarray, s: np.ndarray, tol: float = 1e-3,
                           _cache: "dbrb.BoundCache | None" = None
                           ) -> tuple[float, Solution] | None:
    """EE optimum over rates at a frozen association, or None if infeasible."""
    opts = dbrb.DbrbOptions(rel_gap_tol=tol, fixed_x=np.asarray(x, dtype=float),
                            fixed_s=np.asarray(s, dtype=float))
    res = dbrb.solve(scenario, channels, opts, warm_cache=_cache)
    if res.solution is None:
        return None
    return res.eta_best, res.solution


def brute_force_solve(scenario: Scenario, channels: ChannelMatrix,
                      tol: float = 1e-3) -> OracleResult:
    """Max over all assignments of the frozen-binary optimum.

    The SOCP memo and infeasibility cuts are shared across assignments; both
    are keyed by the association mask, so nothing leaks between patterns that
    could not legally share it.
    """
    result = OracleResult(best=None)
    cache = dbrb.BoundCache()
    best_ee = -math.inf
    for x, s in enumerate_assignments(scenario):
        result.enumerated += 1
        inner = inner_continuous_solve(scenario, channels, x, s, tol, _cache=cache)
        if inner is None:
            result.table.append(AssignmentRecord(x=x, s=s, feasible=False))
            continue
        ee, sol = inner
        result.table.append(AssignmentRecord(x=x, s=s, feasible=True, ee=ee))
        if ee > best_ee:
            best_ee = ee
            result.best = sol
    return result


def dump_table(result: OracleResult, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bitmask", "feasible", "ee"])
        for rec in result.table:
            writer.writerow([rec.bitmask(), int(rec.feasible),
                             rec.ee if rec.feasible else ""])


def single_user_grid(scenario: Scenario, channels: ChannelMatrix,
                     resolution: float = 1e-4) -> Solution | None:
    """Direct single-RRH single-user solve on a rate grid, no conic solver.

    The matched filter maximizes received power per transmitted watt, so
    scaling it to hit each grid rate gives the cheapest beamformer for that
    rate; the grid argmax of the resulting EE curve is the optimum up to the
    grid resolution.  Only valid for B = K = 1 (no interference, and the
    power caps bind through a single scaling factor).
    """
    if scenario.B != 1 or scenario.K != 1:
        raise ValueError("the grid oracle only covers B = K = 1")
    h = channels.h[0, :]
    gain = float(np.vdot(h, h).real)
    sigma2 = float(scenario.sigma2_k[0])
    # largest matched-filter power allowed by the per-RRH and per-antenna caps
    p_cap = min(float(scenario.P_bar_b[0]),
                scenario.P_a * gain / float(np.max(np.abs(h) ** 2)))
    r_max = min(float(scenario.C_bar_b[0]), math.log1p(p_cap * gain / sigma2))
    if r_max < scenario.r0 - 1e-12:
        return None
    rates = np.arange(scenario.r0, r_max + resolution, resolution)
    rates[-1] = min(rates[-1], r_max)
    p_needed = np.expm1(rates) * sigma2 / gain
    # per-antenna amplitude proxy of the scaled matched filter
    t_sum = np.sqrt(p_needed) * float(np.abs(h).sum()) / math.sqrt(gain)
    power = (scenario.eps_tilde * t_sum + scenario.power.delta_p
             + scenario.rate_power_coeff * rates + scenario.p_const)
    k = int(np.argmax(rates / power))
    w = (math.sqrt(p_needed[k]) * h.conj() / math.sqrt(gain)).reshape(-1, 1)
    return assemble_solution(scenario, channels, w, np.ones((1, 1)),
                             np.ones(1), np.array([rates[k]]))
