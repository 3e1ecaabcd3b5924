"""Ground-truth evaluation of candidate designs.

Everything here is pure numpy on explicit solution tuples: SINR, rates, the
three-part power model, energy efficiency, and a full feasibility audit.
Solvers are always checked against this module, never against themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelMatrix, Scenario


class InfeasibleError(RuntimeError):
    """Raised when a requested design problem admits no feasible point."""


@dataclass
class Beamformers:
    """Stacked transmit beamformers.

    ``w`` is (B*I, K) complex; column k is user k's beamformer, rows
    [b*I, (b+1)*I) belong to RRH b.  Row b*I+i across all columns is the
    per-antenna cross-user slice whose l2 norm drives the PA model.
    """

    w: np.ndarray

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=complex)
        if not np.all(np.isfinite(self.w.view(float))):
            raise ValueError("beamformer entries must be finite")

    def beam_block(self, b: int, k: int, I: int) -> np.ndarray:
        """w_{b,k}: RRH b's I antenna weights toward user k."""
        return self.w[b * I:(b + 1) * I, k]

    def antenna_row(self, b: int, i: int, I: int) -> np.ndarray:
        """Cross-user slice of antenna i at RRH b (length K)."""
        return self.w[b * I + i, :]

    def save(self, path: str) -> None:
        np.savez(path, w_re=self.w.real, w_im=self.w.imag)

    @classmethod
    def load(cls, path: str) -> "Beamformers":
        d = np.load(path)
        return cls(w=d["w_re"] + 1j * d["w_im"])


@dataclass
class Solution:
    """A complete candidate design plus its scored energy efficiency.

    ``t`` stores per-RRH summed antenna norms (same units as the beamformer
    magnitudes); the PA efficiency factor is applied inside the power model.
    """

    beamformers: Beamformers
    x: np.ndarray        # (B, K) association
    s: np.ndarray        # (B,) activity
    r: np.ndarray        # (K,) rates, nats/s/Hz
    t: np.ndarray        # (B,) PA-power proxy
    ee: float = 0.0      # nats/s/Hz per watt

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.t = np.asarray(self.t, dtype=float)

    def to_json(self) -> str:
        return json.dumps({
            "x": self.x.tolist(), "s": self.s.tolist(),
            "r": self.r.tolist(), "t": self.t.tolist(), "ee": self.ee,
        }, sort_keys=True)


@dataclass
class FeasibilityReport:
    """Worst normalized violation per constraint family; <= tol means clean.

    Violations are (lhs - rhs) / max(1, |rhs|), so 0 sits exactly on the
    boundary and negative numbers mean slack.
    """

    rate: float                # claimed r vs achievable log(1 + SINR)
    qos: float                 # minimum-rate floor
    fronthaul: float           # per-RRH carried rate vs capacity
    rrh_power: float           # per-RRH transmit power budget
    antenna_power: float       # per-antenna PA budget
    association_power: float   # beam energy only on associated links
    coverage: float            # every user served at least once
    linkage: float             # activity consistent with association
    binariness: float          # x, s distance from {0, 1}
    tol: float = 1e-6
    ok: bool = field(init=False)

    def __post_init__(self) -> None:
        self.ok = self.worst() <= self.tol

    def families(self) -> dict[str, float]:
        return {
            "rate": self.rate, "qos": self.qos, "fronthaul": self.fronthaul,
            "rrh_power": self.rrh_power, "antenna_power": self.antenna_power,
            "association_power": self.association_power, "coverage": self.coverage,
            "linkage": self.linkage, "binariness": self.binariness,
        }

    def worst(self) -> float:
        return max(self.families().values())


def sinr(scenario: Scenario, channels: ChannelMatrix, beamformers: Beamformers, k: int) -> float:
    """Received SINR of user k under single-user decoding."""
    gains = channels.h[k] @ beamformers.w          # length K, entry j = h_k w_j
    power = np.abs(gains) ** 2
    interference = power.sum() - power[k]
    return float(power[k] / (interference + scenario.sigma2_k[k]))


def achieved_rates(scenario: Scenario, channels: ChannelMatrix, beamformers: Beamformers) -> np.ndarray:
    """log(1 + SINR_k) for every user, nats/s/Hz."""
    gains = channels.h @ beamformers.w             # (K, K)
    power = np.abs(gains) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return np.log1p(signal / (interference + scenario.sigma2_k))


def pa_norm_sums(scenario: Scenario, beamformers: Beamformers) -> np.ndarray:
    """Per-RRH sum of antenna-slice l2 norms (the t-proxy, no efficiency factor)."""
    rows = np.linalg.norm(beamformers.w, axis=1)   # per antenna row, across users
    return rows.reshape(scenario.B, scenario.I).sum(axis=1)


def pa_power(scenario: Scenario, beamformers: Beamformers, b: int) -> float:
    """Watts burned in RRH b's power amplifiers under the back-off model."""
    return float(scenario.eps_tilde * pa_norm_sums(scenario, beamformers)[b])


def _check_linkage(x: np.ndarray, s: np.ndarray, slack: float = 1e-6) -> None:
    upper = x.max(axis=1)
    total = x.sum(axis=1)
    if np.any(s < upper - slack) or np.any(s > total + slack):
        raise ValueError("activity vector inconsistent with association matrix")


def total_power(scenario: Scenario, x: np.ndarray, s: np.ndarray, r: np.ndarray,
                beamformers_or_t: Beamformers | np.ndarray) -> float:
    """Total consumed watts: PA back-off + awake overhead + rate-dependent + floor."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    _check_linkage(x, s)
    if isinstance(beamformers_or_t, Beamformers):
        t = pa_norm_sums(scenario, beamformers_or_t)
    else:
        t = np.asarray(beamformers_or_t, dtype=float)
    pa_term = scenario.eps_tilde * t.sum()
    awake_term = scenario.power.delta_p * s.sum()
    rate_term = scenario.rate_power_coeff * float((x @ r).sum())
    return float(pa_term + awake_term + rate_term + scenario.p_const)


def evaluate_ee(scenario: Scenario, channels: ChannelMatrix, solution: Solution) -> float:
    """Sum rate over total power, the objective every solver chases."""
    denom = total_power(scenario, solution.x, solution.s, solution.r, solution.beamformers)
    return float(solution.r.sum() / denom)


def check_feasibility(scenario: Scenario, channels: ChannelMatrix, solution: Solution,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Audit every constraint family at the given tolerance."""
    B, K, I = scenario.B, scenario.K, scenario.I
    x, s, r = solution.x, solution.s, solution.r
    w = solution.beamformers.w

    rates = achieved_rates(scenario, channels, solution.beamformers)
    rate_v = np.max((r - rates) / np.maximum(1.0, np.abs(rates)))
    qos_v = np.max((scenario.r0 - r) / max(1.0, scenario.r0))

    carried = (x * r[None, :]).sum(axis=1)
    fronthaul_v = np.max((carried - scenario.C_bar_b) / np.maximum(1.0, scenario.C_bar_b))

    energy = np.abs(w) ** 2
    beam_energy = energy.reshape(B, I, K).sum(axis=1)        # per (b, k) beam
    rrh_energy = beam_energy.sum(axis=1)
    antenna_energy = energy.reshape(B, I, K).sum(axis=2)     # per (b, i) slice

    rrh_v = np.max((rrh_energy - scenario.P_bar_b) / np.maximum(1.0, scenario.P_bar_b))
    ant_v = np.max((antenna_energy - scenario.P_a) / max(1.0, scenario.P_a))
    assoc_v = np.max((beam_energy - x * scenario.P_bar_b[:, None])
                     / np.maximum(1.0, scenario.P_bar_b)[:, None])

    coverage_v = np.max(1.0 - x.sum(axis=0))
    linkage_v = max(np.max(x - s[:, None]), np.max(s - x.sum(axis=1)))
    binary_v = max(
        np.max(np.minimum(np.abs(x), np.abs(x - 1.0))),
        np.max(np.minimum(np.abs(s), np.abs(s - 1.0))),
    )

    return FeasibilityReport(
        rate=float(rate_v), qos=float(qos_v), fronthaul=float(fronthaul_v),
        rrh_power=float(rrh_v), antenna_power=float(ant_v),
        association_power=float(assoc_v), coverage=float(coverage_v),
        linkage=float(linkage_v), binariness=float(binary_v), tol=tol,
    )


def assemble_solution(scenario: Scenario, channels: ChannelMatrix, w: np.ndarray,
                      x: np.ndarray, s: np.ndarray, r: np.ndarray) -> Solution:
    """Bundle solver outputs, filling the PA proxy and the scored EE."""
    bf = w if isinstance(w, Beamformers) else Beamformers(w=w)
    sol = Solution(beamformers=bf, x=x, s=s, r=r, t=pa_norm_sums(scenario, bf))
    sol.ee = evaluate_ee(scenario, channels, sol)
    return sol
