"""Network layouts, channel realizations, and the bundled system constants.

A :class:`Scenario` is the single configuration object every solver consumes:
counts, per-RRH power and fronthaul budgets, QoS target, noise, bandwidth,
the power-consumption model, and node positions.  Channels are flat Rayleigh
fading on top of a log-distance path loss with log-normal shadowing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

GRID = "grid"
HEX7 = "hex7_wraparound"
EXPLICIT = "explicit"
_LAYOUTS = (GRID, HEX7, EXPLICIT)


class ConfigError(ValueError):
    """Raised for invalid layout or scenario parameters."""


@dataclass
class PowerParams:
    """Constants of the three-part power model."""

    p_active: float = 10.65  # W, RRH + network unit awake
    p_sleep: float = 5.05    # W, RRH + network unit asleep
    p_ms: float = 0.1        # W, per-user circuit power
    p_olt: float = 20.0      # W, optical line terminal
    eps_max: float = 0.55    # peak PA efficiency, dimensionless
    p_sp: float = 10.0       # W per (Gnats/s), rate-dependent signal processing

    def __post_init__(self) -> None:
        if not (self.p_active > self.p_sleep >= 0.0):
            raise ConfigError("need p_active > p_sleep >= 0")
        if not (0.0 < self.eps_max <= 1.0):
            raise ConfigError("eps_max must lie in (0, 1]")
        if self.p_sp < 0.0 or self.p_olt < 0.0 or self.p_ms < 0.0:
            raise ConfigError("power constants must be nonnegative")

    @property
    def delta_p(self) -> float:
        """Extra watts burned by an awake RRH relative to a sleeping one."""
        return self.p_active - self.p_sleep


@dataclass
class Scenario:
    """Full problem instance minus the channel realization.

    Positions may be ``None`` on a template; :func:`generate_network` fills
    them.  All vector fields broadcast from scalars in ``__post_init__``.
    """

    B: int                      # number of RRHs
    K: int                      # number of users
    I: int                      # antennas per RRH
    P_a: float = 0.5            # W, per-antenna PA budget
    P_bar_b: np.ndarray | float | None = None   # W, per-RRH transmit budget (default I * P_a)
    C_bar_b: np.ndarray | float = 10.0          # nats/s/Hz, per-RRH fronthaul capacity
    r0: float = 1.0             # nats/s/Hz, minimum per-user rate
    sigma2_k: np.ndarray | float = 10.0 ** -14.3  # W, per-user noise power
    bandwidth_hz: float = 10e6
    power: PowerParams = field(default_factory=PowerParams)
    rrh_positions: np.ndarray | None = None     # (B, 2) meters
    user_positions: np.ndarray | None = None    # (K, 2) meters
    inter_rrh_distance_m: float = 200.0
    min_user_rrh_distance_m: float = 10.0
    shadowing_std_db: float = 8.0
    wrap_vectors: np.ndarray | None = None      # mirror translations for wrap-around layouts

    def __post_init__(self) -> None:
        if min(self.B, self.K, self.I) < 1:
            raise ConfigError("B, K, I must all be >= 1")
        if self.P_bar_b is None:
            self.P_bar_b = np.full(self.B, self.I * self.P_a)
        self.P_bar_b = np.broadcast_to(np.asarray(self.P_bar_b, dtype=float), (self.B,)).copy()
        self.C_bar_b = np.broadcast_to(np.asarray(self.C_bar_b, dtype=float), (self.B,)).copy()
        self.sigma2_k = np.broadcast_to(np.asarray(self.sigma2_k, dtype=float), (self.K,)).copy()
        if self.P_a <= 0 or self.r0 <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("P_a, r0, bandwidth must be positive")
        if np.any(self.P_bar_b <= 0) or np.any(self.C_bar_b <= 0) or np.any(self.sigma2_k <= 0):
            raise ConfigError("budgets, capacities, noise powers must be positive")
        for name in ("rrh_positions", "user_positions", "wrap_vectors"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.asarray(val, dtype=float))
        if self.rrh_positions is not None and self.rrh_positions.shape != (self.B, 2):
            raise ConfigError(f"rrh_positions must be ({self.B}, 2)")
        if self.user_positions is not None and self.user_positions.shape != (self.K, 2):
            raise ConfigError(f"user_positions must be ({self.K}, 2)")

    # -- derived constants used all over the solvers --

    @property
    def eps_tilde(self) -> float:
        """PA consumption per unit of summed beam norm: sqrt(P_a) / eps_max."""
        return math.sqrt(self.P_a) / self.power.eps_max

    @property
    def p_const(self) -> float:
        """Rate- and activity-independent power floor, watts."""
        return self.B * self.power.p_sleep + self.K * self.power.p_ms + self.power.p_olt

    @property
    def rate_power_coeff(self) -> float:
        """Watts per (nats/s/Hz) of fronthaul-carried rate: p_sp * BW / 1e9."""
        return self.power.p_sp * self.bandwidth_hz / 1e9

    def distances(self) -> np.ndarray:
        """(K, B) user-RRH distances, wrap-around aware."""
        if self.rrh_positions is None or self.user_positions is None:
            raise ConfigError("positions not generated yet")
        diff = self.user_positions[:, None, :] - self.rrh_positions[None, :, :]  # (K, B, 2)
        if self.wrap_vectors is None:
            return np.linalg.norm(diff, axis=-1)
        shifted = diff[:, :, None, :] - self.wrap_vectors[None, None, :, :]
        return np.linalg.norm(shifted, axis=-1).min(axis=2)

    # -- serialization --

    def to_json(self) -> str:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        doc = {
            "B": self.B, "K": self.K, "I": self.I,
            "P_a": self.P_a,
            "P_bar_b": arr(self.P_bar_b),
            "C_bar_b": arr(self.C_bar_b),
            "r0": self.r0,
            "sigma2_k": arr(self.sigma2_k),
            "bandwidth_hz": self.bandwidth_hz,
            "power": vars(self.power).copy(),
            "rrh_positions": arr(self.rrh_positions),
            "user_positions": arr(self.user_positions),
            "inter_rrh_distance_m": self.inter_rrh_distance_m,
            "min_user_rrh_distance_m": self.min_user_rrh_distance_m,
            "shadowing_std_db": self.shadowing_std_db,
            "wrap_vectors": arr(self.wrap_vectors),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        doc = json.loads(text)
        doc["power"] = PowerParams(**doc["power"])
        for name in ("P_bar_b", "C_bar_b", "sigma2_k", "rrh_positions", "user_positions", "wrap_vectors"):
            if doc.get(name) is not None:
                doc[name] = np.asarray(doc[name], dtype=float)
        return cls(**doc)


@dataclass
class ChannelMatrix:
    """One flat-fading realization.

    ``h`` has K rows; row k concatenates the I-entry blocks toward each RRH,
    so columns [b*I, (b+1)*I) hold the channel from RRH b to user k.
    ``large_scale`` keeps the realized per-pair variance (linear scale) for
    statistics checks and heuristics.
    """

    h: np.ndarray                 # complex, (K, B*I)
    large_scale: np.ndarray       # (K, B), linear path gain per pair

    def __post_init__(self) -> None:
        self.h = np.asarray(self.h, dtype=complex)
        self.large_scale = np.asarray(self.large_scale, dtype=float)
        if not np.all(np.isfinite(self.h.view(float))):
            raise ConfigError("channel entries must be finite")

    def block(self, k: int, b: int, I: int) -> np.ndarray:
        return self.h[k, b * I:(b + 1) * I]

    def save(self, path: str) -> None:
        np.savez(path, h_re=self.h.real, h_im=self.h.imag, large_scale=self.large_scale)

    @classmethod
    def load(cls, path: str) -> "ChannelMatrix":
        d = np.load(path)
        return cls(h=d["h_re"] + 1j * d["h_im"], large_scale=d["large_scale"])

    def dump_csv(self, path: str) -> None:
        K, M = self.h.shape
        cols = [f"{p}_{m}" for m in range(M) for p in ("re", "im")]
        inter = np.empty((K, 2 * M))
        inter[:, 0::2] = self.h.real
        inter[:, 1::2] = self.h.imag
        np.savetxt(path, inter, delimiter=",", header=",".join(cols), comments="")


def _grid_positions(B: int, spacing: float) -> np.ndarray:
    cols = math.ceil(math.sqrt(B))
    pos = [(spacing * (i % cols), spacing * (i // cols)) for i in range(B)]
    return np.asarray(pos, dtype=float)


def _hex7_positions(spacing: float) -> tuple[np.ndarray, np.ndarray]:
    center = np.zeros((1, 2))
    ring = np.array([[spacing * math.cos(a), spacing * math.sin(a)]
                     for a in np.arange(6) * math.pi / 3.0])
    # Mirror translations of the 7-cell cluster: |2*a1 + a2| = sqrt(7) * spacing,
    # rotated through the six sextants, plus the identity shift.
    a1 = np.array([spacing, 0.0])
    a2 = np.array([spacing / 2.0, spacing * math.sqrt(3.0) / 2.0])
    base = 2.0 * a1 + a2
    wraps = [np.zeros(2)]
    for sextant in range(6):
        ang = sextant * math.pi / 3.0
        rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        wraps.append(rot @ base)
    return np.vstack([center, ring]), np.asarray(wraps)


def generate_network(config: Scenario, layout: str, seed: int) -> Scenario:
    """Place RRHs on the requested lattice and drop users uniformly.

    Users land on a disc of radius ``inter_rrh_distance_m`` around the RRH
    centroid, re-drawn until at least ``min_user_rrh_distance_m`` from every
    RRH.  Deterministic for a fixed seed.
    """
    if layout not in _LAYOUTS:
        raise ConfigError(f"unknown layout {layout!r}, expected one of {_LAYOUTS}")
    spacing = config.inter_rrh_distance_m
    wrap = None
    if layout == GRID:
        rrh = _grid_positions(config.B, spacing)
    elif layout == HEX7:
        if config.B != 7:
            raise ConfigError("hex7_wraparound layout requires B = 7")
        rrh, wrap = _hex7_positions(spacing)
    else:
        if config.rrh_positions is None:
            raise ConfigError("explicit layout requires rrh_positions on the template")
        rrh = np.asarray(config.rrh_positions, dtype=float)
        wrap = config.wrap_vectors

    rng = np.random.default_rng(seed)
    if layout == EXPLICIT and config.user_positions is not None:
        users = np.asarray(config.user_positions, dtype=float)
    else:
        centroid = rrh.mean(axis=0)
        users = np.empty((config.K, 2))
        for k in range(config.K):
            while True:
                radius = spacing * math.sqrt(rng.uniform())
                angle = rng.uniform(0.0, 2.0 * math.pi)
                cand = centroid + radius * np.array([math.cos(angle), math.sin(angle)])
                if np.linalg.norm(rrh - cand, axis=1).min() >= config.min_user_rrh_distance_m:
                    users[k] = cand
                    break
    return replace(config, rrh_positions=rrh, user_positions=users, wrap_vectors=wrap)


def generate_channels(scenario: Scenario, seed: int) -> ChannelMatrix:
    """Draw one channel realization.

    Path loss in dB is ``30 log10(d) + 38`` plus N(0, shadowing_std_db^2);
    each I-entry block is then i.i.d. circular complex Gaussian with per-entry
    variance equal to the linear path gain.
    """
    dist = scenario.distances()
    if np.any(dist <= 0.0):
        raise ConfigError("coincident RRH and user positions (zero distance)")
    rng = np.random.default_rng(seed)
    K, B, I = scenario.K, scenario.B, scenario.I
    loss_db = 30.0 * np.log10(dist) + 38.0 + rng.normal(0.0, scenario.shadowing_std_db, size=(K, B))
    rho = 10.0 ** (-loss_db / 10.0)
    reim = rng.standard_normal((K, B, I, 2))
    blocks = np.sqrt(rho / 2.0)[:, :, None] * (reim[..., 0] + 1j * reim[..., 1])
    return ChannelMatrix(h=blocks.reshape(K, B * I), large_scale=rho)
