"""Global solver: discrete branch-reduce-and-bound over association, activity,
rates and PA-power proxies.

The search space is a box over the concatenated vector (x, s, r, t).  Binary
coordinates are branched by fixing, continuous rates by midpoint bisection;
t is never branched, its role is absorbed by the power-minimization SOCP
solved per box.  Reduction tightens boxes with cheap arithmetic membership
tests plus a bisection cut on rate lower ends; bounding solves one SOCP and
extracts a feasible incumbent from its beamformers.

Soundness conventions used throughout:
  * the summed SOCP objective lower-bounds the summed PA proxy of every
    feasible point in the box (per-RRH values are NOT individually valid
    lower bounds and are only used to evaluate candidate points);
  * a box is discarded only when no point in it can be strictly better than
    the current best objective;
  * incumbents are always full beamformer solutions re-solved at their exact
    binary pattern, never unverified extrapolations;
  * a stalled SOCP never prunes: the box falls back to arithmetic bounds.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .model import (
    Beamformers,
    InfeasibleError,
    Solution,
    achieved_rates,
    assemble_solution,
)
from .scenario import ChannelMatrix, Scenario

_POINT_TOL = 1e-9
_ZERO_NORM_FACTOR = 1e-6      # association extraction threshold, times sqrt(P_bar)


class SocpNumericalError(RuntimeError):
    """A box's power-min SOCP stalled; carries the box for attribution."""

    def __init__(self, message: str, box: "Box", solves: int = 0) -> None:
        super().__init__(message)
        self.box = box
        self.solves = solves


@dataclass
class DbrbOptions:
    rel_gap_tol: float = 1e-2
    max_iters: int = 20000
    max_boxes: int = 100000
    socp_tol: float = 1e-8
    improved_bounds: bool = True    # SOCP-backed power floor + witness incumbents
    improved_order: bool = True     # branch s, then x, then longest rate edge
    bisect_tol: float = 1e-4        # of edge length, for reduction cuts
    bisect_max_steps: int = 30
    probe_budget: int = 400         # joint-infeasibility cut rounds per mask
    pool_cap: int = 256             # deepest cuts kept per mask pool
    fixed_x: np.ndarray | None = None   # frozen association (oracle inner mode)
    fixed_s: np.ndarray | None = None
    prune_level: float = -math.inf      # objective floor known from outside


@dataclass
class TraceRow:
    iteration: int
    eta_best: float
    eta_upper: float
    boxes_live: int
    socp_solves: int


@dataclass
class Box:
    """Axis-aligned box over concatenated (x: B*K, s: B, r: K, t: B).

    Carries the scenario and per-link channel norms so membership tests are
    self-contained; all boxes of one run share those objects by reference.
    """

    lower: np.ndarray
    upper: np.ndarray
    discrete_mask: np.ndarray
    scenario: Scenario = field(repr=False)
    gain_norms: np.ndarray = field(repr=False, default=None)   # (K, B) block norms
    m_lower: np.ndarray = field(repr=False, default=None)      # per-user serving-count floor
    eta_upper: float = math.inf    # cached bound, inherited from the parent
    t_star: float = 0.0            # cached summed SOCP optimum (lower bound)
    deferred: bool = False         # pattern subproblem postponed once already

    # ---- views into the concatenated bound vectors ----
    def _bk(self) -> tuple[int, int]:
        return self.scenario.B, self.scenario.K

    @property
    def x_lower(self) -> np.ndarray:
        B, K = self._bk()
        return self.lower[:B * K].reshape(B, K)

    @property
    def x_upper(self) -> np.ndarray:
        B, K = self._bk()
        return self.upper[:B * K].reshape(B, K)

    @property
    def s_lower(self) -> np.ndarray:
        B, K = self._bk()
        return self.lower[B * K:B * K + B]

    @property
    def s_upper(self) -> np.ndarray:
        B, K = self._bk()
        return self.upper[B * K:B * K + B]

    @property
    def r_lower(self) -> np.ndarray:
        B, K = self._bk()
        return self.lower[B * K + B:B * K + B + K]

    @property
    def r_upper(self) -> np.ndarray:
        B, K = self._bk()
        return self.upper[B * K + B:B * K + B + K]

    @property
    def t_lower(self) -> np.ndarray:
        B, K = self._bk()
        return self.lower[B * K + B + K:]

    @property
    def t_upper(self) -> np.ndarray:
        B, K = self._bk()
        return self.upper[B * K + B + K:]

    def copy(self) -> "Box":
        return replace(self, lower=self.lower.copy(), upper=self.upper.copy(),
                       m_lower=self.m_lower.copy())

    def branch_widths(self) -> np.ndarray:
        """Widths over all branchable coordinates (x, s, r, t)."""
        return self.upper - self.lower

    def is_point(self, tol: float = _POINT_TOL) -> bool:
        return bool(np.all(self.branch_widths() <= tol))

    def spread(self) -> float:
        w = self.branch_widths()
        w = w[w > 1e-12]
        return float(np.prod(w)) if w.size else 0.0


@dataclass
class BoundResult:
    feasible: bool
    eta_upper: float = -math.inf
    eta_lower: float = -math.inf
    t_sum: float = 0.0
    incumbent: Solution | None = None
    socp_solves: int = 0


@dataclass
class BoundCache:
    """Shared state across bound calls of one run.

    ``socp`` memoizes power-min solves by (rates, masks); ``polished`` dedups
    incumbent patterns already line-searched; ``mask_cuts`` pools rate vectors
    proven jointly infeasible under a given (x_upper, s_upper) mask, valid for
    every box carrying exactly that mask; ``patterns`` stores the certified
    (upper bound, incumbent, resolved) of finished fixed-pattern subproblems.
    """

    socp: dict = field(default_factory=dict)
    polished: set = field(default_factory=set)
    mask_cuts: dict = field(default_factory=dict)
    probe_spent: dict = field(default_factory=dict)
    patterns: dict = field(default_factory=dict)


@dataclass
class GlobalSolution:
    solution: Solution | None
    eta_best: float
    upper_bound: float
    gap: float
    iterations: int
    boxes_explored: int
    trace: list[TraceRow]
    status: str = "optimal"      # optimal | budget_exhausted | infeasible


# ---------------------------------------------------------------------------
# Root box.


def init_root_box(scenario: Scenario, channels: ChannelMatrix) -> Box:
    """Smallest straightforward box containing every feasible design.

    Rate caps combine the best fronthaul capacity with the all-power,
    interference-free spectral efficiency (Cauchy-Schwarz on the aggregated
    channel); PA proxies cap at I*sqrt(P_a) per RRH.
    """
    B, K, I = scenario.B, scenario.K, scenario.I
    gain_cap = scenario.P_bar_b.sum() * (np.abs(channels.h) ** 2).sum(axis=1)
    r_cap = np.minimum(scenario.C_bar_b.max(), np.log1p(gain_cap / scenario.sigma2_k))
    lower = np.concatenate([
        np.zeros(B * K), np.zeros(B), np.full(K, scenario.r0), np.zeros(B),
    ])
    upper = np.concatenate([
        np.ones(B * K), np.ones(B), r_cap, np.full(B, I * math.sqrt(scenario.P_a)),
    ])
    mask = np.concatenate([
        np.ones(B * K + B, dtype=bool), np.zeros(K + B, dtype=bool),
    ])
    norms = np.sqrt((np.abs(channels.h) ** 2).reshape(K, B, I).sum(axis=2))
    return Box(lower=lower, upper=upper, discrete_mask=mask,
               scenario=scenario, gain_norms=norms, m_lower=np.ones(K))


# ---------------------------------------------------------------------------
# Branching.


def _branch_serving_set(box: Box, k: int) -> list[Box]:
    """Partition by user k's serving set at its current size floor.

    One child per admissible serving set of exactly ``max(m_lower_k, pinned)``
    RRHs (the column gets fully pinned), plus one child raising the size floor
    when more servers remain admissible.  Any association in the box serves k
    with either exactly that many RRHs (one of the pinned children) or more
    (the raised-floor child), so the children partition the box.
    """
    pinned = np.flatnonzero(box.x_lower[:, k] > 0.5)
    allowed = np.flatnonzero(box.x_upper[:, k] > 0.5)
    free = [b for b in allowed if box.x_lower[b, k] < 0.5]
    target = max(int(round(box.m_lower[k])), pinned.size, 1)
    children: list[Box] = []
    for extra in itertools.combinations(free, target - pinned.size):
        child = box.copy()
        keep = set(pinned) | set(extra)
        for b in range(box.scenario.B):
            val = 1.0 if b in keep else 0.0
            child.x_lower[b, k] = val
            child.x_upper[b, k] = val
        child.m_lower[k] = target
        children.append(child)
    if allowed.size > target:
        child = box.copy()
        child.m_lower[k] = target + 1
        children.append(child)
    return children


def branch(box: Box, improved_order: bool = True) -> list[Box]:
    """Split the box along one decision.

    Priority order: unfixed activity bits, then whole serving sets (the
    highest-rate user's association column is resolved in one shot), then the
    longest rate edge.  With ``improved_order`` off, binary single-bit splits
    on the longest edge across all branchable coordinates (binary widths
    count as 1).
    """
    B, K = box.scenario.B, box.scenario.K
    widths = box.branch_widths()
    nx, ns = B * K, B

    j = -1
    if improved_order:
        for idx in range(nx, nx + ns):          # activity bits first
            if widths[idx] > 0.5:
                j = idx
                break
        if j < 0:
            # serving sets next, highest-impact first: resolving the fastest
            # user's column moves every child's bound the most
            score, pick = -1.0, -1
            for k in range(K):
                col_free = widths[k:nx:K] > 0.5
                if col_free.any():
                    cand_score = box.r_upper[k] + 1e-3 * box.gain_norms[k].max()
                    if cand_score > score:
                        score, pick = cand_score, k
            if pick >= 0:
                return _branch_serving_set(box, pick)
        if j < 0:
            # rate against PA-proxy edges on numerator-equivalent impact: a
            # rate edge moves the sum rate one-for-one, a proxy edge moves the
            # denominator by eps_tilde and thus the bound by roughly eta
            sc = box.scenario
            eta_w = min(box.eta_upper, 1.0) if math.isfinite(box.eta_upper) else 1.0
            cont = widths[nx + ns:].copy()
            cont[K:] *= sc.eps_tilde * eta_w
            cand = int(np.argmax(cont))
            if cont[cand] > _POINT_TOL:
                j = nx + ns + cand
    else:
        cand = int(np.argmax(widths))
        if widths[cand] > (_POINT_TOL if cand >= nx + ns else 0.5):
            j = cand
    if j < 0:
        raise ValueError("box has no splittable coordinate")

    lo_child, hi_child = box.copy(), box.copy()
    if box.discrete_mask[j]:
        lo_child.upper[j] = 0.0
        hi_child.lower[j] = 1.0
    else:
        mid = 0.5 * (box.lower[j] + box.upper[j])
        lo_child.upper[j] = mid
        hi_child.lower[j] = mid
    return [lo_child, hi_child]


# ---------------------------------------------------------------------------
# Bound arithmetic shared by reduction and bounding.


def fronthaul_prune(box: Box) -> bool:
    """Keep the box only if minimum traffic fits the best-case pooled capacity."""
    capacity = float((box.s_upper * box.scenario.C_bar_b).sum())
    return float(box.r_lower.sum()) <= capacity + 1e-12


def _min_active(scenario: Scenario, rate_need: float) -> int:
    """Fewest awake RRHs whose pooled fronthaul can carry the required traffic."""
    caps = np.sort(scenario.C_bar_b)[::-1]
    carried = 0.0
    for m, c in enumerate(caps, start=1):
        carried += c
        if carried >= rate_need - 1e-12:
            return m
    return scenario.B


def _col_mult(box: Box) -> np.ndarray:
    """Per-user serving-count floor: pinned links or the branched size floor."""
    return np.maximum(np.maximum(box.x_lower.sum(axis=0), box.m_lower), 1.0)


def _active_floor(box: Box) -> float:
    need = float((_col_mult(box) * box.r_lower).sum())
    return max(1.0, float(box.s_lower.sum()), float(_min_active(box.scenario, need)))


def _power_floor(scenario: Scenario, active_count: float, rate_floor: float,
                 t_star: float) -> float:
    """Lower bound on consumed watts over a box (improved three-term form)."""
    return (scenario.eps_tilde * t_star
            + scenario.power.delta_p * active_count
            + scenario.rate_power_coeff * rate_floor
            + scenario.p_const)


def _rate_cap(box: Box) -> float:
    """Upper bound on the sum rate over the box.

    Every unit of user rate crosses one fronthaul link per serving RRH, so
    sum(m_k r_k) is capped by the carried load, itself at most each RRH's
    capacity or its candidate users' rate tops.  Users already pinned to
    several RRHs pay the extra multiplicity, charged at their rate bottoms.
    """
    sc = box.scenario
    per_rrh = np.minimum(box.s_upper * sc.C_bar_b,
                         (box.x_upper * box.r_upper[None, :]).sum(axis=1))
    charge = float(((_col_mult(box) - 1.0) * box.r_lower).sum())
    return min(float(box.r_upper.sum()), float(per_rrh.sum()) - charge)


def _rate_floor(box: Box) -> float:
    return float((_col_mult(box) * box.r_lower).sum())


def _box_eta_cap(box: Box, improved: bool = True, cuts: list | None = None) -> float:
    """Arithmetic-only upper bound (no SOCP), using the cached t_star.

    The plain variant keeps the radiated-power term (branching never touches
    t, so its SOCP stand-in stays in both arms) but drops the awake-count and
    rate-floor strengthenings along with everything cut-driven.
    """
    sc = box.scenario
    if improved:
        return _paired_eta(box, box.t_star, cuts)[0]
    floor = (sc.eps_tilde * box.t_star
             + sc.power.delta_p * float(box.s_lower.sum())
             + sc.rate_power_coeff * float((box.x_lower @ box.r_lower).sum())
             + sc.p_const)
    return float(box.r_upper.sum()) / floor


# ---------------------------------------------------------------------------
# Reduction.


def reduce(box: Box, cbo: float) -> Box | None:
    """Tighten the box without dropping any feasible point of objective >= cbo.

    Runs closure rules (linkage, coverage, fronthaul headroom, power-limited
    rate caps) to a fixpoint, interleaved with objective-based cuts: binary
    corners whose slice bound falls below cbo are snapped, and rate lower
    ends rise by bisection.  Returns None when the box empties.
    """
    sc = box.scenario
    B, K = sc.B, sc.K
    out = box.copy()
    xl, xu = out.x_lower, out.x_upper
    sl, su = out.s_lower, out.s_upper
    rl, ru = out.r_lower, out.r_upper
    c_bar = sc.C_bar_b
    # relative slack shielding points at exactly cbo from pruning
    cut_mark = cbo * (1.0 - 1e-9) if math.isfinite(cbo) else cbo

    for _ in range(12):
        changed = False

        # linkage downward: sleeping RRH serves nobody
        for b in range(B):
            if su[b] == 0.0 and xu[b].any():
                xu[b] = 0.0
                changed = True
        # association forces activity
        for b in range(B):
            if sl[b] == 0.0 and xl[b].any():
                sl[b] = 1.0
                changed = True
        if np.any(sl > su):
            return None

        # coverage: each user needs as many candidate servers as its pinned
        # serving-count floor; when the candidates just meet it, pin them all
        col_options = xu.sum(axis=0)
        need_srv = np.maximum(out.m_lower, xl.sum(axis=0)).clip(min=1.0)
        if np.any(col_options < need_srv - 1e-9):
            return None
        for k in range(K):
            if col_options[k] == need_srv[k]:
                mask = (xu[:, k] > 0.5) & (xl[:, k] < 0.5)
                if mask.any():
                    xl[mask, k] = 1.0
                    changed = True

        # awake RRH must be able to serve someone; idle-certain RRH sleeps
        for b in range(B):
            if xu[b].sum() == 0.0:
                if sl[b] == 1.0:
                    return None
                if su[b] == 1.0:
                    su[b] = 0.0
                    changed = True

        # fronthaul with pinned load
        pinned_load = (xl * rl[None, :]).sum(axis=1)
        if np.any(pinned_load > c_bar + 1e-9):
            return None
        for b in range(B):
            for k in range(K):
                if xu[b, k] == 1.0 and xl[b, k] == 0.0 and \
                        pinned_load[b] + rl[k] > c_bar[b] + 1e-9:
                    xu[b, k] = 0.0
                    changed = True

        # per-user rate cap: fronthaul headroom among candidate servers, and
        # the interference-free rate the allowed blocks' power can produce
        amp = (np.sqrt(xu * sc.P_bar_b[:, None]) * out.gain_norms.T).sum(axis=0)
        power_cap = np.log1p(amp ** 2 / sc.sigma2_k)
        for k in range(K):
            headroom = np.where(xu[:, k] > 0.0,
                                c_bar - (pinned_load - xl[:, k] * rl[k]), -math.inf)
            cap = min(float(headroom.max()), float(power_cap[k]))
            if cap < rl[k] - 1e-9:
                return None
            if cap < ru[k]:
                ru[k] = max(cap, rl[k])
                changed = True

        # pooled-capacity test, and its per-RRH corner: dropping b must still fit
        pooled = float((su * c_bar).sum())
        need = float(rl.sum())
        if need > pooled + 1e-12:
            return None
        for b in range(B):
            if su[b] == 1.0 and sl[b] == 0.0 and need > pooled - c_bar[b] + 1e-12:
                sl[b] = 1.0
                changed = True

        if not math.isfinite(cbo):
            if not changed:
                break
            continue

        # objective-based cuts share the power floor at current lower vertices
        rate_floor = _rate_floor(out)
        active = _active_floor(out)
        floor = _power_floor(sc, active, rate_floor, box.t_star)
        r_up_sum = float(ru.sum())
        per_rrh = np.minimum(su * c_bar, (xu * ru[None, :]).sum(axis=1))
        eff = float(per_rrh.sum())
        col_pin = xl.sum(axis=0)
        mult = _col_mult(out)
        charge = float(((mult - 1.0) * rl).sum())
        cap_sum = min(r_up_sum, eff - charge)
        if cap_sum / floor < cut_mark:
            return None

        # activity corners: waking RRH b costs delta_p; sleeping it forfeits
        # its carriable share of the numerator
        for b in range(B):
            if su[b] == 1.0 and sl[b] == 0.0:
                f1 = _power_floor(sc, max(active, float(sl.sum()) + 1.0),
                                  rate_floor, box.t_star)
                if cap_sum / f1 < cut_mark:
                    su[b] = 0.0
                    changed = True
                    continue
                num0 = min(r_up_sum, eff - float(per_rrh[b]) - charge)
                if num0 / floor < cut_mark:
                    sl[b] = 1.0
                    changed = True
        # association corners: adding link (b, k) pays its load share and, if
        # the user is already pinned elsewhere, a multiplicity charge; removing
        # the link drops RRH b's carriable share of that user's rate
        for b in range(B):
            for k in range(K):
                if xu[b, k] != 1.0 or xl[b, k] != 0.0:
                    continue
                # the size floor may already pre-pay this link's duplicate load
                extra = rl[k] if col_pin[k] + 1.0 > mult[k] else 0.0
                num1 = min(r_up_sum, eff - charge - extra)
                arm = rate_floor + extra
                bump = 0.0 if sl[b] == 1.0 else 1.0
                f1 = _power_floor(sc, max(active, float(sl.sum()) + bump),
                                  arm, box.t_star)
                if num1 / f1 < cut_mark:
                    xu[b, k] = 0.0
                    changed = True
                    continue
                if col_pin[k] == 0.0 and su[b] == 1.0:
                    load_b = float((xu[b] * ru).sum())
                    row0 = min(c_bar[b], load_b - ru[k])
                    num0 = min(r_up_sum, eff - float(per_rrh[b]) + row0 - charge)
                    if num0 / floor < cut_mark:
                        xl[b, k] = 1.0
                        changed = True

        # rate bottom cut: bisect away the largest provably sub-cbo bottom
        # slice {r_k <= c}; the slice keeps the box's bottom vertex, so the
        # power floor is unchanged and only the numerator varies with c
        for k in range(K):
            edge = ru[k] - rl[k]
            if edge <= _POINT_TOL:
                continue
            others_up = r_up_sum - ru[k]
            x_col = xu[:, k]
            other_load = (xu * ru[None, :]).sum(axis=1) - x_col * ru[k]

            def slice_bound(c: float) -> float:
                eff_c = float(np.minimum(su * c_bar, other_load + x_col * c).sum())
                return min(others_up + c, eff_c - charge) / floor

            if slice_bound(rl[k]) >= cut_mark:
                continue
            lo, hi = rl[k], ru[k]
            if slice_bound(hi) < cut_mark:
                return None
            for _ in range(30):
                if hi - lo <= 1e-4 * edge:
                    break
                mid = 0.5 * (lo + hi)
                if slice_bound(mid) < cut_mark:
                    lo = mid
                else:
                    hi = mid
            if lo > rl[k] + _POINT_TOL:
                rl[k] = lo
                changed = True

        if not changed:
            break

    if np.any(out.lower > out.upper + 1e-12):
        return None
    return out


# ---------------------------------------------------------------------------
# Bounding.


def extract_association(scenario: Scenario, beamformers: Beamformers) -> np.ndarray:
    """Binary association read off beamformer blocks above the noise threshold."""
    B, K, I = scenario.B, scenario.K, scenario.I
    energy = (np.abs(beamformers.w) ** 2).reshape(B, I, K).sum(axis=1)
    thresholds = (_ZERO_NORM_FACTOR ** 2) * scenario.P_bar_b[:, None]
    return (energy > thresholds).astype(float)


def _cache_key(r_lower: np.ndarray, x_upper: np.ndarray, s_upper: np.ndarray,
               t_upper: np.ndarray | None = None):
    tpart = () if t_upper is None else tuple(np.round(t_upper, 6))
    return (tuple(np.round(r_lower, 9)),
            tuple(x_upper.astype(int).ravel()), tuple(s_upper.astype(int)), tpart)


def _exact_power(scenario: Scenario, x: np.ndarray, s: np.ndarray, r: np.ndarray,
                 t: np.ndarray) -> float:
    """Vertex power evaluation without solution-consistency checks."""
    return (scenario.eps_tilde * float(t.sum())
            + scenario.power.delta_p * float(s.sum())
            + scenario.rate_power_coeff * float((x @ r).sum())
            + scenario.p_const)


def _certified_candidate(scenario: Scenario, channels: ChannelMatrix,
                         res: conic.PowerMinResult, x_hat: np.ndarray,
                         s_hat: np.ndarray, r_claim: np.ndarray) -> Solution | None:
    """Assemble a solution only if the beamformers truly deliver the claim."""
    if res.status != conic.OPTIMAL:
        return None
    bf = Beamformers(w=res.w)
    if np.any(achieved_rates(scenario, channels, bf) < r_claim - 1e-7):
        return None
    return assemble_solution(scenario, channels, bf, x_hat, s_hat, r_claim.copy())


def _polish_rates(scenario: Scenario, channels: ChannelMatrix, x_hat: np.ndarray,
                  s_hat: np.ndarray, r_base: np.ndarray,
                  tol: float) -> tuple[Solution | None, int]:
    """Line search scaling the rate profile up to the fronthaul/power limits.

    Power-min solves along tau * r_base; unimodal enough in practice for a
    golden-section pass.  Returns the best certified design found.
    """
    load = (x_hat * r_base[None, :]).sum(axis=1)
    with np.errstate(divide="ignore"):
        tau_hi = float(np.min(np.where(load > 1e-12, scenario.C_bar_b / load, np.inf)))
    tau_hi = min(max(tau_hi, 1.0), 50.0)
    solves = 0
    evals: dict[float, tuple[Solution | None, float]] = {}

    def ee_at(tau: float) -> float:
        nonlocal solves
        if tau in evals:
            return evals[tau][1]
        res = conic.solve_power_min(scenario, channels, tau * r_base, x_hat,
                                    np.zeros(scenario.B), s_hat, tol=tol)
        solves += 1
        sol = _certified_candidate(scenario, channels, res, x_hat, s_hat, tau * r_base)
        evals[tau] = (sol, sol.ee if sol else -math.inf)
        return evals[tau][1]

    lo, hi = 1.0, tau_hi
    for _ in range(8):                      # shrink to a power-feasible top
        if hi <= lo + 1e-9 or ee_at(hi) > -math.inf:
            break
        hi = lo + 0.5 * (hi - lo)
    phi = 0.5 * (math.sqrt(5.0) - 1.0)
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(10):
        if b - a < 1e-3 * (tau_hi - 1.0 + 1e-12):
            break
        if ee_at(c) >= ee_at(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    ee_at(lo)
    best = max(evals.values(), key=lambda p: p[1])
    return best[0], solves


def _seed_incumbents(scenario: Scenario, channels: ChannelMatrix, root: Box,
                     cache: BoundCache, tol: float) -> tuple[Solution | None, int]:
    """Certified designs from simple association heuristics.

    For each activity pattern, serve every user from its strongest awake RRH
    (and a two-RRH variant), polish along the uniform-rate ray, and keep the
    best.  A near-optimal pruning level from iteration zero is what lets the
    objective cuts in the reduction bite early.
    """
    B, K = scenario.B, scenario.K
    norms = root.gain_norms
    patterns: list[np.ndarray] = []
    if B <= 5:
        actives = [np.array(bits, dtype=float)
                   for bits in itertools.product((0.0, 1.0), repeat=B)][1:]
    else:
        order = np.argsort(-(norms ** 2).sum(axis=0))
        actives = []
        for m in (1, 2, 3, B):
            s = np.zeros(B)
            s[order[:m]] = 1.0
            actives.append(s)
    for s_hat in actives:
        awake = np.flatnonzero(s_hat)
        x1 = np.zeros((B, K))
        for k in range(K):
            x1[awake[np.argmax(norms[k, awake])], k] = 1.0
        patterns.append(x1)
        if awake.size >= 2:
            x2 = x1.copy()
            for k in range(K):
                x2[awake[np.argsort(-norms[k, awake])[:2]], k] = 1.0
            patterns.append(x2)
    patterns.append(np.ones((B, K)))

    solves = 0
    memo: dict[tuple, Solution | None] = {}

    def try_pattern(x_hat: np.ndarray) -> Solution | None:
        nonlocal solves
        s_hat = (x_hat.sum(axis=1) > 0.0).astype(float)
        key = (tuple(x_hat.astype(int).ravel()), tuple(s_hat.astype(int)))
        if key in memo:
            return memo[key]
        cache.polished.add(key)
        sol, extra = _polish_rates(scenario, channels, x_hat, s_hat,
                                   root.r_lower.copy(), tol)
        solves += extra
        memo[key] = sol
        return sol

    scored: list[Solution] = []
    for x_hat in patterns:
        sol = try_pattern(x_hat)
        if sol is not None:
            scored.append(sol)
    if not scored:
        return None, solves
    scored.sort(key=lambda s: -s.ee)

    # hill-climb association moves from the leading templates; greedy basins
    # are narrow, so a single start regularly strands the search at a
    # two-RRH pattern while the optimum needs mixed service multiplicity
    wide = B * K <= 16
    serving_sets = [(b,) for b in range(B)]
    serving_sets += [(a, b) for a in range(B) for b in range(a + 1, B)]
    best = scored[0]
    for start in scored[: 4 if wide else 1]:
        cur = start
        for _ in range(3):
            base = np.rint(cur.x).astype(float)
            improved = False
            for b in range(B):
                for k in range(K):
                    flipped = base.copy()
                    flipped[b, k] = 1.0 - flipped[b, k]
                    if flipped[:, k].sum() < 1.0:
                        continue
                    sol = try_pattern(flipped)
                    if sol is not None and sol.ee > cur.ee:
                        cur = sol
                        improved = True
            # per-user serving-set swaps cross the valleys single flips
            # cannot; only affordable while the enumeration stays small
            if wide:
                for k in range(K):
                    for chosen in serving_sets:
                        swapped = base.copy()
                        swapped[:, k] = 0.0
                        swapped[list(chosen), k] = 1.0
                        sol = try_pattern(swapped)
                        if sol is not None and sol.ee > cur.ee:
                            cur = sol
                            improved = True
            if not improved:
                break
        if cur.ee > best.ee:
            best = cur
    return best, solves


def _witness(scenario: Scenario, channels: ChannelMatrix, box: Box, cbo: float,
             pm: conic.PowerMinResult, cache: BoundCache,
             tol: float) -> tuple[Solution | None, float, int]:
    """Try to turn the box's SOCP beamformers into a certified feasible design.

    Returns (incumbent or None, claimed lower objective, SOCP solves spent).
    The incumbent may fall outside the box (e.g. fewer active RRHs than the
    box's pinned pattern) — any feasible design is a valid global lower bound.
    """
    r_low = box.r_lower.copy()
    if box.is_point():
        x_hat, s_hat = box.x_upper.copy(), box.s_upper.copy()
    else:
        x_hat = np.maximum(extract_association(scenario, Beamformers(pm.w)), box.x_lower)
        for k in range(scenario.K):
            if x_hat[:, k].sum() < 1.0:      # cover the user with its strongest block
                norms = (np.abs(pm.w[:, k]) ** 2).reshape(scenario.B, scenario.I).sum(axis=1)
                allowed = np.where(box.x_upper[:, k] > 0.0, norms, -1.0)
                x_hat[int(np.argmax(allowed)), k] = 1.0
        s_hat = (x_hat.sum(axis=1) > 0.0).astype(float)
    if np.any((x_hat * r_low[None, :]).sum(axis=1) > scenario.C_bar_b + 1e-9):
        fallback = float(r_low.sum()) / _exact_power(
            scenario, box.x_upper, box.s_upper, box.r_upper, box.t_upper)
        return None, fallback, 0

    solves = 0
    best: Solution | None = None
    estimate = float(r_low.sum()) / _exact_power(scenario, x_hat, s_hat, r_low, pm.t)
    if estimate > cbo:
        key = _cache_key(r_low, x_hat, s_hat)
        if key in cache.socp:
            res = cache.socp[key]
        else:
            res = conic.solve_power_min(scenario, channels, r_low, x_hat,
                                        np.zeros(scenario.B), s_hat, tol=tol)
            cache.socp[key] = res
            solves += 1
        best = _certified_candidate(scenario, channels, res, x_hat, s_hat, r_low)

    pattern = (tuple(x_hat.astype(int).ravel()), tuple(s_hat.astype(int)))
    if pattern not in cache.polished and estimate > 0.5 * max(cbo, 0.0):
        cache.polished.add(pattern)
        polished, extra = _polish_rates(scenario, channels, x_hat, s_hat, r_low, tol)
        solves += extra
        if polished is not None and (best is None or polished.ee > best.ee):
            best = polished

    eta_lower = best.ee if best is not None else estimate
    return best, eta_lower, solves


def _probe(scenario: Scenario, channels: ChannelMatrix, rates: np.ndarray, box: Box,
           cache: BoundCache, tol: float) -> tuple[conic.PowerMinResult, int]:
    """Cached power-min feasibility probe at a given rate vector.

    The probe honours the box's PA-proxy caps, so an infeasible verdict is a
    certificate for this box (and for any box with the same masks and caps at
    most as loose).
    """
    key = _cache_key(rates, box.x_upper, box.s_upper, box.t_upper)
    if key in cache.socp:
        return cache.socp[key], 0
    res = conic.solve_power_min(scenario, channels, rates, box.x_upper,
                                box.s_lower, box.s_upper, t_cap=box.t_upper,
                                tol=tol)
    cache.socp[key] = res
    return res, 1


def rate_top_cut(scenario: Scenario, channels: ChannelMatrix, box: Box, cbo: float,
                 cache: BoundCache, tol: float) -> tuple[Solution | None, int]:
    """Shrink rate upper ends by certified SOCP infeasibility (in place).

    Raising one user's rate with the rest held at the box bottom only shrinks
    the beamformer feasible set, so an infeasible probe at (r_lower with
    r_k = c) rules out every box point with r_k >= c.  A feasible probe at the
    full top corner proves no such cut exists and doubles as an incumbent
    candidate.  Stalled probes are treated as feasible (never cut on doubt).
    """
    rl, ru = box.r_lower, box.r_upper
    wide = ru - rl > 0.15
    if not wide.any() or float(ru.sum()) > _rate_cap(box) + 1.0:
        # tops already dominated by the fronthaul side: cutting them would
        # not move the numerator, so skip the probes
        return None, 0
    solves = 0
    top, extra = _probe(scenario, channels, ru, box, cache, tol)
    solves += extra
    if top.status == conic.OPTIMAL:
        cand, extra = _corner_candidate(scenario, channels, box, ru, top, cbo,
                                        cache, tol)
        return cand, solves + extra

    if top.status != conic.INFEASIBLE:
        return None, solves          # stalled corner probe: no cut on doubt

    # the top corner often fails on fronthaul alone; its scaled-back image on
    # the capacity boundary is a natural incumbent candidate
    candidate: Solution | None = None
    loads = (box.x_upper * ru[None, :]).sum(axis=1)
    carried = np.where(loads > 1e-12, scenario.C_bar_b / np.maximum(loads, 1e-12),
                       np.inf)
    tau = min(1.0, float(carried.min()))
    proj = np.maximum(ru * tau, scenario.r0)
    if np.any(proj < ru - 1e-9):
        res, extra = _probe(scenario, channels, proj, box, cache, tol)
        solves += extra
        if res.status == conic.OPTIMAL:
            candidate, extra = _corner_candidate(scenario, channels, box, proj,
                                                 res, cbo, cache, tol)
            solves += extra

    for k in range(scenario.K):
        if not wide[k]:
            continue
        probe_rates = rl.copy()
        probe_rates[k] = ru[k]
        res, extra = _probe(scenario, channels, probe_rates, box, cache, tol)
        solves += extra
        if res.status != conic.INFEASIBLE:
            continue
        lo, hi = rl[k], ru[k]
        for _ in range(5):
            if hi - lo <= max(0.05, 0.05 * (ru[k] - rl[k])):
                break
            probe_rates[k] = 0.5 * (lo + hi)
            res, extra = _probe(scenario, channels, probe_rates, box, cache, tol)
            solves += extra
            if res.status == conic.INFEASIBLE:
                hi = probe_rates[k]
            else:
                lo = probe_rates[k]
        ru[k] = hi
    return candidate, solves


def _probe_restricted(scenario: Scenario, channels: ChannelMatrix, rates: np.ndarray,
                      x_hat: np.ndarray, s_hat: np.ndarray, cache: BoundCache,
                      tol: float) -> tuple[conic.PowerMinResult, int]:
    key = _cache_key(rates, x_hat, s_hat)
    if key in cache.socp:
        return cache.socp[key], 0
    res = conic.solve_power_min(scenario, channels, rates, x_hat,
                                np.zeros(scenario.B), s_hat, tol=tol)
    cache.socp[key] = res
    return res, 1


def _corner_candidate(scenario: Scenario, channels: ChannelMatrix, box: Box,
                      rates: np.ndarray, res: conic.PowerMinResult, cbo: float,
                      cache: BoundCache, tol: float) -> tuple[Solution | None, int]:
    """Turn a feasible rate-corner solve into a certified incumbent if promising."""
    solves = 0
    x_hat = np.maximum(extract_association(scenario, Beamformers(res.w)),
                       box.x_lower)
    for k in range(scenario.K):
        if x_hat[:, k].sum() < 1.0:
            norms = (np.abs(res.w[:, k]) ** 2).reshape(
                scenario.B, scenario.I).sum(axis=1)
            allowed = np.where(box.x_upper[:, k] > 0.0, norms, -1.0)
            x_hat[int(np.argmax(allowed)), k] = 1.0
    s_hat = (x_hat.sum(axis=1) > 0.0).astype(float)
    if np.all((x_hat * rates[None, :]).sum(axis=1) <= scenario.C_bar_b + 1e-9) and \
            float(rates.sum()) / _exact_power(scenario, x_hat, s_hat, rates, res.t) > cbo:
        fixed, extra = _probe_restricted(scenario, channels, rates, x_hat, s_hat,
                                         cache, tol)
        solves += extra
        return _certified_candidate(scenario, channels, fixed, x_hat, s_hat,
                                    rates), solves
    return None, solves


def _mask_key(box: Box) -> tuple[int, int]:
    """Association/activity upper masks packed into two bit-integers."""
    xbits = 0
    for v in box.x_upper.ravel():
        xbits = (xbits << 1) | int(round(v))
    sbits = 0
    for v in box.s_upper:
        sbits = (sbits << 1) | int(round(v))
    return xbits, sbits


def _gather_cuts(cache: BoundCache, key: tuple[int, int],
                 t_upper: np.ndarray) -> list[np.ndarray]:
    """All pooled cuts valid under ``key``: pools of any superset mask apply.

    A rate vector proven unreachable with associations allowed up to some
    mask and PA proxies up to some caps stays unreachable once links are
    removed or the caps shrink, so boxes inherit every cut discovered under
    looser masks and caps.
    """
    xbits, sbits = key
    pooled: list[np.ndarray] = []
    for (px, ps), cuts in cache.mask_cuts.items():
        if (px & xbits) == xbits and (ps & sbits) == sbits:
            pooled.extend(z for z, cap in cuts
                          if np.all(t_upper <= cap + 1e-9))
    return pooled


def _staircase_vertices(box: Box, cuts: list | None) -> np.ndarray:
    """Top vertices of the rate box minus the up-cones of known-bad points.

    Each cut is a rate vector proven unreachable under the box's association
    mask; anything componentwise above it is unreachable too.  The survivor
    region is a finite union of sub-boxes tracked by their top vertices:
    shaving a vertex v against a cut z replaces it with the K caps (v with
    coordinate k lowered to z_k).  Dominated vertices are dropped; if the
    vertex list blows up the remaining cuts are ignored, which only loosens
    the bound.  Zero rows mean the cuts swallow the whole box.
    """
    rl, ru = box.r_lower, box.r_upper
    K = ru.size
    verts = ru[None, :].copy()
    pending = [z for z in cuts or () if not np.any(z > ru + 1e-12)]
    pending.sort(key=lambda z: float(z.sum()))    # deepest cones shave first
    for z in pending[:360]:
        zc = np.maximum(z, rl)
        hit = np.all(verts >= zc[None, :] - 1e-12, axis=1)
        if not hit.any():
            continue
        parents = np.repeat(verts[hit], K, axis=0)
        which = np.tile(np.arange(K), int(hit.sum()))
        parents[np.arange(parents.shape[0]), which] = zc[which]
        parents = parents[zc[which] > rl[which] + 1e-9]
        verts = np.vstack([verts[~hit], parents])
        if verts.shape[0] == 0:
            break
        order = np.argsort(-verts.sum(axis=1))
        verts = verts[order]
        # after the sort any dominator sits above its victim, so one
        # upper-triangular pass removes all dominated rows at once
        ge = np.all(verts[:, None, :] >= verts[None, :, :] - 1e-12, axis=2)
        above = np.triu(np.ones(ge.shape, dtype=bool), k=1)
        verts = verts[~np.any(ge & above, axis=0)]
        if verts.shape[0] > 320:
            break
    return verts


def _paired_eta(box: Box, t_sum: float, cuts: list | None = None
                ) -> tuple[float, np.ndarray | None]:
    """Upper bound pairing the sum rate and its power surcharge pointwise.

    Within a sub-box the objective is a linear-fractional function of the
    rates once the PA term is floored by the bottom-vertex SOCP value, and it
    is componentwise increasing whenever the fixed part of the denominator
    dominates the rate surcharge (checked, with the decoupled bound as the
    fallback).  Its maximum over {q <= v, multiplicity-weighted sum within
    the carriable fronthaul budget} is then reached by greedily raising the
    cheapest-multiplicity users.  This removes the first-order slack of
    dividing top-vertex rates by bottom-vertex power on fronthaul-saturated
    boxes.  Returns the bound and the rate point attaining it.
    """
    sc = box.scenario
    rl = box.r_lower
    m = _col_mult(box)
    af = int(round(_active_floor(box)))
    smax = int((box.s_upper > 0.5).sum())
    if af > smax:
        return -math.inf, None
    fixed = sc.eps_tilde * t_sum + sc.power.delta_p * af + sc.p_const
    coeff = sc.rate_power_coeff
    if fixed <= coeff * (float(m.max()) - 1.0) * float(box.r_upper.sum()):
        # monotonicity not guaranteed: keep the decoupled arithmetic bound
        floor = _power_floor(sc, af, _rate_floor(box), t_sum)
        return _rate_cap(box) / floor, box.r_upper.copy()
    verts = _staircase_vertices(box, cuts)
    if verts.shape[0] == 0:
        return -math.inf, None
    # carried traffic per RRH at each vertex, largest first: a design with a
    # awake RRHs can carry at most the top-a sum, and pays delta_p per RRH,
    # so maximizing over the awake-count partition stays a valid bound
    carried = np.minimum(box.s_upper * sc.C_bar_b, verts @ box.x_upper.T)
    carried = np.cumsum(np.sort(carried, axis=1)[:, ::-1], axis=1)
    floor_load = float((m * rl).sum())
    best = -math.inf
    best_q: np.ndarray | None = None
    for a in range(af, smax + 1):
        budget = carried[:, a - 1] - floor_load
        feas = budget >= -1e-9
        if not feas.any():
            continue
        q = np.tile(rl, (verts.shape[0], 1))
        run = np.maximum(budget, 0.0)
        for k in np.argsort(m):
            step = np.minimum(verts[:, k] - rl[k], run / m[k])
            q[:, k] += step
            run -= step * m[k]
        eta = q.sum(axis=1) / (fixed + sc.power.delta_p * (a - af)
                               + coeff * (q @ m))
        eta[~feas] = -math.inf
        top = int(np.argmax(eta))
        if eta[top] > best:
            best = float(eta[top])
            best_q = q[top]
    if best_q is None:
        return -math.inf, None
    return best, best_q


def _boundary_cut(scenario: Scenario, channels: ChannelMatrix, box: Box,
                  v: np.ndarray, cache: BoundCache, tol: float,
                  steps: int = 7) -> tuple[np.ndarray, int]:
    """Bisect the bottom-to-v segment for a near-minimal infeasible point.

    The caller certified v itself infeasible and the box bottom feasible, so
    the returned point is always certified infeasible (stalled probes count
    as feasible and push the cut outward, never inward).
    """
    rl = box.r_lower
    lo, hi = 0.0, 1.0
    solves = 0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        res, extra = _probe(scenario, channels, rl + mid * (v - rl), box, cache, tol)
        solves += extra
        if res.status == conic.INFEASIBLE:
            hi = mid
        else:
            lo = mid
    return rl + hi * (v - rl), solves


def joint_rate_cuts(scenario: Scenario, channels: ChannelMatrix, box: Box,
                    cbo: float, cache: BoundCache, tol: float,
                    max_new: int = 3, budget: int = 400, cap: int = 256
                    ) -> tuple[Solution | None, int]:
    """Deepen the per-mask pool of jointly infeasible rate vectors.

    Single-coordinate probes hold the other users at the box bottom and thus
    miss rate combinations that are only infeasible together.  Here the probe
    target is the point attaining the current paired bound: feasible turns it
    into an incumbent candidate sitting exactly under the bound, infeasible
    adds a segment-bisected cut to the pool shared by every box whose mask the
    probing mask covers.  Probing stops once the bound falls below the
    incumbent, and each mask gets a finite probe budget so the pools converge
    instead of chasing the rate-region boundary forever.
    """
    key = _mask_key(box)
    spent = cache.probe_spent.get(key, 0)
    cuts = cache.mask_cuts.setdefault(key, [])
    pooled = _gather_cuts(cache, key, box.t_upper)
    solves = 0
    added = 0
    candidate: Solution | None = None
    while added < max_new:
        eta_q, q = _paired_eta(box, box.t_star, pooled)
        if q is None or eta_q <= max(cbo, 0.0) or \
                float(q.sum()) <= float(box.r_lower.sum()) + 1e-6:
            break
        res, extra = _probe(scenario, channels, q, box, cache, tol)
        solves += extra
        if res.status == conic.OPTIMAL:
            candidate, extra = _corner_candidate(scenario, channels, box, q,
                                                 res, cbo, cache, tol)
            solves += extra
            break
        if res.status != conic.INFEASIBLE:
            break
        if spent >= budget:
            break
        # only cut rounds count against the budget: feasible probes repeat
        # from the SOCP memo for free and keep feeding incumbent attempts
        spent += 1
        z, extra = _boundary_cut(scenario, channels, box, q, cache, tol)
        solves += extra
        added += 1
        tcap = box.t_upper
        if any(np.all(c <= z + 1e-12) and np.all(tcap <= ccap + 1e-9)
               for c, ccap in cuts):
            continue           # an existing valid cone already covers the point
        cuts[:] = [(c, ccap) for c, ccap in cuts
                   if not (np.all(c >= z - 1e-12) and np.all(ccap <= tcap + 1e-9))]
        cuts.append((z, tcap.copy()))
        pooled.append(z)
        if len(cuts) > cap:
            # keep the deepest cuts: small vectors exclude the largest cones
            cuts.sort(key=lambda entry: float(entry[0].sum()))
            del cuts[cap:]
    cache.probe_spent[key] = spent
    return candidate, solves


def _pattern_certificate(scenario: Scenario, channels: ChannelMatrix, box: Box,
                         cbo: float, options: DbrbOptions, cache: BoundCache
                         ) -> tuple[float, Solution | None, bool, int]:
    """Fathom a box whose association is fully pinned via its own subproblem.

    With the binaries resolved only the rates remain, so the pattern's best
    objective is settled once by a fixed-pattern run over the full rate range
    and reused for every other box carrying the same pattern.  The incumbent
    level is handed down as a pruning floor: dominated patterns only have to
    certify domination, which is far cheaper than closing their own gap.
    Returns the pattern's certified upper bound, its incumbent, whether the
    subproblem finished (callers must keep branching when it did not), and
    the SOCP solves spent.
    """
    key = _mask_key(box)
    hit = cache.patterns.get(key)
    solves = 0
    # an unresolved attempt is retried once the incumbent has moved enough to
    # change the subproblem's pruning floor materially
    stale = hit is not None and not hit[2] and (
        cbo > hit[3] + 0.02 * abs(hit[3]) if math.isfinite(hit[3])
        else math.isfinite(cbo))
    if hit is None or stale:
        sub_opts = replace(
            options, fixed_x=box.x_upper.copy(), fixed_s=box.s_upper.copy(),
            max_iters=2500, prune_level=cbo)
        sub = solve(scenario, channels, sub_opts, warm_cache=cache)
        solves = sub.trace[-1].socp_solves if sub.trace else 0
        hit = (sub.upper_bound, sub.solution,
               sub.status in ("optimal", "infeasible"), cbo)
        cache.patterns[key] = hit
    return hit[0], hit[1], hit[2], solves


def bound(scenario: Scenario, channels: ChannelMatrix, box: Box, cbo: float,
          cache: BoundCache | None = None,
          options: DbrbOptions | None = None) -> BoundResult:
    """One power-min SOCP per box: feasibility, upper bound, incumbent attempt.

    The upper bound divides the box's capped sum rate by a power floor built
    from the SOCP optimum (summed), the fewest awake RRHs able to carry the
    minimum traffic, and the larger of the two rate-term lower vertices.
    Raises SocpNumericalError when the SOCP stalls (the caller may fall back
    to arithmetic-only bounds; pruning on a stalled solve is never allowed).
    """
    opts = options or DbrbOptions()
    cache = cache if cache is not None else BoundCache()
    key = _cache_key(box.r_lower, box.x_upper, box.s_upper, box.t_upper)
    solves = 0
    if key in cache.socp:
        pm = cache.socp[key]
    else:
        pm = conic.solve_power_min(scenario, channels, box.r_lower, box.x_upper,
                                   box.s_lower, box.s_upper,
                                   t_cap=box.t_upper, tol=opts.socp_tol)
        cache.socp[key] = pm
        solves = 1
    if pm.status == conic.INFEASIBLE:
        return BoundResult(feasible=False, socp_solves=solves)
    if pm.status != conic.OPTIMAL:
        raise SocpNumericalError(
            f"power-min SOCP stalled ({pm.status}) on box r_lower={box.r_lower}",
            box, solves)

    box.t_star = max(box.t_star, pm.t_sum, float(box.t_lower.sum()))
    if opts.improved_bounds:
        eta_upper = _paired_eta(box, box.t_star,
                                _gather_cuts(cache, _mask_key(box),
                                             box.t_upper))[0]
    else:
        # plain lower-vertex bound: no awake/rate strengthening, no cuts
        eta_upper = _box_eta_cap(box, improved=False)
    incumbent, eta_lower, extra = _witness(scenario, channels, box, cbo, pm,
                                           cache, opts.socp_tol)
    solves += extra

    return BoundResult(feasible=True, eta_upper=eta_upper, eta_lower=eta_lower,
                       t_sum=pm.t_sum, incumbent=incumbent, socp_solves=solves)


# ---------------------------------------------------------------------------
# Final beamformer recovery.


def recover_beamformers(scenario: Scenario, channels: ChannelMatrix, x_star: np.ndarray,
                        s_star: np.ndarray, r_star: np.ndarray, t_star: np.ndarray,
                        tol: float = 1e-8) -> Beamformers:
    """Feasibility solve at a converged tuple; binding rates come out matched.

    Raises InfeasibleError when no beamformer meets the tuple — for tuples
    produced by a converged run that indicates an internal bound bug.
    """
    res = conic.solve_power_min(scenario, channels, np.asarray(r_star, dtype=float),
                                np.asarray(x_star, dtype=float), np.zeros(scenario.B),
                                np.asarray(s_star, dtype=float),
                                t_cap=np.asarray(t_star, dtype=float) + 1e-7, tol=tol)
    if res.status != conic.OPTIMAL:
        raise InfeasibleError("no beamformer achieves the converged tuple within its power proxy")
    return Beamformers(w=res.w)


# ---------------------------------------------------------------------------
# Main loop.


def solve(scenario: Scenario, channels: ChannelMatrix,
          options: DbrbOptions | None = None,
          warm_cache: BoundCache | None = None) -> GlobalSolution:
    """Best-first branch-reduce-and-bound to a relative gap certificate.

    ``warm_cache`` shares SOCP memoization, infeasibility cuts and pattern
    certificates with an enclosing run (used by the fixed-pattern subproblems
    that fathom fully pinned boxes).
    """
    opts = options or DbrbOptions()
    root = init_root_box(scenario, channels)
    if opts.fixed_x is not None:
        fx = np.asarray(opts.fixed_x, dtype=float)
        root.x_lower[:] = fx
        root.x_upper[:] = fx
    if opts.fixed_s is not None:
        fs = np.asarray(opts.fixed_s, dtype=float)
        root.s_lower[:] = fs
        root.s_upper[:] = fs

    infeasible = GlobalSolution(solution=None, eta_best=0.0, upper_bound=0.0,
                                gap=math.inf, iterations=0, boxes_explored=0,
                                trace=[], status="infeasible")
    if np.any(root.r_upper < root.r_lower - 1e-12):
        return infeasible

    cache = warm_cache if warm_cache is not None else BoundCache()
    trace: list[TraceRow] = []
    counter = itertools.count()
    cbo = opts.prune_level
    best: Solution | None = None
    socp_total = 0
    boxes_explored = 0
    heap: list = []

    if opts.fixed_x is None and opts.fixed_s is None:
        seed, extra = _seed_incumbents(scenario, channels, root, cache,
                                       opts.socp_tol)
        socp_total += extra
        if seed is not None:
            cbo = seed.ee
            best = seed

    def admit(candidate: Box) -> None:
        nonlocal cbo, best, socp_total, boxes_explored
        parent_eta = candidate.eta_upper
        red = reduce(candidate, cbo)
        if red is None or not fronthaul_prune(red):
            return
        boxes_explored += 1
        try:
            res = bound(scenario, channels, red, cbo, cache=cache, options=opts)
        except SocpNumericalError as err:
            # Unresolved subproblem: keep the box alive on arithmetic bounds.
            socp_total += err.solves
            red.eta_upper = min(parent_eta, _box_eta_cap(red))
            if red.eta_upper > cbo and not red.is_point():
                heapq.heappush(heap, (-red.eta_upper, red.spread(), next(counter), red))
            return
        socp_total += res.socp_solves
        if not res.feasible:
            return
        if res.incumbent is not None and res.incumbent.ee > cbo:
            cbo = res.incumbent.ee
            best = res.incumbent
        red.eta_upper = min(res.eta_upper, parent_eta)
        red.t_star = max(red.t_star, res.t_sum)
        if red.eta_upper > cbo and not red.is_point():
            heapq.heappush(heap, (-red.eta_upper, red.spread(), next(counter), red))

    admit(root)
    if best is None and not heap:
        return infeasible

    iterations = 0
    status = "optimal"
    # boxes fathomed by a pattern certificate may retain mass above the
    # incumbent; their certified tops must stay inside the reported bound
    fathom_ub = -math.inf
    upper_final = max(cbo, -heap[0][0] if heap else -math.inf)
    while heap:
        neg, _, _, box = heapq.heappop(heap)
        ub = max(-neg, cbo, fathom_ub)
        upper_final = ub
        gap = (ub - cbo) / ub if ub > 0 else 0.0
        if gap <= opts.rel_gap_tol:
            break
        if iterations >= opts.max_iters:
            status = "budget_exhausted"
            break
        iterations += 1
        x_fixed = np.array_equal(box.x_lower, box.x_upper)
        if opts.improved_bounds:
            # joint infeasibility cuts first: dominated regions usually die
            # here for a handful of solves, and a feasible probe lands an
            # incumbent sitting exactly under the paired bound
            candidate, extra = joint_rate_cuts(scenario, channels, box, cbo,
                                               cache, opts.socp_tol,
                                               budget=opts.probe_budget,
                                               cap=opts.pool_cap)
            socp_total += extra
            if candidate is not None and candidate.ee > cbo:
                cbo = candidate.ee
                best = candidate
            box.eta_upper = min(box.eta_upper,
                                _box_eta_cap(box, cuts=_gather_cuts(
                                    cache, _mask_key(box))))
            if box.eta_upper <= cbo:
                trace.append(TraceRow(iteration=iterations, eta_best=cbo,
                                      eta_upper=ub, boxes_live=len(heap),
                                      socp_solves=socp_total))
                continue
            if x_fixed and opts.fixed_x is None:
                if not box.deferred and _mask_key(box) not in cache.patterns:
                    # hold the subproblem back one round: if another box lifts
                    # the incumbent meanwhile, this pattern dies for free
                    box.deferred = True
                    heapq.heappush(heap, (-box.eta_upper, box.spread(),
                                          next(counter), box))
                    trace.append(TraceRow(iteration=iterations, eta_best=cbo,
                                          eta_upper=ub, boxes_live=len(heap),
                                          socp_solves=socp_total))
                    continue
                pat_ub, pat_sol, resolved, extra = _pattern_certificate(
                    scenario, channels, box, cbo, opts, cache)
                socp_total += extra
                if pat_sol is not None and pat_sol.ee > cbo:
                    cbo = pat_sol.ee
                    best = pat_sol
                box.eta_upper = min(box.eta_upper, pat_ub)
                if resolved or box.eta_upper <= cbo:
                    if box.eta_upper > cbo:
                        fathom_ub = max(fathom_ub, box.eta_upper)
                    trace.append(TraceRow(iteration=iterations, eta_best=cbo,
                                          eta_upper=ub, boxes_live=len(heap),
                                          socp_solves=socp_total))
                    continue
        if x_fixed or not opts.improved_bounds:
            candidate, extra = rate_top_cut(scenario, channels, box, cbo,
                                            cache, opts.socp_tol)
            socp_total += extra
            if candidate is not None and candidate.ee > cbo:
                cbo = candidate.ee
                best = candidate
        box.eta_upper = min(box.eta_upper,
                            _box_eta_cap(box, improved=opts.improved_bounds,
                                         cuts=_gather_cuts(cache, _mask_key(box))))
        if box.eta_upper > cbo:
            for child in branch(box, improved_order=opts.improved_order):
                admit(child)
        trace.append(TraceRow(iteration=iterations, eta_best=cbo, eta_upper=ub,
                              boxes_live=len(heap), socp_solves=socp_total))
        if len(heap) > opts.max_boxes:
            kept = [entry for entry in heap if -entry[0] > cbo]
            heapq.heapify(kept)
            heap = kept
            if len(heap) > opts.max_boxes:
                status = "budget_exhausted"
                break
    else:
        # every box resolved: only fathomed pattern tops can exceed the incumbent
        upper_final = max(cbo, fathom_ub)

    if best is None:
        if status == "optimal":
            return replace(infeasible, iterations=iterations,
                           boxes_explored=boxes_explored, trace=trace)
        return GlobalSolution(solution=None, eta_best=0.0, upper_bound=upper_final,
                              gap=math.inf, iterations=iterations,
                              boxes_explored=boxes_explored, trace=trace, status=status)

    upper_final = max(upper_final, cbo)
    gap = (upper_final - cbo) / upper_final if upper_final > 0 else 0.0
    return GlobalSolution(solution=best, eta_best=cbo, upper_bound=upper_final,
                          gap=gap, iterations=iterations, boxes_explored=boxes_explored,
                          trace=trace, status=status)
