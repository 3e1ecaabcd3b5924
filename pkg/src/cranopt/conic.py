"""Standard-form SOCP layer: problem container, builder, solver adapter.

All optimization in this package funnels through one problem shape,

    minimize    c' z
    subject to  A_eq z = b_eq
                A_ub z <= b_ub
                lb <= z <= ub
                z[head] >= || z[tail] ||_2   for each cone (index lists)

solved by Clarabel.  The builder grows problems row by row and offers the
affine sugar (pinned auxiliaries, squared-norm epigraphs) the solver modules
lean on.  Also here: the shared power-minimization subproblem and the SOC
fragment for the concave rate lower bound, both reused by every algorithm.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

from .scenario import ChannelMatrix, Scenario

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SocpSolution:
    status: str
    primal: np.ndarray | None
    objective: float | None
    iterations: int


@dataclass
class SocpProblem:
    """Immutable standard-form program plus extraction metadata."""

    num_vars: int
    objective: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq_matrix: sp.csr_matrix
    ineq_rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cones: list[np.ndarray]
    var_map: dict[str, np.ndarray] = field(default_factory=dict)

    def dump_text(self) -> str:
        """Human-readable dump for offline cross-checking."""
        out = io.StringIO()
        out.write(f"socp num_vars={self.num_vars}\n")
        nz = np.flatnonzero(self.objective)
        out.write("minimize " + " + ".join(f"{self.objective[i]:.12g}*z{i}" for i in nz) + "\n")

        def rows(mat, rhs, op):
            mat = mat.tocoo()
            lines: dict[int, list[str]] = {}
            for r, c, v in zip(mat.row, mat.col, mat.data):
                lines.setdefault(r, []).append(f"{v:.12g}*z{c}")
            for r in range(len(rhs)):
                out.write("  " + " + ".join(lines.get(r, ["0"])) + f" {op} {rhs[r]:.12g}\n")

        out.write(f"subject to ({len(self.eq_rhs)} equalities)\n")
        rows(self.eq_matrix, self.eq_rhs, "=")
        out.write(f"and ({len(self.ineq_rhs)} inequalities)\n")
        rows(self.ineq_matrix, self.ineq_rhs, "<=")
        for i in range(self.num_vars):
            if np.isfinite(self.lower[i]) or np.isfinite(self.upper[i]):
                out.write(f"  {self.lower[i]:.12g} <= z{i} <= {self.upper[i]:.12g}\n")
        for cone in self.cones:
            tail = ", ".join(f"z{i}" for i in cone[1:])
            out.write(f"  cone: z{cone[0]} >= norm({tail})\n")
        return out.getvalue()


class SocpBuilder:
    """Incremental construction of a SocpProblem.

    Linear expressions are (terms, const) pairs with terms a {index: coef}
    dict.  Cones reference raw variable indices, so affine cone entries are
    realized through pinned auxiliary variables.
    """

    def __init__(self) -> None:
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._eq: list[tuple[dict[int, float], float]] = []
        self._ineq: list[tuple[dict[int, float], float]] = []
        self._cones: list[np.ndarray] = []
        self._obj: dict[int, float] = {}
        self._consts: dict[float, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self._lb)

    def add_var(self, lb: float = -np.inf, ub: float = np.inf) -> int:
        self._lb.append(lb)
        self._ub.append(ub)
        return len(self._lb) - 1

    def add_vars(self, n: int, lb: float = -np.inf, ub: float = np.inf) -> np.ndarray:
        return np.array([self.add_var(lb, ub) for _ in range(n)], dtype=int)

    def fix_var(self, idx: int, value: float) -> None:
        self._lb[idx] = value
        self._ub[idx] = value

    def add_eq(self, terms: dict[int, float], rhs: float) -> None:
        self._eq.append((dict(terms), rhs))

    def add_ineq(self, terms: dict[int, float], rhs: float) -> None:
        """sum(coef * z) <= rhs"""
        self._ineq.append((dict(terms), rhs))

    def add_cone(self, head: int, tail: list[int] | np.ndarray) -> None:
        self._cones.append(np.array([head, *tail], dtype=int))

    def affine_var(self, terms: dict[int, float], const: float = 0.0,
                   lb: float = -np.inf, ub: float = np.inf) -> int:
        """Fresh variable pinned to an affine expression by one equality row."""
        v = self.add_var(lb, ub)
        row = {v: -1.0}
        for i, c in terms.items():
            row[i] = row.get(i, 0.0) + c
        self.add_eq(row, -const)
        return v

    def constant_var(self, value: float) -> int:
        """Variable fixed to a constant; cached so repeats are free."""
        if value not in self._consts:
            self._consts[value] = self.add_var(value, value)
        return self._consts[value]

    def sumsq_le_affine(self, vec: list[int] | np.ndarray, terms: dict[int, float],
                        const: float = 0.0) -> None:
        """|| z[vec] ||^2 <= affine, as the cone (L+1)/2 >= ||(z[vec], (L-1)/2)||."""
        half = {i: 0.5 * c for i, c in terms.items()}
        head = self.affine_var(half, (const + 1.0) / 2.0)
        tail_aux = self.affine_var(half, (const - 1.0) / 2.0)
        self.add_cone(head, [*vec, tail_aux])

    def minimize(self, terms: dict[int, float]) -> None:
        self._obj = dict(terms)

    def build(self, var_map: dict[str, np.ndarray] | None = None) -> SocpProblem:
        n = self.num_vars

        def materialize(rows):
            data, ri, ci = [], [], []
            rhs = np.empty(len(rows))
            for r, (terms, b) in enumerate(rows):
                rhs[r] = b
                for i, c in terms.items():
                    ri.append(r)
                    ci.append(i)
                    data.append(c)
            return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n)), rhs

        eq_m, eq_b = materialize(self._eq)
        in_m, in_b = materialize(self._ineq)
        c = np.zeros(n)
        for i, v in self._obj.items():
            c[i] += v
        return SocpProblem(
            num_vars=n, objective=c,
            eq_matrix=eq_m, eq_rhs=eq_b, ineq_matrix=in_m, ineq_rhs=in_b,
            lower=np.array(self._lb), upper=np.array(self._ub),
            cones=list(self._cones), var_map=var_map or {},
        )


def _clarabel_once(problem: SocpProblem, tol: float) -> SocpSolution:
    n = problem.num_vars
    blocks: list[sp.spmatrix] = []
    rhs: list[np.ndarray] = []
    cones: list = []

    fixed = problem.lower == problem.upper
    m_eq = problem.eq_matrix.shape[0] + int(fixed.sum())
    if m_eq:
        eye = sp.identity(n, format="csr")
        blocks.append(sp.vstack([problem.eq_matrix, eye[fixed]]))
        rhs.append(np.concatenate([problem.eq_rhs, problem.lower[fixed]]))
        cones.append(clarabel.ZeroConeT(m_eq))

    lb_rows = np.flatnonzero(np.isfinite(problem.lower) & ~fixed)
    ub_rows = np.flatnonzero(np.isfinite(problem.upper) & ~fixed)
    m_in = problem.ineq_matrix.shape[0] + len(lb_rows) + len(ub_rows)
    if m_in:
        eye = sp.identity(n, format="csr")
        blocks.append(sp.vstack([problem.ineq_matrix, -eye[lb_rows], eye[ub_rows]]))
        rhs.append(np.concatenate([problem.ineq_rhs, -problem.lower[lb_rows],
                                   problem.upper[ub_rows]]))
        cones.append(clarabel.NonnegativeConeT(m_in))

    for cone in problem.cones:
        rows = sp.csr_matrix(
            (-np.ones(len(cone)), (np.arange(len(cone)), cone)), shape=(len(cone), n))
        blocks.append(rows)
        rhs.append(np.zeros(len(cone)))
        cones.append(clarabel.SecondOrderConeT(len(cone)))

    A = sp.vstack(blocks, format="csc")
    b = np.concatenate(rhs)
    P = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    solver = clarabel.DefaultSolver(P, problem.objective, A, b, cones, settings)
    res = solver.solve()

    status = str(res.status)
    if status == "Solved":
        return SocpSolution(OPTIMAL, np.asarray(res.x), float(res.obj_val), int(res.iterations))
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SocpSolution(INFEASIBLE, None, None, int(res.iterations))
    if status == "AlmostSolved":
        # Near-converged iterate; carried along so the retry logic can accept it.
        return SocpSolution(NUMERICAL_FAILURE, np.asarray(res.x), float(res.obj_val),
                            int(res.iterations))
    # Stalled or diverged (InsufficientProgress, MaxIterations, ...): the
    # iterate is uncertified in either direction and must not be trusted.
    return SocpSolution(NUMERICAL_FAILURE, None, None, int(res.iterations))


def solve(problem: SocpProblem, tol: float = 1e-8) -> SocpSolution:
    """Solve with one automatic relaxed retry on numerical trouble."""
    first = _clarabel_once(problem, tol)
    if first.status != NUMERICAL_FAILURE:
        return first
    retry = _clarabel_once(problem, max(tol, 1e-6))
    if retry.status == NUMERICAL_FAILURE and retry.primal is not None:
        # Reduced-accuracy (AlmostSolved) after the relaxed retry: accept the
        # iterate, downstream tolerances are no tighter than 1e-6.
        return SocpSolution(OPTIMAL, retry.primal, retry.objective, retry.iterations)
    return retry


# ---------------------------------------------------------------------------
# Complex-channel helpers shared by the problem builders.


def scaled_channel(scenario: Scenario, channels: ChannelMatrix) -> np.ndarray:
    """Channel rows divided by per-user noise std; SINR terms become unit-noise."""
    return channels.h / np.sqrt(scenario.sigma2_k)[:, None]


def dot_terms(h_row: np.ndarray, col_re: np.ndarray, col_im: np.ndarray,
              real_part: bool) -> dict[int, float]:
    """Linear terms of Re or Im of (h_row . w_col) over stacked re/im variables."""
    terms: dict[int, float] = {}
    hre, him = h_row.real, h_row.imag
    for m in range(len(h_row)):
        if hre[m] == 0.0 and him[m] == 0.0:
            continue
        if real_part:
            terms[col_re[m]] = terms.get(col_re[m], 0.0) + hre[m]
            terms[col_im[m]] = terms.get(col_im[m], 0.0) - him[m]
        else:
            terms[col_im[m]] = terms.get(col_im[m], 0.0) + hre[m]
            terms[col_re[m]] = terms.get(col_re[m], 0.0) + him[m]
    return terms


# ---------------------------------------------------------------------------
# Rate lower bound fragment.


@dataclass
class RateBoundFragment:
    """SOC representation of the concave lower bound on log(1 + g) at g_n.

    Adding the fragment enforces  r <= log(1 + g_n) + (g - g_n) / (1 + g),
    which minorizes log(1 + g) and touches it (value and slope) at g = g_n.
    """

    g_n: float
    log_term: float

    def bound(self, g):
        return self.log_term + (np.asarray(g, dtype=float) - self.g_n) / (1.0 + np.asarray(g, dtype=float))

    def add_to(self, builder: SocpBuilder, r_idx: int, g_idx: int) -> None:
        head = builder.affine_var({r_idx: -1.0, g_idx: 1.0}, const=self.log_term + 2.0)
        lead = builder.constant_var(2.0 * math.sqrt(1.0 + self.g_n))
        trail = builder.affine_var({r_idx: -1.0, g_idx: -1.0}, const=self.log_term)
        builder.add_cone(head, [lead, trail])


def soc_rate_lower_bound(g_n: float) -> RateBoundFragment:
    if g_n < 0.0:
        raise ValueError("expansion point must be a nonnegative SINR")
    return RateBoundFragment(g_n=float(g_n), log_term=float(np.log1p(g_n)))


# ---------------------------------------------------------------------------
# Power minimization at fixed rate targets (the feasibility workhorse).


@dataclass
class PowerMinResult:
    status: str
    w: np.ndarray | None          # complex (B*I, K)
    u: np.ndarray | None          # (B, I) per-antenna norm epigraphs
    t: np.ndarray | None          # (B,) per-RRH norm sums
    iterations: int = 0

    @property
    def t_sum(self) -> float:
        return float(self.t.sum()) if self.t is not None else math.inf


def _power_min_builder(scenario: Scenario, channels: ChannelMatrix, r_lower: np.ndarray,
                       x_upper: np.ndarray, s_lower: np.ndarray, s_upper: np.ndarray,
                       t_lower: np.ndarray | None,
                       t_cap: np.ndarray | None) -> tuple[SocpBuilder, dict[str, np.ndarray]]:
    B, K, I = scenario.B, scenario.K, scenario.I
    r_lower = np.asarray(r_lower, dtype=float)
    x_upper = np.asarray(x_upper, dtype=float)
    s_upper = np.asarray(s_upper, dtype=float)
    s_lower = np.asarray(s_lower, dtype=float)
    if np.any(r_lower < 0):
        raise ValueError("rate targets must be nonnegative")
    hs = scaled_channel(scenario, channels)

    bld = SocpBuilder()
    w_re = bld.add_vars(B * I * K).reshape(B * I, K)
    w_im = bld.add_vars(B * I * K).reshape(B * I, K)
    # Upper bound on the norm epigraph realizes the per-antenna square cap.
    u = np.array([[bld.add_var(0.0, math.sqrt(s_upper[b] * scenario.P_a))
                   for _ in range(I)] for b in range(B)], dtype=int)

    # Dead blocks: no association or sleeping RRH pins the beam to zero.
    for b in range(B):
        for k in range(K):
            if x_upper[b, k] == 0.0 or s_upper[b] == 0.0:
                for m in range(b * I, (b + 1) * I):
                    bld.fix_var(w_re[m, k], 0.0)
                    bld.fix_var(w_im[m, k], 0.0)

    # Rate targets: scaled signal real part against interference-plus-noise norm.
    for k in range(K):
        sig_terms = dot_terms(hs[k], w_re[:, k], w_im[:, k], real_part=True)
        gate = math.expm1(r_lower[k])
        if gate <= 0.0:
            bld.add_ineq({i: -c for i, c in sig_terms.items()}, 0.0)
            continue
        scale = 1.0 / math.sqrt(gate)
        head = bld.affine_var({i: c * scale for i, c in sig_terms.items()})
        tail = [bld.constant_var(1.0)]
        for j in range(K):
            if j == k:
                continue
            tail.append(bld.affine_var(dot_terms(hs[k], w_re[:, j], w_im[:, j], True)))
            tail.append(bld.affine_var(dot_terms(hs[k], w_re[:, j], w_im[:, j], False)))
        bld.add_cone(head, tail)

    for b in range(B):
        for i in range(I):
            row = b * I + i
            bld.add_cone(u[b, i], [*w_re[row], *w_im[row]])
        row_sum = {u[b, i]: 1.0 for i in range(I)}
        bld.add_ineq(row_sum, s_upper[b] * I * math.sqrt(scenario.P_a))
        if t_lower is not None and s_lower[b] * t_lower[b] > 0.0:
            bld.add_ineq({i: -c for i, c in row_sum.items()}, -s_lower[b] * t_lower[b])
        if t_cap is not None:
            bld.add_ineq(row_sum, t_cap[b])
        if s_upper[b] == 0.0:
            continue
        root = bld.constant_var(math.sqrt(scenario.P_bar_b[b]))
        block = list(range(b * I, (b + 1) * I))
        for k in range(K):
            if x_upper[b, k] > 0.0:
                bld.add_cone(root, [*w_re[block, k], *w_im[block, k]])
        all_idx = [w_re[m, k] for m in block for k in range(K)] + \
                  [w_im[m, k] for m in block for k in range(K)]
        bld.add_cone(root, all_idx)

    bld.minimize({u[b, i]: 1.0 for b in range(B) for i in range(I)})
    vm = {"w_re": w_re, "w_im": w_im, "u": u}
    return bld, vm


def build_power_min(scenario: Scenario, channels: ChannelMatrix, r_lower: np.ndarray,
                    x_upper: np.ndarray, s_lower: np.ndarray, s_upper: np.ndarray,
                    t_lower: np.ndarray | None = None) -> SocpProblem:
    """Minimum summed antenna norms subject to per-user rate targets.

    Sleeping RRHs and unassociated beams are pinned to zero; power caps are
    scaled by the binary upper bounds.  The optimum's per-RRH norm sums are
    the tightest PA-power proxy achieving ``r_lower``.
    """
    bld, vm = _power_min_builder(scenario, channels, r_lower, x_upper,
                                 s_lower, s_upper, t_lower, t_cap=None)
    return bld.build(var_map=vm)


def extract_power_min(scenario: Scenario, problem: SocpProblem, sol: SocpSolution) -> PowerMinResult:
    if sol.status != OPTIMAL:
        return PowerMinResult(status=sol.status, w=None, u=None, t=None,
                              iterations=sol.iterations)
    z = sol.primal
    w = z[problem.var_map["w_re"]] + 1j * z[problem.var_map["w_im"]]
    rows = np.linalg.norm(w, axis=1).reshape(scenario.B, scenario.I)
    return PowerMinResult(status=OPTIMAL, w=w, u=z[problem.var_map["u"]],
                          t=rows.sum(axis=1), iterations=sol.iterations)


def solve_power_min(scenario: Scenario, channels: ChannelMatrix, r_lower: np.ndarray,
                    x_upper: np.ndarray, s_lower: np.ndarray, s_upper: np.ndarray,
                    t_lower: np.ndarray | None = None, t_cap: np.ndarray | None = None,
                    tol: float = 1e-8) -> PowerMinResult:
    bld, vm = _power_min_builder(scenario, channels, r_lower, x_upper,
                                 s_lower, s_upper, t_lower, t_cap)
    problem = bld.build(var_map=vm)
    return extract_power_min(scenario, problem, solve(problem, tol))
