"""Time-dependent solutions and the turnpike construction.

The forward population ODE and the backward discounted value equation are
integrated with fixed-step classical RK4 (default step min(0.01, 0.1/lam);
lam sets the stiffness of the backward system).  ``solve_turnpike`` builds
the time-dependent solution anchored at an all-to-i stationary solution:
with the control frozen the population decouples and integrates forward,
the values integrate backward against that path, and the run is certified
by checking at every node that the value vector stays in the cone

    g(iI) <= g(jI),  g(iS) <= g(jS),  g(jI) >= g(jS)   for all j

and that the frozen control is the actual argmin.  Inside the cone the
fixed-control and explicit-minimum evolutions coincide, which is what makes
the frozen-control solution a solution of the full consistency problem.

``gap_closed_form`` evaluates the closed-form evolution of
g(iI) - g(iS) driven by a(t) = q_plus_i + q_minus_i + delta
+ sum_k beta_ki x_kI(t), with trapezoid quadrature on the grid, organized
as a backward recursion so long horizons cannot overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    MixedState,
    ModelParams,
    StationaryControl,
    ValueVector,
    _hjb_rhs_arr,
    best_response,
    kinetic_rhs_fn,
)
from .stationary import EquilibriumSolution, fixed_point_single, hjb_single_exact

#: simplex violation that triggers step halving in the forward integrator
STEP_REJECT_TOL = 1e-6
MAX_HALVINGS = 20
#: default turnpike-window distance threshold
DEFAULT_WINDOW_EPS = 1e-3
#: fraction trimmed from each end for the mid-horizon statistics
MID_WINDOW_TRIM = 0.1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t_start, t_end] with n_steps steps (n_steps+1 nodes)."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must be > t_start")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def horizon(self) -> float:
        return self.t_end - self.t_start

    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)


def default_grid(p: ModelParams, t_start: float, t_end: float) -> TimeGrid:
    """Grid with the default step min(0.01, 0.1/lam)."""
    h = min(0.01, 0.1 / p.lam)
    return TimeGrid(t_start, t_end, max(1, int(np.ceil((t_end - t_start) / h))))


# ---------------------------------------------------------------------------
# forward integration


def _rk4_step(rhs, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _forward_node(rhs, x: np.ndarray, h: float, depth: int = 0) -> np.ndarray:
    """One grid interval, halving the substep while the state leaves the simplex."""
    y = _rk4_step(rhs, x, h)
    if y.min() > -STEP_REJECT_TOL and abs(y.sum() - 1.0) < STEP_REJECT_TOL:
        return y
    if depth >= MAX_HALVINGS:
        raise RuntimeError(
            f"forward integration left the simplex (min {y.min():.3e}) "
            f"after {MAX_HALVINGS} step halvings"
        )
    half = _forward_node(rhs, x, 0.5 * h, depth + 1)
    return _forward_node(rhs, half, 0.5 * h, depth + 1)


def integrate_forward(
    p: ModelParams, x0: MixedState, u: StationaryControl, grid: TimeGrid
) -> np.ndarray:
    """RK4 path of the population ODE; shape (n_steps+1, 2d).

    Each node is re-projected to the simplex (tiny negatives clipped, then
    renormalized); a step that leaves the simplex by more than
    STEP_REJECT_TOL is retried with halved substeps.
    """
    rhs = kinetic_rhs_fn(p, u)
    path = np.empty((grid.n_steps + 1, p.n_states))
    path[0] = x0.x
    x = x0.x.copy()
    h = grid.h
    for m in range(grid.n_steps):
        x = MixedState.project(_forward_node(rhs, x, h)).x.copy()
        path[m + 1] = x
    return path


# ---------------------------------------------------------------------------
# backward integration


@dataclass(frozen=True)
class BackwardSolution:
    """Backward value path with per-node certification flags.

    cone_ok[m]: value vector at node m lies in the invariance cone of the
    reference control's I-target.  argmin_ok[m]: the reference control is
    the (unique, within tie tolerance) best response at node m.
    """

    g_path: np.ndarray
    cone_ok: np.ndarray
    argmin_ok: np.ndarray


def cone_flags(g_path: np.ndarray, i: int) -> np.ndarray:
    """Vectorized cone check g(iI) <= g(jI), g(iS) <= g(jS), g(jI) >= g(jS)."""
    gI = g_path[:, 0::2]
    gS = g_path[:, 1::2]
    return (
        np.all(gI >= gI[:, [i]], axis=1)
        & np.all(gS >= gS[:, [i]], axis=1)
        & np.all(gI >= gS, axis=1)
    )


def argmin_flags(g_path: np.ndarray, u: StationaryControl) -> np.ndarray:
    flags = np.empty(g_path.shape[0], dtype=bool)
    for m in range(g_path.shape[0]):
        br, degenerate = best_response(ValueVector(g_path[m]))
        flags[m] = (br == u) and not degenerate
    return flags


def integrate_backward(
    p: ModelParams,
    gT: ValueVector,
    x_path: np.ndarray,
    u: StationaryControl,
    grid: TimeGrid,
    mode: str = "fixed",
) -> BackwardSolution:
    """Integrate the discounted value equation from the horizon down.

    mode='fixed' freezes the strategy minimum at u (linear evolution);
    mode='adaptive' re-evaluates the minimum at every RK stage.  The
    population path is taken on the same grid and interpolated linearly at
    stage midpoints.  In either mode u is the reference control for the
    per-node argmin flags; cone flags use its I-target.
    """
    if mode not in ("fixed", "adaptive"):
        raise ValueError(f"unknown backward mode {mode!r}")
    if x_path.shape != (grid.n_steps + 1, p.n_states):
        raise ValueError("x_path does not match the grid")
    u_eff = u if mode == "fixed" else None
    xI = x_path[:, 0::2]
    xI_mid = 0.5 * (xI[:-1] + xI[1:])
    h = grid.h
    g_path = np.empty_like(x_path)
    g = gT.g.copy()
    g_path[grid.n_steps] = g
    for m in range(grid.n_steps - 1, -1, -1):
        k1 = _hjb_rhs_arr(p, xI[m + 1], g, u_eff)
        k2 = _hjb_rhs_arr(p, xI_mid[m], g + 0.5 * h * k1, u_eff)
        k3 = _hjb_rhs_arr(p, xI_mid[m], g + 0.5 * h * k2, u_eff)
        k4 = _hjb_rhs_arr(p, xI[m], g + h * k3, u_eff)
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        g_path[m] = g
    i = int(u.target_I[0]) if u.is_uniform else int(np.argmin(g_path[-1][0::2]))
    return BackwardSolution(
        g_path=g_path, cone_ok=cone_flags(g_path, i), argmin_ok=argmin_flags(g_path, u)
    )


def integrate_value_forward(
    p: ModelParams,
    g0: ValueVector,
    x_path: np.ndarray,
    u: StationaryControl,
    grid: TimeGrid,
) -> np.ndarray:
    """Forward-time integration of the fixed-control value equation.

    Inverse of the backward sweep up to integrator error; used for
    reversibility checks on short horizons (the forward direction amplifies
    the fast modes, so long horizons are not meaningful).
    """
    xI = x_path[:, 0::2]
    xI_mid = 0.5 * (xI[:-1] + xI[1:])
    h = grid.h
    g = g0.g.copy()
    for m in range(grid.n_steps):
        k1 = -_hjb_rhs_arr(p, xI[m], g, u)
        k2 = -_hjb_rhs_arr(p, xI_mid[m], g + 0.5 * h * k1, u)
        k3 = -_hjb_rhs_arr(p, xI_mid[m], g + 0.5 * h * k2, u)
        k4 = -_hjb_rhs_arr(p, xI[m + 1], g + h * k3, u)
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return g


# ---------------------------------------------------------------------------
# closed-form gap evolution


def gap_closed_form(
    p: ModelParams, i: int, x_path: np.ndarray, gT_gap: float, grid: TimeGrid
) -> np.ndarray:
    """Closed-form g(iI) - g(iS) along a population path, per node.

    gap(t) = e^{-int_t^T a} gT_gap + (w_I_i - w_S_i) int_t^T e^{-int_t^s a} ds
    with a(s) = q_plus_i + q_minus_i + delta + sum_k beta_ki x_kI(s).
    Both integrals use trapezoid quadrature on the grid; the evaluation runs
    as a backward recursion so only order-one exponentials ever appear.
    """
    if gT_gap < 0:
        raise ValueError("terminal gap must be >= 0")
    a = p.q_plus[i] + p.q_minus[i] + p.delta + x_path[:, 0::2] @ p.beta[:, i]
    w_gap = float(p.w_I[i] - p.w_S[i])
    h = grid.h
    gap = np.empty(grid.n_steps + 1)
    gap[grid.n_steps] = gT_gap
    for m in range(grid.n_steps - 1, -1, -1):
        decay = np.exp(-0.5 * h * (a[m] + a[m + 1]))
        gap[m] = decay * gap[m + 1] + w_gap * 0.5 * h * (1.0 + decay)
    return gap


# ---------------------------------------------------------------------------
# turnpike hypotheses and construction


class TurnpikeHypothesisError(ValueError):
    """A named hypothesis of the frozen-control construction fails."""

    def __init__(self, failures: list[str]):
        self.failures = list(failures)
        super().__init__("turnpike hypotheses violated: " + "; ".join(self.failures))


@dataclass(frozen=True)
class HypothesisReport:
    """Named margins of the turnpike hypotheses (all must be > 0 / satisfied)."""

    margins: dict[str, float]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def check_turnpike_hypotheses(
    p: ModelParams, i: int, gT: ValueVector
) -> HypothesisReport:
    """Check every hypothesis of the frozen-control turnpike construction.

    Named checks, for every j != i:
      strict-consistency-I(j)/S(j): strict interaction-free stationary
        optimality conditions for strategy i;
      rate-ordering-q-plus(j)/q-minus(j): q_plus_j > q_plus_i and
        q_minus_i > q_minus_j;
      terminal-cone-*: gT has g(jI) >= g(jS) everywhere and strategy i
        minimal in both compartments;
      terminal-gap-smallness-I(j)/S(j): the terminal gap g_T(iI) - g_T(iS)
        is small enough that the cone bound propagates, using the
        conservative envelope gap <= gT_gap + (w_I_i - w_S_i)/(q_plus_i +
        q_minus_i + delta) and worst-case interaction extremes on the S side.
    """
    margins: dict[str, float] = {}
    failures: list[str] = []

    def record(name: str, margin: float, strict: bool = True) -> None:
        margins[name] = float(margin)
        if margin <= 0 if strict else margin < 0:
            failures.append(f"{name} (margin {margin:.6g})")

    w_gap = float(p.w_I[i] - p.w_S[i])
    den0 = float(p.q_plus[i] + p.q_minus[i] + p.delta)
    gT_gap = gT.g_I(i) - gT.g_S(i)
    envelope = gT_gap + w_gap / den0  # bound on g(iI) - g(iS) along the run
    for j in range(p.d):
        if j == i:
            continue
        lbl = f"({j + 1})"
        record(
            "strict-consistency-I" + lbl,
            float(p.w_I[j] - p.w_I[i]) / w_gap - float(p.q_plus[j] - p.q_plus[i]) / den0,
        )
        record(
            "strict-consistency-S" + lbl,
            float(p.w_S[j] - p.w_S[i]) / w_gap - float(p.q_minus[i] - p.q_minus[j]) / den0,
        )
        record("rate-ordering-q-plus" + lbl, float(p.q_plus[j] - p.q_plus[i]))
        record("rate-ordering-q-minus" + lbl, float(p.q_minus[i] - p.q_minus[j]))
        record(
            "terminal-gap-smallness-I" + lbl,
            float(p.w_I[j] - p.w_I[i]) - float(p.q_plus[j] - p.q_plus[i]) * envelope,
        )
        s_coeff = (
            float(p.q_minus[i] - p.q_minus[j])
            + float(p.beta[:, i].max())
            - float(p.beta[:, j].min())
        )
        record(
            "terminal-gap-smallness-S" + lbl,
            float(p.w_S[j] - p.w_S[i]) - s_coeff * envelope,
        )
        record("terminal-cone-I-min" + lbl, gT.g_I(j) - gT.g_I(i), strict=False)
        record("terminal-cone-S-min" + lbl, gT.g_S(j) - gT.g_S(i), strict=False)
    for j in range(p.d):
        record(f"terminal-cone-gap({j + 1})", gT.g_I(j) - gT.g_S(j), strict=False)
    return HypothesisReport(margins=margins, failures=failures)


@dataclass(frozen=True)
class TurnpikeStats:
    """Turnpike statistics against the stationary anchor.

    sup_x_mid / sup_g_mid are sup distances over the trimmed mid-horizon
    ``window``; entry / exit bound the first and last node within
    DEFAULT_WINDOW_EPS of the stationary pair (None when never entered).
    """

    window: tuple[float, float]
    sup_x_mid: float
    sup_g_mid: float
    entry: float | None
    exit: float | None
    inside_fraction: float
    x_star: MixedState
    g_star: ValueVector


@dataclass(frozen=True)
class TrajectorySolution:
    """A certified (or diagnosed) frozen-control time-dependent solution."""

    control: StationaryControl
    grid: TimeGrid
    x_path: np.ndarray
    g_path: np.ndarray
    cone_ok: np.ndarray
    argmin_ok: np.ndarray
    certified: bool
    first_violation_time: float | None
    stats: TurnpikeStats

    def state_at(self, m: int) -> MixedState:
        return MixedState.project(self.x_path[m])

    def values_at(self, m: int) -> ValueVector:
        return ValueVector(self.g_path[m])


def solve_turnpike(
    p: ModelParams, i: int, x0: MixedState, gT: ValueVector, grid: TimeGrid
) -> TrajectorySolution:
    """Construct and certify the frozen-control solution anchored at i.

    Raises TurnpikeHypothesisError when a named hypothesis (including the
    terminal-cone membership of gT) fails.  A cone or argmin violation along
    the integrated path is diagnostic output, not an exception: the solution
    is returned uncertified with the first violation time.
    """
    report = check_turnpike_hypotheses(p, i, gT)
    if not report.ok:
        raise TurnpikeHypothesisError(report.failures)
    u = StationaryControl.single(p.d, i)
    x_path = integrate_forward(p, x0, u, grid)
    back = integrate_backward(p, gT, x_path, u, grid, mode="fixed")
    ok = back.cone_ok & back.argmin_ok
    certified = bool(ok.all())
    first_violation = None if certified else float(grid.times()[np.argmin(ok)])

    x_star_share, x_star = fixed_point_single(p, i)
    g_star = hjb_single_exact(p, i, x_star_share)
    times = grid.times()
    lo = grid.t_start + MID_WINDOW_TRIM * grid.horizon
    hi = grid.t_end - MID_WINDOW_TRIM * grid.horizon
    mid = (times >= lo) & (times <= hi)
    sup_x = float(np.max(np.abs(x_path[mid] - x_star.x)))
    sup_g = float(np.max(np.abs(back.g_path[mid] - g_star.g)))
    dx = np.max(np.abs(x_path - x_star.x), axis=1)
    dg = np.max(np.abs(back.g_path - g_star.g), axis=1)
    inside = (dx <= DEFAULT_WINDOW_EPS) & (dg <= DEFAULT_WINDOW_EPS)
    idx = np.nonzero(inside)[0]
    stats = TurnpikeStats(
        window=(lo, hi),
        sup_x_mid=sup_x,
        sup_g_mid=sup_g,
        entry=float(times[idx[0]]) if idx.size else None,
        exit=float(times[idx[-1]]) if idx.size else None,
        inside_fraction=float(inside.mean()),
        x_star=x_star,
        g_star=g_star,
    )
    return TrajectorySolution(
        control=u,
        grid=grid,
        x_path=x_path,
        g_path=back.g_path,
        cone_ok=back.cone_ok,
        argmin_ok=back.argmin_ok,
        certified=certified,
        first_violation_time=first_violation,
        stats=stats,
    )


@dataclass(frozen=True)
class TurnpikeWindow:
    """First/last times within eps of the stationary pair, the node fraction
    spent inside, and the mid-horizon sup distances.  never_entered marks an
    empty window."""

    entry: float | None
    exit: float | None
    inside_fraction: float
    sup_x_mid: float
    sup_g_mid: float
    eps: float

    @property
    def never_entered(self) -> bool:
        return self.entry is None


def turnpike_metrics(
    sol: TrajectorySolution, eq: EquilibriumSolution, eps: float = DEFAULT_WINDOW_EPS
) -> TurnpikeWindow:
    """Entry/exit of the eps-neighbourhood of the stationary pair (x*, g*)."""
    if eq.control != sol.control:
        raise ValueError("equilibrium control does not match the trajectory control")
    times = sol.grid.times()
    dx = np.max(np.abs(sol.x_path - eq.x_star.x), axis=1)
    dg = np.max(np.abs(sol.g_path - eq.g.g), axis=1)
    lo = sol.grid.t_start + MID_WINDOW_TRIM * sol.grid.horizon
    hi = sol.grid.t_end - MID_WINDOW_TRIM * sol.grid.horizon
    mid = (times >= lo) & (times <= hi)
    sup_x = float(dx[mid].max())
    sup_g = float(dg[mid].max())
    inside = (dx <= eps) & (dg <= eps)
    if not inside.any():
        return TurnpikeWindow(entry=None, exit=None, inside_fraction=0.0,
                              sup_x_mid=sup_x, sup_g_mid=sup_g, eps=eps)
    idx = np.nonzero(inside)[0]
    return TurnpikeWindow(
        entry=float(times[idx[0]]),
        exit=float(times[idx[-1]]),
        inside_fraction=float(inside.mean()),
        sup_x_mid=sup_x,
        sup_g_mid=sup_g,
        eps=eps,
    )
