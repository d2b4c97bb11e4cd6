"""Data model and right-hand sides of the strategic SIS game.

Agents occupy one of 2d states (j, I) or (j, S): strategy j in {0..d-1}
combined with an infected or susceptible compartment.  Vectors over states
use the fixed interleaved order (0I, 0S, 1I, 1S, ...); public file formats
label the same order 1-based (x_1I, x_1S, ...).

The module provides:
  - parameter / state / control / value containers with their invariants,
  - the population ODE right-hand side (``kinetic_rhs``): decision-driven
    migration at rate lam plus infection / recovery pressure and pairwise
    peer infection,
  - the backward right-hand side of the discounted optimal-cost equation
    (``hjb_rhs``), with the strategy minimum taken explicitly or expanded
    at a fixed control,
  - the best-response operator and the scalar stationarity certificate
    ``consistency_residual``.

All functions are pure; containers are frozen and hold read-only arrays,
so everything here is safe under unrestricted concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

#: tolerance for "the entries sum to one" on population states
SIMPLEX_TOL = 1e-12
#: absolute tie tolerance for argmin comparisons between strategies
TIE_TOL = 1e-10


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """All game constants.

    d        -- number of strategies (>= 1)
    lam      -- rate at which an agent's pending strategy decision executes
    delta    -- discount rate (>= 0; stationary value solves need > 0)
    q_plus   -- per-strategy recovery rate, I -> S
    q_minus  -- per-strategy direct-pressure infection rate, S -> I
    beta     -- beta[k, j]: rate at which one (k, I) agent pushes a (j, S)
                agent into (j, I); enters through the mean field
    w_I, w_S -- running cost per unit time in (j, I) / (j, S); w_S < w_I
                because the susceptible state is the better one
    """

    d: int
    lam: float
    delta: float
    q_plus: np.ndarray
    q_minus: np.ndarray
    beta: np.ndarray
    w_I: np.ndarray
    w_S: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "delta", float(self.delta))
        for name in ("q_plus", "q_minus", "w_I", "w_S", "beta"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        errors = self.invariant_errors()
        if errors:
            raise ValueError("; ".join(errors))

    def invariant_errors(self) -> list[str]:
        """All violated invariants, one message each (empty list if valid)."""
        errs: list[str] = []
        if self.d < 1:
            errs.append(f"d must be >= 1, got {self.d}")
            return errs
        for name in ("q_plus", "q_minus", "w_I", "w_S"):
            if getattr(self, name).shape != (self.d,):
                errs.append(f"{name} must have shape ({self.d},), got {getattr(self, name).shape}")
        if self.beta.shape != (self.d, self.d):
            errs.append(f"beta must have shape ({self.d}, {self.d}), got {self.beta.shape}")
        if errs:
            return errs
        if not self.lam > 0:
            errs.append(f"lam must be > 0, got {self.lam}")
        if not self.delta >= 0:
            errs.append(f"delta must be >= 0, got {self.delta}")
        if not np.all(self.q_plus > 0):
            errs.append("q_plus entries must be > 0")
        if not np.all(self.q_minus > 0):
            errs.append("q_minus entries must be > 0")
        if not np.all(self.beta >= 0):
            errs.append("beta entries must be >= 0")
        bad = np.nonzero(~(self.w_S < self.w_I))[0]
        if bad.size:
            js = ", ".join(str(j + 1) for j in bad)
            errs.append(
                f"w_S must be < w_I for every strategy (susceptible is the better, cheaper "
                f"state); violated at strategy {js}"
            )
        return errs

    @property
    def n_states(self) -> int:
        return 2 * self.d


@dataclass(frozen=True)
class MixedState:
    """Population distribution over the 2d states (a point on the simplex)."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        if self.x.ndim != 1 or self.x.size < 2 or self.x.size % 2:
            raise ValueError(f"state vector must have even length >= 2, got shape {self.x.shape}")
        if np.any(self.x < 0):
            raise ValueError(f"state entries must be >= 0, min is {self.x.min()}")
        total = float(self.x.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"state entries must sum to 1 within {SIMPLEX_TOL}, got {total!r}")

    @property
    def d(self) -> int:
        return self.x.size // 2

    def x_I(self, j: int) -> float:
        return float(self.x[2 * j])

    def x_S(self, j: int) -> float:
        return float(self.x[2 * j + 1])

    @property
    def infected(self) -> np.ndarray:
        """Infected fractions per strategy (view)."""
        return self.x[0::2]

    @property
    def susceptible(self) -> np.ndarray:
        return self.x[1::2]

    @classmethod
    def uniform(cls, d: int) -> "MixedState":
        return cls(np.full(2 * d, 1.0 / (2 * d)))

    @classmethod
    def point(cls, d: int, j: int, compartment: str) -> "MixedState":
        """Point mass on state (j, compartment), compartment 'I' or 'S'."""
        x = np.zeros(2 * d)
        x[2 * j + (0 if compartment == "I" else 1)] = 1.0
        return cls(x)

    @classmethod
    def project(cls, arr: np.ndarray) -> "MixedState":
        """Clip tiny negatives and renormalize (integrator node cleanup)."""
        x = np.maximum(np.asarray(arr, dtype=float), 0.0)
        return cls(x / x.sum())


@dataclass(frozen=True, eq=False)
class StationaryControl:
    """Strategy targets per state: target_I[j] / target_S[j] in {0..d-1}.

    The canonical families are ``single(d, i)`` (everyone heads to strategy
    i) and ``mixed(d, i, k)`` (infected head to i, susceptible to k != i).
    """

    target_I: np.ndarray
    target_S: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "target_I", _frozen_array(self.target_I, dtype=np.int64))
        object.__setattr__(self, "target_S", _frozen_array(self.target_S, dtype=np.int64))
        d = self.target_I.size
        if self.target_S.size != d:
            raise ValueError("target_I and target_S must have equal length")
        for name, t in (("target_I", self.target_I), ("target_S", self.target_S)):
            if t.ndim != 1 or np.any(t < 0) or np.any(t >= d):
                raise ValueError(f"{name} entries must be strategies in [0, {d})")

    @classmethod
    def single(cls, d: int, i: int) -> "StationaryControl":
        return cls(np.full(d, i), np.full(d, i))

    @classmethod
    def mixed(cls, d: int, i: int, k: int) -> "StationaryControl":
        if k == i:
            raise ValueError("mixed control requires k != i")
        return cls(np.full(d, i), np.full(d, k))

    @property
    def d(self) -> int:
        return self.target_I.size

    @property
    def is_uniform(self) -> bool:
        """True when all I-targets agree and all S-targets agree."""
        return (
            bool(np.all(self.target_I == self.target_I[0]))
            and bool(np.all(self.target_S == self.target_S[0]))
        )

    @property
    def is_single(self) -> bool:
        return self.is_uniform and self.target_I[0] == self.target_S[0]

    @property
    def is_mixed(self) -> bool:
        return self.is_uniform and self.target_I[0] != self.target_S[0]

    def as_pair(self) -> tuple[int, int]:
        """(i, k) for a uniform control: I-states target i, S-states target k."""
        if not self.is_uniform:
            raise ValueError("control is not of the uniform [i(I), k(S)] form")
        return int(self.target_I[0]), int(self.target_S[0])

    def label(self) -> str:
        """Human-readable 1-based label, e.g. 'single(1)' or 'mixed(1,2)'."""
        if self.is_single:
            return f"single({self.target_I[0] + 1})"
        if self.is_mixed:
            return f"mixed({self.target_I[0] + 1},{self.target_S[0] + 1})"
        return f"targets_I={ (self.target_I + 1).tolist() },targets_S={ (self.target_S + 1).tolist() }"

    def sort_key(self) -> tuple:
        return tuple(self.target_I.tolist()) + tuple(self.target_S.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, StationaryControl):
            return NotImplemented
        return np.array_equal(self.target_I, other.target_I) and np.array_equal(
            self.target_S, other.target_S
        )

    def __hash__(self) -> int:
        return hash(self.sort_key())


@dataclass(frozen=True)
class ValueVector:
    """Discounted optimal cost per state, same interleaved order as MixedState."""

    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", _frozen_array(self.g))
        if self.g.ndim != 1 or self.g.size < 2 or self.g.size % 2:
            raise ValueError(f"value vector must have even length >= 2, got shape {self.g.shape}")
        if not np.all(np.isfinite(self.g)):
            raise ValueError("value vector entries must be finite")

    @property
    def d(self) -> int:
        return self.g.size // 2

    def g_I(self, j: int) -> float:
        return float(self.g[2 * j])

    def g_S(self, j: int) -> float:
        return float(self.g[2 * j + 1])

    @property
    def infected_values(self) -> np.ndarray:
        return self.g[0::2]

    @property
    def susceptible_values(self) -> np.ndarray:
        return self.g[1::2]


@dataclass(frozen=True)
class TildeRates:
    """Effective infection rates q~_j = q_minus[j] + sum_k beta[k, j] x_kI."""

    q_tilde_minus: np.ndarray

    @classmethod
    def from_state(cls, p: ModelParams, x: MixedState) -> "TildeRates":
        return cls(_frozen_array(p.q_minus + p.beta.T @ x.infected))


def _check_dims(p: ModelParams, *vecs) -> None:
    for v in vecs:
        if v.d != p.d:
            raise ValueError(f"dimension mismatch: params have d={p.d}, argument has d={v.d}")


def kinetic_rhs_fn(p: ModelParams, u: StationaryControl) -> Callable[[np.ndarray], np.ndarray]:
    """Compiled-once population RHS for a fixed control, on raw arrays.

    Built from mass flows, so the components sum to zero to roundoff and a
    zero coordinate never has a negative rate (the simplex is forward
    invariant).  Agents already at their target produce no migration flow.
    """
    _check_dims(p, u)
    d = p.d
    idx = np.arange(d)
    off_I = np.nonzero(u.target_I != idx)[0]
    off_S = np.nonzero(u.target_S != idx)[0]
    to_I = u.target_I[off_I]
    to_S = u.target_S[off_S]
    lam, q_plus, q_minus, beta_T = p.lam, p.q_plus, p.q_minus, p.beta.T

    def rhs(x: np.ndarray) -> np.ndarray:
        xI = x[0::2]
        xS = x[1::2]
        infect = xS * (q_minus + beta_T @ xI)  # jS -> jI flow
        recover = xI * q_plus                  # jI -> jS flow
        dI = infect - recover
        dS = recover - infect
        if off_I.size:
            flow = lam * xI[off_I]
            dI[off_I] -= flow
            np.add.at(dI, to_I, flow)
        if off_S.size:
            flow = lam * xS[off_S]
            dS[off_S] -= flow
            np.add.at(dS, to_S, flow)
        out = np.empty_like(x)
        out[0::2] = dI
        out[1::2] = dS
        return out

    return rhs


def kinetic_rhs(p: ModelParams, x: MixedState, u: StationaryControl) -> np.ndarray:
    """Rate of change of the population state under common control u."""
    _check_dims(p, x, u)
    return kinetic_rhs_fn(p, u)(x.x)


def _hjb_rhs_arr(
    p: ModelParams,
    xI: np.ndarray,
    g: np.ndarray,
    u: StationaryControl | None,
) -> np.ndarray:
    """Backward-time value RHS dg/dtau (tau = time to horizon) on raw arrays.

    With u=None the strategy minimum is evaluated explicitly; otherwise the
    minimum is expanded at the fixed targets of u.
    """
    gI = g[0::2]
    gS = g[1::2]
    if u is None:
        min_I = gI.min() - gI
        min_S = gS.min() - gS
    else:
        min_I = gI[u.target_I] - gI
        min_S = gS[u.target_S] - gS
    pressure = p.q_minus + p.beta.T @ xI  # effective infection rate per strategy
    rI = p.lam * min_I + p.q_plus * (gS - gI) + p.w_I - p.delta * gI
    rS = p.lam * min_S + pressure * (gI - gS) + p.w_S - p.delta * gS
    out = np.empty_like(g)
    out[0::2] = rI
    out[1::2] = rS
    return out


def hjb_rhs(p: ModelParams, x: MixedState, g: ValueVector) -> np.ndarray:
    """Backward-time RHS of the discounted value equation, explicit minimum.

    Returns dg/dtau with tau the time to the horizon; a stationary value
    vector therefore gives the zero vector.
    """
    _check_dims(p, x, g)
    return _hjb_rhs_arr(p, x.infected, g.g, None)


def hjb_rhs_fixed(
    p: ModelParams, x: MixedState, g: ValueVector, u: StationaryControl
) -> np.ndarray:
    """Backward-time value RHS with the minimum expanded at the control u."""
    _check_dims(p, x, g, u)
    return _hjb_rhs_arr(p, x.infected, g.g, u)


def best_response(g: ValueVector, tie_tol: float = TIE_TOL) -> tuple[StationaryControl, bool]:
    """Argmin control for a value vector, plus a degeneracy flag.

    The minimizing strategy is the same from every current state, so the
    result is always of the uniform [i(I), k(S)] form.  The flag is True
    when some non-minimal strategy is within tie_tol of the minimum in
    either compartment (tied argmin, control not unique).
    """
    gI = g.infected_values
    gS = g.susceptible_values
    i = int(np.argmin(gI))
    k = int(np.argmin(gS))
    degenerate = False
    for best, vals in ((i, gI), (k, gS)):
        others = np.delete(vals, best)
        if others.size and others.min() - vals[best] <= tie_tol:
            degenerate = True
    d = g.d
    return StationaryControl(np.full(d, i), np.full(d, k)), degenerate


def best_response_gap(g: ValueVector, u: StationaryControl) -> float:
    """How far u is from picking the argmin: max over states of
    g(chosen target) - min(g over strategies), per compartment.  Zero iff
    u selects a minimizing strategy everywhere (ties allowed)."""
    gI = g.infected_values
    gS = g.susceptible_values
    gap_I = gI[u.target_I] - gI.min()
    gap_S = gS[u.target_S] - gS.min()
    return float(max(gap_I.max(), gap_S.max()))


def consistency_residual(
    p: ModelParams, x: MixedState, g: ValueVector, u: StationaryControl
) -> float:
    """Stationary equilibrium certificate.

    Max of three sup-norms: the population RHS at (x, u), the stationary
    value-equation defect at (x, g), and the best-response gap of u against
    g.  Zero exactly at a stationary solution of the coupled system whose
    common control is individually optimal.
    """
    _check_dims(p, x, g, u)
    kin = float(np.max(np.abs(kinetic_rhs(p, x, u))))
    hjb = float(np.max(np.abs(hjb_rhs(p, x, g))))
    br = best_response_gap(g, u)
    return max(kin, hjb, br)
