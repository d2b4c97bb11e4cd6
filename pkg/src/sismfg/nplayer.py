"""Exact-jump simulation of the N-player Markov game.

The continuous-time chain moves one agent at a time through four channel
kinds per strategy j:

  decision   (j,C) -> (target, C) at rate lam per agent, only when the
             control's target differs from j (agents already at their
             target generate no event),
  pressure   (j,S) -> (j,I) at rate q_minus[j] per agent,
  recovery   (j,I) -> (j,S) at rate q_plus[j] per agent,
  peer       (j,S) -> (j,I) at rate sum_k beta[k,j] n_kI / N per agent.

The 1/N normalization of the peer channel makes the expected drift of n/N
equal the population ODE right-hand side exactly, at every count state,
which is the defining link to the mean-field limit (checked by tests).

Randomness: Philox counter-based bit generators.  ``simulate_ctmc`` uses
Philox([seed]); ``lln_error`` gives replication r at population size N the
stream Philox([seed, N, r]), so every replication is independently
reproducible and replications can run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MixedState, ModelParams, StationaryControl
from .dynamics import TimeGrid, default_grid, integrate_forward

_RNG_BUFFER = 8192

KIND_DECISION = 0
KIND_PRESSURE = 1
KIND_RECOVERY = 2
KIND_PEER = 3
KIND_NAMES = ("decision", "pressure", "recovery", "peer")


@dataclass(frozen=True)
class CountVector:
    """Agent counts per state, interleaved (0I, 0S, 1I, 1S, ...)."""

    n: np.ndarray

    def __post_init__(self):
        arr = np.array(self.n, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 2 or arr.size % 2:
            raise ValueError(f"count vector must have even length >= 2, got {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("agent counts must be >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "n", arr)

    @property
    def N(self) -> int:
        return int(self.n.sum())

    @property
    def d(self) -> int:
        return self.n.size // 2

    def fractions(self) -> MixedState:
        return MixedState(self.n / self.N)

    @classmethod
    def from_fractions(cls, x: MixedState, N: int) -> "CountVector":
        """Largest-remainder rounding of x*N to integer counts summing to N.

        Ties in the remainders break by state order, so the rounding is
        deterministic.
        """
        if N < 1:
            raise ValueError("N must be >= 1")
        quota = x.x * N
        base = np.floor(quota).astype(np.int64)
        left = N - int(base.sum())
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:left]] += 1
        return cls(base)


@dataclass(frozen=True)
class JumpEvent:
    time: float
    kind: str
    from_state: int
    to_state: int


@dataclass(frozen=True)
class CtmcPath:
    """Piecewise-constant jump path: counts are constant between event times."""

    initial: CountVector
    times: np.ndarray        # (m,), strictly increasing event times
    from_state: np.ndarray   # (m,), state index the moving agent leaves
    to_state: np.ndarray     # (m,)
    kinds: np.ndarray        # (m,), int codes into KIND_NAMES
    t_end: float

    @property
    def n_events(self) -> int:
        return self.times.size

    def event(self, idx: int) -> JumpEvent:
        return JumpEvent(
            time=float(self.times[idx]),
            kind=KIND_NAMES[int(self.kinds[idx])],
            from_state=int(self.from_state[idx]),
            to_state=int(self.to_state[idx]),
        )

    def counts(self) -> np.ndarray:
        """Counts after each event; shape (m+1, 2d), row 0 is the initial state."""
        out = np.empty((self.n_events + 1, self.initial.n.size), dtype=np.int64)
        out[0] = self.initial.n
        n = self.initial.n.copy()
        for idx in range(self.n_events):
            n[self.from_state[idx]] -= 1
            n[self.to_state[idx]] += 1
            out[idx + 1] = n
        return out

    def terminal(self) -> CountVector:
        n = self.initial.n.copy()
        np.subtract.at(n, self.from_state, 1)
        np.add.at(n, self.to_state, 1)
        return CountVector(n)


def _channels(p: ModelParams, u: StationaryControl) -> list[tuple[int, int, int]]:
    """Static channel table (kind, from_state, to_state)."""
    chans: list[tuple[int, int, int]] = []
    for j in range(p.d):
        tI = int(u.target_I[j])
        if tI != j:
            chans.append((KIND_DECISION, 2 * j, 2 * tI))
        tS = int(u.target_S[j])
        if tS != j:
            chans.append((KIND_DECISION, 2 * j + 1, 2 * tS + 1))
        chans.append((KIND_PRESSURE, 2 * j + 1, 2 * j))
        chans.append((KIND_RECOVERY, 2 * j, 2 * j + 1))
        chans.append((KIND_PEER, 2 * j + 1, 2 * j))
    return chans


def _channel_rates(
    p: ModelParams, chans: list[tuple[int, int, int]], n: np.ndarray, N: int
) -> np.ndarray:
    rates = np.empty(len(chans))
    nI = n[0::2]
    peer = p.beta.T @ nI / N  # per-susceptible peer-infection rate
    for c, (kind, frm, _) in enumerate(chans):
        if kind == KIND_DECISION:
            rates[c] = p.lam * n[frm]
        elif kind == KIND_PRESSURE:
            rates[c] = p.q_minus[frm // 2] * n[frm]
        elif kind == KIND_RECOVERY:
            rates[c] = p.q_plus[frm // 2] * n[frm]
        else:
            rates[c] = peer[frm // 2] * n[frm]
    return rates


def mean_jump_drift(p: ModelParams, counts: CountVector, u: StationaryControl) -> np.ndarray:
    """Expected instantaneous drift of n/N at a count state.

    Equals kinetic_rhs at x = n/N exactly; exposed so tests can check the
    generator against the population ODE.
    """
    chans = _channels(p, u)
    rates = _channel_rates(p, chans, counts.n.astype(float), counts.N)
    drift = np.zeros(p.n_states)
    for c, (_, frm, to) in enumerate(chans):
        drift[frm] -= rates[c]
        drift[to] += rates[c]
    return drift / counts.N


class _Stream:
    """Buffered draws from a counter-based generator."""

    def __init__(self, key):
        self.rng = np.random.Generator(np.random.Philox(key))
        self._exp = self.rng.standard_exponential(_RNG_BUFFER)
        self._uni = self.rng.random(_RNG_BUFFER)
        self._i = 0

    def next_pair(self) -> tuple[float, float]:
        if self._i >= _RNG_BUFFER:
            self._exp = self.rng.standard_exponential(_RNG_BUFFER)
            self._uni = self.rng.random(_RNG_BUFFER)
            self._i = 0
        i = self._i
        self._i += 1
        return self._exp[i], self._uni[i]


def _simulate(
    p: ModelParams,
    n0: CountVector,
    u: StationaryControl,
    t_end: float,
    stream: _Stream,
    record,
) -> None:
    """Drive the jump chain, calling record(t, channel_index, counts) per event.

    Rates are recomputed from scratch after every jump (d is small) using
    plain Python floats: the loop is the hot path and scalar numpy would
    dominate the cost.  A state where every channel rate is zero is
    absorbing and ends the run.
    """
    chans = _channels(p, u)
    kinds = [c[0] for c in chans]
    frms = [c[1] for c in chans]
    tos = [c[2] for c in chans]
    strat = [f // 2 for f in frms]
    n = [float(v) for v in n0.n]
    N = float(n0.N)
    d = p.d
    lam = float(p.lam)
    qp = [float(v) for v in p.q_plus]
    qm = [float(v) for v in p.q_minus]
    # bcols[j][k] = beta[k, j]: column view so the peer sum per target is contiguous
    bcols = [[float(p.beta[k, j]) for k in range(d)] for j in range(d)]
    n_chan = len(chans)
    rates = [0.0] * n_chan
    t = 0.0
    while True:
        total = 0.0
        for c in range(n_chan):
            kind = kinds[c]
            j = strat[c]
            if kind == KIND_DECISION:
                r = lam * n[frms[c]]
            elif kind == KIND_PRESSURE:
                r = qm[j] * n[frms[c]]
            elif kind == KIND_RECOVERY:
                r = qp[j] * n[frms[c]]
            else:
                col = bcols[j]
                s = 0.0
                for k in range(d):
                    s += col[k] * n[2 * k]
                r = s / N * n[frms[c]]
            rates[c] = r
            total += r
        if total <= 0.0:
            return
        e, uni = stream.next_pair()
        t += e / total
        if t > t_end:
            return
        pick = uni * total
        acc = 0.0
        chosen = n_chan - 1
        for c in range(n_chan):
            acc += rates[c]
            if pick < acc:
                chosen = c
                break
        n[frms[chosen]] -= 1.0
        n[tos[chosen]] += 1.0
        record(t, chosen, n)


def simulate_ctmc(
    p: ModelParams,
    n0: CountVector,
    u: StationaryControl,
    t_end: float,
    seed: int,
) -> CtmcPath:
    """Exact-jump path of the N-agent chain on [0, t_end] (deterministic in seed)."""
    if n0.d != p.d:
        raise ValueError(f"dimension mismatch: params d={p.d}, counts d={n0.d}")
    if n0.N < 1:
        raise ValueError("at least one agent is required")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    chans = _channels(p, u)
    times: list[float] = []
    picks: list[int] = []

    def record(t, chosen, _n):
        times.append(t)
        picks.append(chosen)

    _simulate(p, n0, u, t_end, _Stream([seed]), record)
    picks_arr = np.asarray(picks, dtype=np.int64)
    table = np.asarray(chans, dtype=np.int64)
    if picks_arr.size:
        kinds = table[picks_arr, 0]
        frm = table[picks_arr, 1]
        to = table[picks_arr, 2]
    else:
        kinds = frm = to = np.empty(0, dtype=np.int64)
    return CtmcPath(
        initial=n0,
        times=np.asarray(times),
        from_state=frm,
        to_state=to,
        kinds=kinds,
        t_end=float(t_end),
    )


@dataclass(frozen=True)
class LlnErrorRow:
    N: int
    mean_sup_error: float
    std_error: float
    sup_errors: np.ndarray


@dataclass(frozen=True)
class LlnErrorTable:
    rows: list[LlnErrorRow]
    replications: int
    t_end: float

    def ratios(self) -> list[float]:
        """Consecutive mean-error ratios between successive N values."""
        means = [r.mean_sup_error for r in self.rows]
        return [means[m] / means[m + 1] for m in range(len(means) - 1)]


def _sup_error_one_run(
    p: ModelParams,
    u: StationaryControl,
    N: int,
    t_end: float,
    compare_times: np.ndarray,
    ode_states: np.ndarray,
    x0: MixedState,
    stream: _Stream,
) -> float:
    """Sup over compare_times of max |n(t)/N - x(t)| for one replication."""
    n0 = CountVector.from_fractions(x0, N)
    state = {"sup": 0.0, "gi": 0, "prev": [float(v) for v in n0.n]}
    n_cmp = compare_times.size
    n_states = n0.n.size
    ode_rows = ode_states.tolist()
    cmp_times = compare_times.tolist()

    def flush(upto: float, current: list) -> None:
        gi = state["gi"]
        sup = state["sup"]
        while gi < n_cmp and cmp_times[gi] < upto:
            row = ode_rows[gi]
            for q in range(n_states):
                err = current[q] / N - row[q]
                if err < 0.0:
                    err = -err
                if err > sup:
                    sup = err
            gi += 1
        state["gi"] = gi
        state["sup"] = sup

    def record(t, _chosen, n):
        flush(t, state["prev"])
        state["prev"] = list(n)

    _simulate(p, n0, u, t_end, stream, record)
    flush(float("inf"), state["prev"])
    return state["sup"]


def lln_error(
    p: ModelParams,
    u: StationaryControl,
    x0: MixedState,
    t_end: float,
    N_list: list[int],
    replications: int,
    seed: int,
    grid: TimeGrid | None = None,
    n_compare: int = 2000,
) -> LlnErrorTable:
    """Mean sup-norm distance between n(t)/N and the population ODE path.

    For each N, averages over ``replications`` independent runs (stream
    Philox([seed, N, r])); errors are expected to shrink like N^{-1/2}.
    The ODE reference is integrated once on ``grid`` (default grid if None)
    and compared at ``n_compare`` evenly spaced times.
    """
    if not N_list:
        raise ValueError("N_list must be non-empty")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if grid is None:
        grid = default_grid(p, 0.0, t_end)
    x_path = integrate_forward(p, x0, u, grid)
    times = grid.times()
    stride = max(1, times.size // n_compare)
    compare_times = times[::stride]
    ode_states = x_path[::stride]
    rows = []
    for N in N_list:
        errs = np.empty(replications)
        for r in range(replications):
            errs[r] = _sup_error_one_run(
                p, u, N, t_end, compare_times, ode_states, x0, _Stream([seed, N, r])
            )
        std_err = float(errs.std(ddof=1) / np.sqrt(replications)) if replications > 1 else 0.0
        rows.append(
            LlnErrorRow(
                N=int(N),
                mean_sup_error=float(errs.mean()),
                std_error=std_err,
                sup_errors=errs,
            )
        )
    return LlnErrorTable(rows=rows, replications=replications, t_end=float(t_end))


