"""Time-dependent scalar schedules.

* ``alpha_bar``: cosine cumulative keep-probability tables, one per exponent.
* ``zeta_prime``: distribution over the timesteps at which insert/delete edits
  happen (normalized logistic pdf on t/T, endpoints zeroed).
* ``zeta``: its survival function, P(edit time > t).

``zeta`` is built so the identities ``zeta[t-1] - zeta[t] == zeta_prime[t]``,
``zeta[0] == 1`` and ``zeta[T] == zeta[T-1] == 0`` hold exactly in floating
point, not just to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    pass


def _cosine_alpha_bar(T: int, nu: float, offset: float) -> np.ndarray:
    t = np.arange(T + 1, dtype=np.float64)
    arg = 0.5 * np.pi * ((t / T + offset) ** nu) / (1.0 + offset)
    # clamp at the quarter period: past it the raw value would bounce back up
    raw = np.cos(np.minimum(arg, 0.5 * np.pi)) ** 2
    table = raw / raw[0]
    table[T] = 0.0
    return table


@dataclass(frozen=True)
class ScheduleSet:
    T: int
    w: float
    D: float
    nu_nodes: float
    nu_edges: float
    offset: float
    alpha_bar: dict[float, np.ndarray] = field(repr=False)
    zeta_prime: np.ndarray = field(repr=False)
    zeta: np.ndarray = field(repr=False)

    def alpha_bar_table(self, nu: float) -> np.ndarray:
        try:
            return self.alpha_bar[nu]
        except KeyError:
            raise ScheduleError(f"no alpha-bar table for exponent {nu}") from None


def build_schedules(
    T: int,
    w: float = 0.05,
    D: float | None = None,
    nu_nodes: float = 1.0,
    nu_edges: float = 1.5,
    offset: float = 0.008,
) -> ScheduleSet:
    """Precompute every schedule table for a horizon of ``T`` steps.

    ``w`` and ``D`` parametrize the logistic edit-time distribution; ``D``
    defaults to T/2.  The logistic is evaluated on normalized time t/T with
    scale ``w`` and location ``D/T``.
    """
    if T < 2:
        raise ScheduleError("need T >= 2")
    if D is None:
        D = T / 2
    if w <= 0:
        raise ScheduleError("logistic scale w must be positive")
    if not 0 < D < T:
        raise ScheduleError("logistic location D must lie strictly inside (0, T)")

    tau = np.arange(T + 1, dtype=np.float64) / T
    z = (tau - D / T) / w
    pdf = np.abs(np.exp(z) / (w * (np.exp(z) + 1.0) ** 2))
    pdf[0] = 0.0
    pdf[T] = 0.0
    if pdf.sum() <= 0:
        raise ScheduleError("edit-time distribution has no mass; widen w")

    # tail sums first, then differences, so the survival identities are exact
    tail = np.concatenate([np.cumsum(pdf[::-1])[::-1][1:], [0.0]])
    zeta = tail / tail[0]
    zeta_prime = np.concatenate([[0.0], zeta[:-1] - zeta[1:]])

    nus = {float(nu) for nu in (nu_nodes, nu_edges)}
    alpha_bar = {nu: _cosine_alpha_bar(T, nu, offset) for nu in sorted(nus)}
    return ScheduleSet(T, w, float(D), float(nu_nodes), float(nu_edges), float(offset),
                       alpha_bar, zeta_prime, zeta)


def alpha_bar_ratio(schedule: ScheduleSet, s: int, t: int, nu: float) -> float:
    """Cumulative keep probability over the window (s, t]."""
    if not 0 <= s <= t <= schedule.T:
        raise ScheduleError(f"bad window ({s}, {t}) for T={schedule.T}")
    if s == t:
        return 1.0
    table = schedule.alpha_bar_table(nu)
    denom = table[s]
    if denom == 0.0:
        raise ScheduleError("division at terminal step: alpha-bar vanished at window start")
    return float(table[t] / denom)


def alpha_bar_ratio_or_zero(schedule: ScheduleSet, s: int, t: int, nu: float) -> float:
    """Like :func:`alpha_bar_ratio` but treats an exhausted window start as a
    fully mixed track (ratio 0) instead of raising."""
    if s != t and schedule.alpha_bar_table(nu)[s] == 0.0:
        return 0.0
    return alpha_bar_ratio(schedule, s, t, nu)


def survival_ratio(schedule: ScheduleSet, s: int, t: int) -> float:
    """P(edit time > t | edit time > s); zero once survival at s is exhausted."""
    if not 0 <= s <= t <= schedule.T:
        raise ScheduleError(f"bad window ({s}, {t}) for T={schedule.T}")
    if s == t:
        return 1.0
    zs = schedule.zeta[s]
    if zs == 0.0:
        return 0.0
    return float(schedule.zeta[t] / zs)


def step_keep_probability(schedule: ScheduleSet, t: int) -> float:
    """Per-step conditional survival zeta(t)/zeta(t-1) of a deletion-marked track."""
    if not 1 <= t <= schedule.T:
        raise ScheduleError(f"timestep {t} out of range")
    return survival_ratio(schedule, t - 1, t)


def size_distribution(n0: int, n_max: int, p_min: float, p_max: float) -> np.ndarray:
    """Normalized target-size weights over n in [1, n_max], peaked at n0."""
    if not 1 <= n0 <= n_max:
        raise ScheduleError(f"data size {n0} outside [1, {n_max}]")
    if not 0 < p_min <= p_max:
        raise ScheduleError("need 0 < p_min <= p_max")
    n = np.arange(1, n_max + 1, dtype=np.float64)
    h = p_max + (p_min - p_max) / n_max * np.abs(n - n0)
    return h / h.sum()


def sample_target_size(
    n0: int, n_max: int, p_min: float, p_max: float, rng: np.random.Generator
) -> int:
    h = size_distribution(n0, n_max, p_min, p_max)
    return int(rng.choice(n_max, p=h)) + 1


def sample_edit_timesteps(k: int, schedule: ScheduleSet, rng: np.random.Generator) -> np.ndarray:
    """k independent edit times drawn from zeta_prime (support is [1, T-1])."""
    if k < 0:
        raise ScheduleError("edit count must be non-negative")
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    p = schedule.zeta_prime / schedule.zeta_prime.sum()
    return rng.choice(schedule.T + 1, size=k, p=p).astype(np.int64)
