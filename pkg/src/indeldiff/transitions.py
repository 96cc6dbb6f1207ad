"""Row-stochastic category-transition matrices, base and augmented.

The base single-step matrix mixes the identity with a rank-one jump to the
marginal distribution.  The augmented space appends the absorbing ``DEL``
state and the transient ``DEL*`` state; four building blocks cover it:

* ``A*``: identity on proper types, ``DEL`` and ``DEL*`` rows -> ``DEL``.
* ``B*``: marginal jump on proper types, reserved rows -> ``DEL``.
* ``C*``: every proper row -> ``DEL*``, reserved rows -> ``DEL``.
* ``D*``: every row -> ``DEL``.

Inside the augmented mixtures the deletion schedule enters as the per-step
conditional survival ``zeta(t)/zeta(t-1)``, so that simulating the chain one
step at a time reproduces edit times distributed as ``zeta_prime``.  The
cumulative closed form then telescopes to plain survival ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from indeldiff.schedules import (
    ScheduleSet,
    alpha_bar_ratio,
    alpha_bar_ratio_or_zero,
    survival_ratio,
)


class TransitionError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionMatrix:
    rows: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise TransitionError("transition matrix must be square")
        if np.any(rows < -1e-15) or np.any(rows > 1 + 1e-12):
            raise TransitionError("entries must lie in [0, 1]")
        if np.max(np.abs(rows.sum(axis=1) - 1.0)) > 1e-12:
            raise TransitionError("rows must sum to 1")

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    def __matmul__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        return TransitionMatrix(self.rows @ other.rows)


def _check_marginal(marginal: np.ndarray) -> np.ndarray:
    m = np.asarray(marginal, dtype=np.float64)
    if m.ndim != 1 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise TransitionError("marginal must be a normalized probability vector")
    return m


def build_base_Q(alpha_t: float, marginal) -> TransitionMatrix:
    """Single-step matrix over proper categories: keep with ``alpha_t``, else
    jump to the marginal."""
    m = _check_marginal(marginal)
    if not 0.0 <= alpha_t <= 1.0:
        raise TransitionError("alpha must lie in [0, 1]")
    k = m.shape[0]
    return TransitionMatrix(alpha_t * np.eye(k) + (1.0 - alpha_t) * np.ones((k, 1)) * m)


def build_base_Qbar(s: int, t: int, schedule: ScheduleSet, nu: float, marginal) -> TransitionMatrix:
    """Cumulative matrix over the window (s, t]; same form with the ratio
    ``alpha_bar(t)/alpha_bar(s)``."""
    return build_base_Q(alpha_bar_ratio(schedule, s, t, nu), marginal)


def build_augmented_blocks(marginal) -> tuple[TransitionMatrix, ...]:
    m = _check_marginal(marginal)
    k = m.shape[0]
    dim = k + 2
    d_idx, ds_idx = k, k + 1

    a_star = np.zeros((dim, dim))
    a_star[:k, :k] = np.eye(k)
    a_star[d_idx, d_idx] = 1.0
    a_star[ds_idx, d_idx] = 1.0

    b_star = np.zeros((dim, dim))
    b_star[:k, :k] = np.ones((k, 1)) * m
    b_star[d_idx, d_idx] = 1.0
    b_star[ds_idx, d_idx] = 1.0

    c_star = np.zeros((dim, dim))
    c_star[:k, ds_idx] = 1.0
    c_star[d_idx, d_idx] = 1.0
    c_star[ds_idx, d_idx] = 1.0

    d_star = np.zeros((dim, dim))
    d_star[:, d_idx] = 1.0

    return tuple(TransitionMatrix(x) for x in (a_star, b_star, c_star, d_star))


def build_Qstar(t: int, schedule: ScheduleSet, nu: float, marginal) -> TransitionMatrix:
    """Augmented single-step matrix at step ``t``.

    With probability ``zeta(t)/zeta(t-1)`` the track survives and takes a base
    step; otherwise it switches to ``DEL*``.  At the horizon the matrix
    degenerates to the pure deletion block.
    """
    if not 1 <= t <= schedule.T:
        raise TransitionError(f"timestep {t} out of range")
    a_star, b_star, c_star, _ = build_augmented_blocks(marginal)
    keep = survival_ratio(schedule, t - 1, t)
    alpha_t = alpha_bar_ratio_or_zero(schedule, t - 1, t, nu)
    rows = keep * (alpha_t * a_star.rows + (1.0 - alpha_t) * b_star.rows) + (1.0 - keep) * c_star.rows
    return TransitionMatrix(rows)


def build_Qbar_star(s: int, t: int, schedule: ScheduleSet, nu: float, marginal) -> TransitionMatrix:
    """Cumulative augmented matrix over (s, t]; identity when ``s == t``.

    Coefficients: survive the whole window (base cumulative step), survive to
    t-1 and switch exactly at t (fresh ``DEL*``), or die earlier (absorbed).
    """
    if not 0 <= s <= t <= schedule.T:
        raise TransitionError(f"bad window ({s}, {t})")
    a_star, b_star, c_star, d_star = build_augmented_blocks(marginal)
    dim = a_star.dim
    if s == t:
        return TransitionMatrix(np.eye(dim))
    zb_t = survival_ratio(schedule, s, t)
    zb_tm1 = survival_ratio(schedule, s, t - 1) if t - 1 >= s else 1.0
    fresh = zb_tm1 - zb_t  # survived to t-1, switched exactly at t
    abar = alpha_bar_ratio_or_zero(schedule, s, t, nu)
    rows = (
        zb_t * (abar * a_star.rows + (1.0 - abar) * b_star.rows)
        + fresh * c_star.rows
        + (1.0 - zb_tm1) * d_star.rows
    )
    return TransitionMatrix(rows)
