"""Generalized reverse posterior with activation times, and guidance mixing.

Given a track observed in category ``x_t`` at step ``t``, a predicted
distribution over its category at activation time ``s``, and the forward
kernels for the windows (s, t-1] and (s, t], the posterior over the category
at ``t - 1`` mixes the per-origin Bayes inversions:

    p(j) ~ sum_x  q(x_t | j) * q(j | x_s = x) / q(x_t | x_s = x) * p_theta(x)

Origins with zero forward probability of the observation contribute nothing;
the result is renormalized.  This module is the explicit-matrix reference
path; the closed-form batch version lives in ``_kernels``.
"""

from __future__ import annotations

import numpy as np

from indeldiff.schedules import ScheduleSet
from indeldiff.transitions import TransitionMatrix, build_base_Q, build_Qbar_star, build_Qstar
from indeldiff.schedules import alpha_bar_ratio_or_zero


class PosteriorError(ValueError):
    pass


def reverse_posterior(
    x_t: int,
    p_theta: np.ndarray,
    q_step: TransitionMatrix,
    qbar_prev: TransitionMatrix,
    qbar_curr: TransitionMatrix,
) -> np.ndarray:
    """Posterior over categories at t-1 for one track.

    ``q_step`` is the single-step kernel at t, ``qbar_prev``/``qbar_curr`` the
    cumulative kernels from the activation time to t-1 and t.  ``p_theta`` may
    cover only the leading (proper) categories; trailing entries are treated
    as zero.
    """
    dim = q_step.dim
    p = np.zeros(dim, dtype=np.float64)
    p_theta = np.asarray(p_theta, dtype=np.float64)
    if p_theta.shape[0] > dim:
        raise PosteriorError("prediction vector longer than the category space")
    if abs(p_theta.sum() - 1.0) > 1e-9 or np.any(p_theta < 0):
        raise PosteriorError("prediction must be a distribution")
    p[: p_theta.shape[0]] = p_theta

    denom = qbar_curr.rows[:, x_t]
    weights = np.divide(p, denom, out=np.zeros(dim), where=denom > 0)
    mix = weights @ qbar_prev.rows
    post = q_step.rows[:, x_t] * mix
    total = post.sum()
    if total <= 0:
        raise PosteriorError("posterior has empty support")
    return post / total


def guided_prediction(p_cond: np.ndarray, p_uncond: np.ndarray, lambda_guide: float):
    """Mix conditional and placeholder predictions, clamp at zero, renormalize.

    Returns ``(distribution, fell_back)`` where ``fell_back`` reports the
    degenerate all-clamped case (resolved in favor of the conditional input).
    """
    p_cond = np.asarray(p_cond, dtype=np.float64)
    p_uncond = np.asarray(p_uncond, dtype=np.float64)
    for v in (p_cond, p_uncond):
        if abs(v.sum() - 1.0) > 1e-9 or np.any(v < 0):
            raise PosteriorError("guidance inputs must be distributions")
    mixed = p_uncond + lambda_guide * (p_cond - p_uncond)
    mixed = np.maximum(mixed, 0.0)
    total = mixed.sum()
    if total <= 0:
        return p_cond.copy(), True
    return mixed / total, False


def base_kernels(
    schedule: ScheduleSet, marginal: np.ndarray, nu: float, s: int, t: int
) -> tuple[TransitionMatrix, TransitionMatrix, TransitionMatrix]:
    """(single-step at t, cumulative (s, t-1], cumulative (s, t]) over proper types."""
    if t < 1:
        raise PosteriorError("reverse step needs t >= 1")
    if s > t - 1:
        raise PosteriorError(f"activation time {s} is not before step {t}")
    alpha_t = alpha_bar_ratio_or_zero(schedule, t - 1, t, nu)
    q_step = build_base_Q(alpha_t, marginal)
    prev = build_base_Q(alpha_bar_ratio_or_zero(schedule, s, t - 1, nu), marginal)
    curr = build_base_Q(alpha_bar_ratio_or_zero(schedule, s, t, nu), marginal)
    return q_step, prev, curr


def augmented_kernels(
    schedule: ScheduleSet, marginal: np.ndarray, nu: float, s: int, t: int
) -> tuple[TransitionMatrix, TransitionMatrix, TransitionMatrix]:
    """Same windows over the augmented space (deletion-marked tracks)."""
    if t < 1:
        raise PosteriorError("reverse step needs t >= 1")
    if s > t - 1:
        raise PosteriorError(f"activation time {s} is not before step {t}")
    q_step = build_Qstar(t, schedule, nu, marginal)
    prev = build_Qbar_star(s, t - 1, schedule, nu, marginal)
    curr = build_Qbar_star(s, t, schedule, nu, marginal)
    return q_step, prev, curr


def node_reverse_posterior(
    schedule: ScheduleSet,
    marginal: np.ndarray,
    nu: float,
    s_hat: int,
    t: int,
    x_t: int,
    p_theta: np.ndarray,
    augmented: bool = False,
) -> np.ndarray:
    """Convenience wrapper building the kernels from the schedule."""
    build = augmented_kernels if augmented else base_kernels
    return reverse_posterior(x_t, p_theta, *build(schedule, marginal, nu, s_hat, t))


def edge_reverse_posterior(
    schedule: ScheduleSet,
    marginal: np.ndarray,
    nu: float,
    s_i: int,
    s_j: int,
    t: int,
    e_t: int,
    p_theta: np.ndarray,
    augmented: bool = False,
) -> np.ndarray:
    """Edge variant: the window opens at the later of the endpoint activations."""
    return node_reverse_posterior(
        schedule, marginal, nu, max(s_i, s_j), t, e_t, p_theta, augmented=augmented
    )
