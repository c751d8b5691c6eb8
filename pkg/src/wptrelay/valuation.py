"""Turning one sampled world into auction valuations.

A candidate's valuation is the source transmit power that exactly covers its
relaying cost: the source-to-candidate data power plus the power that must be
beamed so the candidate harvests enough to forward the data,
``v = P_si + P_i / alpha_tilde``.  The source's own valuation is its direct
transmit power, clamped at ``P_max`` when the direct link cannot carry the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LinkClass, SystemParams, path_loss_gain
from .geometry import Environment, Point, sample_points


def wpt_efficiency(h_si, params: SystemParams):
    """End-to-end harvesting efficiency ``H_si * A_r * alpha``."""
    return h_si * params.aperture_m2 * params.alpha


def harvested_power(p_wpt, alpha_tilde):
    if np.any(np.asarray(p_wpt) < 0):
        raise ValueError("WPT power must be non-negative")
    return alpha_tilde * p_wpt


def source_valuation(h_s: float, zeta: float, p_max: float) -> tuple[float, bool]:
    p_s = zeta / h_s
    return min(p_s, p_max), p_s <= p_max


@dataclass(frozen=True)
class CandidateState:
    position: Point
    h_si: float
    h_i: float
    h_i_fading: float
    alpha_tilde: float
    p_si_mw: float
    p_i_mw: float
    c_const_mw: float
    valuation_mw: float


@dataclass(frozen=True)
class TrialRealization:
    h_s: float
    p_s_mw: float
    v0_mw: float
    source_feasible: bool
    candidates: tuple[CandidateState, ...]


def candidate_valuation(h_si, h_i, zeta: float, params: SystemParams) -> dict:
    """Per-candidate powers and valuation; works elementwise on arrays."""
    p_si = zeta / h_si
    p_i = zeta / h_i
    alpha_tilde = wpt_efficiency(h_si, params)
    return {
        "p_si_mw": p_si,
        "p_i_mw": p_i,
        "alpha_tilde": alpha_tilde,
        "valuation_mw": p_si + p_i / alpha_tilde,
    }


def link_pathloss(env: Environment, params: SystemParams, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LOS path-loss gains (source-to-candidate, candidate-to-AP) for points of shape ``(..., 2)``."""
    pts = np.asarray(pts, dtype=float)
    d_c = np.hypot(pts[..., 0], pts[..., 1])
    d_sc = np.hypot(pts[..., 0] - env.source.x, pts[..., 1] - env.source.y)
    return (
        path_loss_gain(d_sc, params.pathloss, LinkClass.LOS),
        path_loss_gain(d_c, params.pathloss, LinkClass.LOS),
    )


def source_pathloss(env: Environment, params: SystemParams) -> float:
    return path_loss_gain(float(np.hypot(env.source.x, env.source.y)), params.pathloss, LinkClass.NLOS)


@dataclass
class TrialBatch:
    """Columnar form of many independent realizations with the same ``n``.

    Source fields have shape ``(trials,)``; candidate fields ``(trials, n)``.
    """

    positions: np.ndarray
    h_s: np.ndarray
    p_s: np.ndarray
    v0: np.ndarray
    source_feasible: np.ndarray
    h_si: np.ndarray
    h_i: np.ndarray
    h_i_fading: np.ndarray
    alpha_tilde: np.ndarray
    p_si: np.ndarray
    p_i: np.ndarray
    c_const: np.ndarray
    valuation: np.ndarray

    @property
    def trials(self) -> int:
        return self.v0.shape[0]

    @property
    def n(self) -> int:
        return self.valuation.shape[1]

    def realization(self, k: int) -> TrialRealization:
        cands = tuple(
            CandidateState(
                position=Point(float(self.positions[k, i, 0]), float(self.positions[k, i, 1])),
                h_si=float(self.h_si[k, i]),
                h_i=float(self.h_i[k, i]),
                h_i_fading=float(self.h_i_fading[k, i]),
                alpha_tilde=float(self.alpha_tilde[k, i]),
                p_si_mw=float(self.p_si[k, i]),
                p_i_mw=float(self.p_i[k, i]),
                c_const_mw=float(self.c_const[k, i]),
                valuation_mw=float(self.valuation[k, i]),
            )
            for i in range(self.n)
        )
        return TrialRealization(
            h_s=float(self.h_s[k]),
            p_s_mw=float(self.p_s[k]),
            v0_mw=float(self.v0[k]),
            source_feasible=bool(self.source_feasible[k]),
            candidates=cands,
        )


def realize_batch(env: Environment, params: SystemParams, n: int, trials: int, rng: np.random.Generator) -> TrialBatch:
    """Sample ``trials`` independent worlds with ``n`` candidates each.

    Draw order is fixed (positions, source fading, source-candidate fading,
    candidate-AP fading) so a seeded generator reproduces the batch exactly.
    """
    if n < 0 or trials < 0:
        raise ValueError("n and trials must be non-negative")
    zeta = params.zeta
    pts = sample_points(env, n * trials, rng).reshape(trials, n, 2)
    h_s = source_pathloss(env, params) * params.fading_nlos.sample(rng, trials)
    fade_si = params.fading_los.sample(rng, (trials, n))
    fade_i = params.fading_los.sample(rng, (trials, n))
    pl_si, pl_i = link_pathloss(env, params, pts)
    h_si = pl_si * fade_si
    h_i = pl_i * fade_i
    p_s = zeta / h_s
    vals = candidate_valuation(h_si, h_i, zeta, params)
    c_const = zeta / (pl_i * vals["alpha_tilde"])
    return TrialBatch(
        positions=pts,
        h_s=h_s,
        p_s=p_s,
        v0=np.minimum(p_s, params.p_max_mw),
        source_feasible=p_s <= params.p_max_mw,
        h_si=h_si,
        h_i=h_i,
        h_i_fading=fade_i,
        alpha_tilde=vals["alpha_tilde"],
        p_si=vals["p_si_mw"],
        p_i=vals["p_i_mw"],
        c_const=c_const,
        valuation=vals["valuation_mw"],
    )


def realize_trial(env: Environment, params: SystemParams, n: int, rng: np.random.Generator) -> TrialRealization:
    return realize_batch(env, params, n, 1, rng).realization(0)
