"""Relay-selection mechanisms: cooperative baseline, Vickrey and regular Myerson reverse auctions.

Index 0 is always the source; candidates are 1..n.  Every mechanism comes in a
plain scalar form operating on one :class:`AuctionInput` and a vectorised form
(``*_batch``) operating on a :class:`~wptrelay.valuation.TrialBatch`.  The two
are written independently and the tests hold them equal.

Myerson quantities are computed on the shifted valuation ``v - P_si``, whose
distribution only depends on the known constant ``C_i`` and the fading law of
the candidate-to-AP link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import FadingModel, Lognormal, Rayleigh, mills_ratio
from .valuation import TrialBatch, TrialRealization

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200
BRACKET_FLOOR = 1e-30


class NotRegularError(ValueError):
    """The fading law does not give a monotone virtual valuation."""


class BisectionError(RuntimeError):
    pass


def _require_regular(model: FadingModel):
    if not isinstance(model, (Lognormal, Rayleigh)):
        raise NotRegularError(
            f"{type(model).__name__} fading does not give a regular reverse auction; "
            "the Myerson mechanism needs lognormal or Rayleigh fading"
        )


# Virtual valuations in shifted space ---------------------------------------


def virtual_valuation(v_tilde, c_const, model: FadingModel):
    """Reverse virtual valuation ``v + F(v)/f(v)`` of the shifted valuation ``v = C / H_f``."""
    _require_regular(model)
    v = np.asarray(v_tilde, dtype=float)
    c = np.asarray(c_const, dtype=float)
    if isinstance(model, Rayleigh):
        out = v + model.mean_power * v * v / c
    else:
        s = model.sigma
        with np.errstate(divide="ignore"):
            u = np.log(v / c) / s
        # F/f = v * s * Phi(u)/phi(u), and Phi(u)/phi(u) is the Mills ratio at -u
        out = v + v * s * mills_ratio(-u)
    return float(out) if out.ndim == 0 else out


def shifted_cdf(v_tilde, c_const, model: FadingModel):
    """CDF of ``C / H_f`` at ``v_tilde``."""
    v = np.asarray(v_tilde, dtype=float)
    return 1.0 - model.cdf(c_const / v)


def shifted_pdf(v_tilde, c_const, model: FadingModel):
    v = np.asarray(v_tilde, dtype=float)
    return model.pdf(c_const / v) * c_const / (v * v)


def virtual_valuation_numeric(v_tilde, c_const, model: FadingModel):
    """Same transform evaluated straight from the shifted CDF and PDF (no closed form)."""
    return np.asarray(v_tilde, dtype=float) + shifted_cdf(v_tilde, c_const, model) / shifted_pdf(v_tilde, c_const, model)


def virtual_slope(v_tilde, c_const, model: FadingModel):
    """Analytic derivative of the shifted virtual valuation."""
    _require_regular(model)
    v = np.asarray(v_tilde, dtype=float)
    if isinstance(model, Rayleigh):
        return 1.0 + 2.0 * model.mean_power * v / c_const
    s = model.sigma
    u = np.log(v / c_const) / s
    return 2.0 + mills_ratio(-u) * (s + u)


def _rayleigh_inverse(target, c_const, model: Rayleigh):
    # positive root of (m/C) v^2 + v - t = 0, written without cancellation
    t = np.asarray(target, dtype=float)
    return 2.0 * t / (1.0 + np.sqrt(1.0 + 4.0 * model.mean_power * t / c_const))


def _bisect_inverse(target, c_const, model: FadingModel):
    t = np.asarray(target, dtype=float)
    c = np.broadcast_to(np.asarray(c_const, dtype=float), t.shape)
    lo = BRACKET_FLOOR * c
    hi = t.copy()
    if np.any(virtual_valuation(lo, c, model) > t):
        raise BisectionError("target below the bracket floor; cannot bracket the inverse")
    # virtual(v) >= v so the root is at most the target itself
    for _ in range(BISECT_MAX_ITER):
        if np.all(hi <= lo * (1.0 + BISECT_TOL)):
            break
        mid = np.sqrt(lo * hi)
        above = virtual_valuation(mid, c, model) > t
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    else:
        raise BisectionError(f"bisection did not converge in {BISECT_MAX_ITER} iterations")
    return np.sqrt(lo * hi)


def inverse_virtual_valuation(target, c_const, model: FadingModel, method: str = "auto"):
    """The shifted valuation whose virtual valuation equals ``target``.

    ``method`` is ``"auto"`` (closed form for Rayleigh, bisection otherwise),
    ``"closed"`` or ``"bisect"``.
    """
    _require_regular(model)
    t = np.asarray(target, dtype=float)
    if np.any(t <= 0):
        raise ValueError("inverse virtual valuation needs a positive target")
    if method == "closed" and not isinstance(model, Rayleigh):
        raise ValueError("closed-form inverse only exists for Rayleigh fading")
    if method == "bisect" or (method == "auto" and not isinstance(model, Rayleigh)):
        out = _bisect_inverse(t, c_const, model)
    else:
        out = _rayleigh_inverse(t, c_const, model)
    return float(out) if np.ndim(out) == 0 else out


def check_regularity(model: FadingModel, c_const: float, grid: Sequence[float],
                     transform: Callable | None = None) -> float:
    """Smallest finite-difference slope of the virtual valuation over a sorted grid.

    Regular means the result is non-negative.  ``transform(v)`` replaces the
    virtual valuation, which lets the detector itself be tested.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ValueError("grid needs at least two points")
    if np.any(np.diff(g) <= 0) or np.any(g <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    vals = transform(g) if transform is not None else virtual_valuation(g, c_const, model)
    return float(np.min(np.diff(vals) / np.diff(g)))


# Full virtual valuation with the known P_si offset ---------------------------


def candidate_virtual(v, p_si, c_const, model: FadingModel):
    """Virtual valuation of a full valuation ``v``; identity below the support edge ``P_si``.

    Truthful valuations always exceed ``P_si``; the identity branch only matters
    for misreported bids and keeps the map continuous and increasing.
    """
    v = np.asarray(v, dtype=float)
    p_si = np.asarray(p_si, dtype=float)
    shifted = v - p_si
    inside = shifted > 0
    safe = np.where(inside, shifted, 1.0)
    out = np.where(inside, p_si + virtual_valuation(safe, c_const, model), v)
    return float(out) if out.ndim == 0 else out


def candidate_virtual_inverse(target, p_si, c_const, model: FadingModel):
    target = np.asarray(target, dtype=float)
    p_si = np.asarray(p_si, dtype=float)
    shifted = target - p_si
    inside = shifted > 0
    safe = np.where(inside, shifted, 1.0)
    out = np.where(inside, p_si + inverse_virtual_valuation(safe, c_const, model), target)
    return float(out) if out.ndim == 0 else out


# Scalar mechanisms -------------------------------------------------------------


@dataclass(frozen=True)
class AuctionInput:
    v0_mw: float
    source_feasible: bool
    valuations: tuple[float, ...] = ()
    c_const: tuple[float, ...] = ()
    p_si: tuple[float, ...] = ()
    alpha_tilde: tuple[float, ...] = ()
    fading_model: FadingModel = Rayleigh()
    p_s_mw: float | None = None

    def __post_init__(self):
        n = len(self.valuations)
        for name in ("c_const", "p_si", "alpha_tilde"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per candidate")
        for name in ("valuations", "c_const", "alpha_tilde"):
            if any(not x > 0 for x in getattr(self, name)):
                raise ValueError(f"{name} must be positive")

    @property
    def n(self) -> int:
        return len(self.valuations)

    @property
    def source_power(self) -> float:
        """Direct transmit power when the source serves itself (0 if it cannot)."""
        if not self.source_feasible:
            return 0.0
        return self.v0_mw if self.p_s_mw is None else self.p_s_mw

    def with_bid(self, i: int, bid: float) -> "AuctionInput":
        """Copy with candidate ``i`` (1-based) reporting ``bid`` instead of its valuation."""
        vals = list(self.valuations)
        vals[i - 1] = bid
        return AuctionInput(self.v0_mw, self.source_feasible, tuple(vals), self.c_const,
                            self.p_si, self.alpha_tilde, self.fading_model, self.p_s_mw)

    @classmethod
    def from_realization(cls, real: TrialRealization, model: FadingModel) -> "AuctionInput":
        c = real.candidates
        return cls(
            v0_mw=real.v0_mw,
            source_feasible=real.source_feasible,
            valuations=tuple(x.valuation_mw for x in c),
            c_const=tuple(x.c_const_mw for x in c),
            p_si=tuple(x.p_si_mw for x in c),
            alpha_tilde=tuple(x.alpha_tilde for x in c),
            fading_model=model,
            p_s_mw=real.p_s_mw,
        )


@dataclass(frozen=True)
class AuctionOutcome:
    winner: int
    payment_mw: float
    communicated: bool
    source_power_mw: float
    net_harvest_mw: float


def _argmin_first(values: Sequence[float]) -> int:
    best = 0
    for k in range(1, len(values)):
        if values[k] < values[best]:
            best = k
    return best


def _source_outcome(inp: AuctionInput) -> AuctionOutcome:
    p = inp.source_power
    return AuctionOutcome(0, p, inp.source_feasible, p, 0.0)


def _candidate_outcome(inp: AuctionInput, winner: int, payment: float, true_val: float | None = None) -> AuctionOutcome:
    v = inp.valuations[winner - 1] if true_val is None else true_val
    harvest = inp.alpha_tilde[winner - 1] * (payment - v)
    return AuctionOutcome(winner, payment, True, payment, harvest)


def run_baseline(inp: AuctionInput) -> AuctionOutcome:
    """Cooperative relaying: the cheapest route is used at exactly its cost."""
    allv = [inp.v0_mw, *inp.valuations]
    w = _argmin_first(allv)
    if w == 0:
        return _source_outcome(inp)
    return AuctionOutcome(w, allv[w], True, allv[w], 0.0)


def run_vickrey(inp: AuctionInput) -> AuctionOutcome:
    """Second-price reverse auction with the source's own cost as reserve."""
    allv = [inp.v0_mw, *inp.valuations]
    w = _argmin_first(allv)
    if w == 0:
        return _source_outcome(inp)
    second = min(allv[k] for k in range(len(allv)) if k != w)
    return _candidate_outcome(inp, w, second)


def run_myerson(inp: AuctionInput) -> AuctionOutcome:
    """Buyer-optimal reverse auction for a regular fading law.

    The lowest virtual valuation wins (the source's virtual valuation is its
    own cost); a winning candidate is paid the largest report that would still
    have won.
    """
    model = inp.fading_model
    _require_regular(model)
    virt = [inp.v0_mw] + [
        candidate_virtual(v, p, c, model) for v, p, c in zip(inp.valuations, inp.p_si, inp.c_const)
    ]
    w = _argmin_first(virt)
    if w == 0:
        return _source_outcome(inp)
    threshold = min(virt[k] for k in range(len(virt)) if k != w)
    payment = candidate_virtual_inverse(threshold, inp.p_si[w - 1], inp.c_const[w - 1], model)
    return _candidate_outcome(inp, w, payment)


MECHANISMS = {"baseline": run_baseline, "vickrey": run_vickrey, "myerson": run_myerson}


def candidate_utility(outcome: AuctionOutcome, i: int, true_valuation: float, alpha_tilde: float, t_s: float = 1.0) -> float:
    """Ex-post utility of candidate ``i``: ``T alpha_tilde (P_tot - v_i)`` if it relays, else 0."""
    if outcome.winner != i:
        return 0.0
    return t_s * alpha_tilde * (outcome.payment_mw - true_valuation)


def source_utility(outcome: AuctionOutcome, reward_c: float, t_s: float = 1.0) -> float:
    return reward_c * float(outcome.communicated) - t_s * outcome.source_power_mw


# Vectorised mechanisms -----------------------------------------------------------


@dataclass
class BatchOutcome:
    winner: np.ndarray
    payment: np.ndarray
    communicated: np.ndarray
    source_power: np.ndarray
    net_harvest: np.ndarray

    def outcome(self, k: int) -> AuctionOutcome:
        return AuctionOutcome(int(self.winner[k]), float(self.payment[k]), bool(self.communicated[k]),
                              float(self.source_power[k]), float(self.net_harvest[k]))


def _batch_finish(batch: TrialBatch, scores: np.ndarray, pay_fn) -> BatchOutcome:
    """Shared bookkeeping: ``scores`` has the source in column 0."""
    winner = np.argmin(scores, axis=1)
    src_power = np.where(batch.source_feasible, batch.p_s, 0.0)
    rows = np.arange(batch.trials)
    cand = winner > 0
    payment = src_power.copy()
    harvest = np.zeros(batch.trials)
    if batch.n > 0 and np.any(cand):
        idx = rows[cand]
        ci = winner[cand] - 1
        pay = pay_fn(idx, ci, scores[cand])
        payment[cand] = pay
        harvest[cand] = batch.alpha_tilde[idx, ci] * (pay - batch.valuation[idx, ci])
    communicated = np.where(cand, True, batch.source_feasible)
    power = np.where(communicated, payment, 0.0)
    return BatchOutcome(winner, payment, communicated, power, harvest)


def _with_source(batch: TrialBatch, cand_scores: np.ndarray) -> np.ndarray:
    return np.concatenate([batch.v0[:, None], cand_scores], axis=1)


def baseline_batch(batch: TrialBatch) -> BatchOutcome:
    scores = _with_source(batch, batch.valuation)
    return _batch_finish(batch, scores, lambda idx, ci, s: batch.valuation[idx, ci])


def _second_smallest(s: np.ndarray) -> np.ndarray:
    return np.partition(s, 1, axis=1)[:, 1]


def vickrey_batch(batch: TrialBatch) -> BatchOutcome:
    scores = _with_source(batch, batch.valuation)
    return _batch_finish(batch, scores, lambda idx, ci, s: _second_smallest(s))


def myerson_batch(batch: TrialBatch, model: FadingModel) -> BatchOutcome:
    _require_regular(model)
    virt = candidate_virtual(batch.valuation, batch.p_si, batch.c_const, model) if batch.n else batch.valuation
    scores = _with_source(batch, np.asarray(virt).reshape(batch.trials, batch.n))

    def pay(idx, ci, s):
        return candidate_virtual_inverse(_second_smallest(s), batch.p_si[idx, ci], batch.c_const[idx, ci], model)

    return _batch_finish(batch, scores, pay)


def run_all_batch(batch: TrialBatch, model: FadingModel) -> dict[str, BatchOutcome]:
    return {
        "baseline": baseline_batch(batch),
        "vickrey": vickrey_batch(batch),
        "myerson": myerson_batch(batch, model),
    }
