"""Outage probabilities by numerical integration.

A candidate placed at ``q`` cannot relay when its valuation exceeds ``P_max``.
Given the source-to-candidate fading ``h1`` the shifted valuation ``C / h2`` is
a simple function of the candidate-to-AP fading ``h2``, so the conditional
outage is one fading integral; the spatial average over the relay region is a
masked midpoint grid.

Two independent routes are kept on purpose:

* :func:`conditional_candidate_outage` integrates over ``h2`` with adaptive
  quadrature (scipy ``quad``), one point at a time;
* the grid routines integrate over ``h1`` with a fixed composite Gauss-Legendre
  rule in ``t = ln h``, vectorised over all cells.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .channel import FadingModel, SystemParams
from .geometry import Environment, Point, in_region_q, region_grid
from .mechanism import inverse_virtual_valuation
from .valuation import link_pathloss, source_pathloss

DEFAULT_CELL = 0.1
PANELS = 32
ORDER = 16
CHUNK = 2048


def source_outage_prob(env: Environment, params: SystemParams) -> float:
    """Probability that the direct NLOS link needs more than ``P_max``."""
    h_needed = params.zeta / (source_pathloss(env, params) * params.p_max_mw)
    return float(params.fading_nlos.cdf(h_needed))


def _outage_threshold(h, pl_sc, pl_c, params: SystemParams):
    # largest source-to-candidate fading that still leaves the candidate in outage
    return params.zeta / params.p_max_mw * (1.0 / (params.alpha * params.aperture_m2 * pl_sc * pl_c * h) + 1.0 / pl_sc)


def conditional_candidate_outage(q: Point, env: Environment, params: SystemParams, epsabs: float = 1e-10) -> float:
    """Outage probability of a candidate fixed at ``q``, by adaptive quadrature over the fading."""
    if not in_region_q(q, env):
        raise ValueError(f"{q} is outside the relay region")
    pl_sc, pl_c = link_pathloss(env, params, np.array([q.x, q.y]))
    model = params.fading_los
    t_lo, t_hi = model.log_range()

    def integrand(t):
        h = math.exp(t)
        return float(model.pdf(h)) * h * float(model.cdf(_outage_threshold(h, pl_sc, pl_c, params)))

    val, _ = integrate.quad(integrand, t_lo, t_hi, epsabs=epsabs, epsrel=1e-10, limit=400)
    return min(max(val, 0.0), 1.0)


@functools.lru_cache(maxsize=8)
def _log_rule(model: FadingModel, panels: int = PANELS, order: int = ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``h_k`` and weights ``w_k`` with ``sum w_k g(h_k) ~ E[g(H)]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    t_lo, t_hi = model.log_range()
    edges = np.linspace(t_lo, t_hi, panels + 1)
    half = np.diff(edges)[:, None] / 2.0
    mid = (edges[:-1] + edges[1:])[:, None] / 2.0
    t = (mid + half * x[None, :]).ravel()
    wt = (half * w[None, :]).ravel()
    h = np.exp(t)
    return h, wt * model.pdf(h) * h


def _cell_terms(pl_sc: np.ndarray, pl_c: np.ndarray, params: SystemParams, with_gap: bool):
    """Per-cell conditional outage and (optionally) Myerson gap mass.

    Both are expectations over the source-to-candidate fading ``h1``; the
    candidate-to-AP fading enters through its CDF in closed form.
    """
    model = params.fading_los
    h1, w = _log_rule(model)
    zeta, pmax = params.zeta, params.p_max_mw
    outage = np.empty(pl_sc.shape[0])
    gap = np.zeros(pl_sc.shape[0])
    for s in range(0, pl_sc.shape[0], CHUNK):
        a = pl_sc[s:s + CHUNK, None] * h1[None, :]
        b = pl_c[s:s + CHUNK, None]
        p_sc = zeta / a
        c_const = zeta / (b * a * params.aperture_m2 * params.alpha)
        slack = pmax - p_sc
        ok = slack > 0
        safe = np.where(ok, slack, 1.0)
        # in outage iff candidate-to-AP fading < C / (P_max - P_sc)
        f_out = np.where(ok, model.cdf(c_const / safe), 1.0)
        outage[s:s + CHUNK] = f_out @ w
        if with_gap:
            g = np.zeros_like(f_out)
            if np.any(ok):
                r = inverse_virtual_valuation(slack[ok], c_const[ok], model)
                # F_V(P_max) - F_V(nu_bar) = F_H(C / r) - F_H(C / slack)
                g[ok] = model.cdf(c_const[ok] / r) - f_out[ok]
            gap[s:s + CHUNK] = g @ w
    return np.clip(outage, 0.0, 1.0), np.clip(gap, 0.0, 1.0)


@dataclass(frozen=True)
class SpatialTerms:
    p_out_candidate: float
    gap_mass: float
    p_out_candidate_error: float
    gap_mass_error: float
    cell: float


def _grid_average(env: Environment, params: SystemParams, cell: float, with_gap: bool) -> tuple[float, float]:
    xs, ys, mask = region_grid(env, cell)
    if not mask.any():
        raise ValueError("relay region is empty on the integration grid")
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx[mask], gy[mask]])
    pl_sc, pl_c = link_pathloss(env, params, pts)
    out, gap = _cell_terms(pl_sc, pl_c, params, with_gap)
    return float(out.mean()), float(gap.mean())


@functools.lru_cache(maxsize=32)
def spatial_terms(env: Environment, params: SystemParams, cell: float = DEFAULT_CELL, with_gap: bool = True) -> SpatialTerms:
    """Region-averaged candidate outage and gap mass, each with a two-resolution error estimate."""
    fine = _grid_average(env, params, cell, with_gap)
    coarse = _grid_average(env, params, 2.0 * cell, with_gap)
    return SpatialTerms(
        p_out_candidate=fine[0],
        gap_mass=fine[1],
        p_out_candidate_error=abs(fine[0] - coarse[0]),
        gap_mass_error=abs(fine[1] - coarse[1]),
        cell=cell,
    )


def candidate_outage_prob(env: Environment, params: SystemParams, cell: float = DEFAULT_CELL) -> float:
    """Outage probability of one candidate placed uniformly over the relay region."""
    return spatial_terms(env, params, cell, with_gap=False).p_out_candidate


def min_outage_prob(env: Environment, params: SystemParams, n: int, cell: float = DEFAULT_CELL) -> float:
    """Outage when every feasible route is used: the source and all ``n`` candidates fail."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return source_outage_prob(env, params)
    return source_outage_prob(env, params) * candidate_outage_prob(env, params, cell) ** n


def gap_from_terms(p_source: float, p_candidate: float, gap_mass: float, n: int) -> float:
    """Extra Myerson outage: every candidate sits above its virtual cutoff, yet one could relay.

    With ``p_candidate`` the chance a candidate cannot relay and ``gap_mass`` the
    chance it could relay but is priced out, that is
    ``p_source * ((p_candidate + gap_mass)**n - p_candidate**n)``.
    """
    if n <= 0:
        return 0.0
    return max(p_source * ((p_candidate + gap_mass) ** n - p_candidate ** n), 0.0)


def myerson_outage_gap(env: Environment, params: SystemParams, n: int, cell: float = DEFAULT_CELL) -> float:
    terms = spatial_terms(env, params, cell)
    return gap_from_terms(source_outage_prob(env, params), terms.p_out_candidate, terms.gap_mass, n)


@dataclass(frozen=True)
class OutageBreakdown:
    n: int
    p_out_source: float
    p_out_candidate: float
    p_out_star: float
    p_out_myerson_gap: float
    gap_mass: float
    p_out_candidate_error: float

    @property
    def p_out_myerson(self) -> float:
        return self.p_out_star + self.p_out_myerson_gap


def outage_breakdown(env: Environment, params: SystemParams, n: int, cell: float = DEFAULT_CELL,
                     with_gap: bool = True) -> OutageBreakdown:
    terms = spatial_terms(env, params, cell, with_gap)
    p_s = source_outage_prob(env, params)
    return OutageBreakdown(
        n=n,
        p_out_source=p_s,
        p_out_candidate=terms.p_out_candidate,
        p_out_star=p_s * terms.p_out_candidate ** n,
        p_out_myerson_gap=gap_from_terms(p_s, terms.p_out_candidate, terms.gap_mass, n) if with_gap else float("nan"),
        gap_mass=terms.gap_mass if with_gap else float("nan"),
        p_out_candidate_error=terms.p_out_candidate_error,
    )


# Heatmaps ------------------------------------------------------------------------


@dataclass
class Heatmap:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (len(ys), len(xs)); NaN outside the relay region

    @property
    def in_region(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def rows(self):
        for j, y in enumerate(self.ys):
            for i, x in enumerate(self.xs):
                v = self.values[j, i]
                yield float(x), float(y), float(v), bool(not np.isnan(v))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_m", "y_m", "p_out", "in_region"])
            for x, y, v, inside in self.rows():
                w.writerow([f"{x:.6g}", f"{y:.6g}", f"{v:.10g}" if inside else "", int(inside)])


def outage_heatmap(env: Environment, params: SystemParams, resolution: float) -> Heatmap:
    """Conditional candidate outage at every cell center; NaN marks cells outside the relay region."""
    xs, ys, mask = region_grid(env, resolution)
    values = np.full(mask.shape, np.nan)
    if mask.any():
        gx, gy = np.meshgrid(xs, ys)
        pl_sc, pl_c = link_pathloss(env, params, np.column_stack([gx[mask], gy[mask]]))
        values[mask] = _cell_terms(pl_sc, pl_c, params, with_gap=False)[0]
    return Heatmap(xs, ys, values)
