"""Path loss, small-scale fading and link-budget helpers.

All powers are linear milliwatts and all gains are linear power ratios; the dB
and dBm values from a configuration are converted once, here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special, stats

LN10_OVER_10 = math.log(10.0) / 10.0


def db_to_linear(x):
    if np.ndim(x):
        return 10.0 ** (np.asarray(x, dtype=float) / 10.0)
    return 10.0 ** (float(x) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_mw(x):
    return db_to_linear(x)


class LinkClass(enum.Enum):
    LOS = "los"
    NLOS = "nlos"


@dataclass(frozen=True)
class PathLossParams:
    k_los_db: float = 0.0
    eta_los: float = 2.5
    k_nlos_db: float = -25.0
    eta_nlos: float = 5.76

    def __post_init__(self):
        if not (self.eta_los > 0 and self.eta_nlos > 0):
            raise ValueError("path-loss exponents must be positive")

    def intercept(self, cls: LinkClass) -> float:
        return db_to_linear(self.k_los_db if cls is LinkClass.LOS else self.k_nlos_db)

    def exponent(self, cls: LinkClass) -> float:
        return self.eta_los if cls is LinkClass.LOS else self.eta_nlos


def path_loss_gain(d, params: PathLossParams, cls: LinkClass):
    """``K * d**-eta`` for the given link class; ``d`` in meters, scalar or array."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValueError("distance must be positive")
    out = params.intercept(cls) * d_arr ** (-params.exponent(cls))
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(u):
    return special.ndtr(u)


def std_normal_pdf(u):
    return np.exp(-0.5 * np.square(u)) / math.sqrt(2.0 * math.pi)


def mills_ratio(u):
    """(1 - Phi(u)) / phi(u), computed through the scaled complementary error function.

    Stays finite for large positive ``u`` where both numerator and denominator underflow.
    """
    return math.sqrt(math.pi / 2.0) * special.erfcx(np.asarray(u, dtype=float) / math.sqrt(2.0))


# Fading models -------------------------------------------------------------


@dataclass(frozen=True)
class Lognormal:
    """Lognormal fading power with unit median.

    ``sigma_db`` is the standard deviation of ``10 log10(H)``; the natural-log
    scale used by the formulas is ``sigma_db * ln(10) / 10``.
    """

    sigma_db: float

    def __post_init__(self):
        if not self.sigma_db > 0:
            raise ValueError(f"lognormal sigma must be positive, got {self.sigma_db}")

    @classmethod
    def from_natural(cls, sigma_f: float) -> "Lognormal":
        return cls(sigma_f / LN10_OVER_10)

    @property
    def sigma(self) -> float:
        return self.sigma_db * LN10_OVER_10

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        with np.errstate(divide="ignore"):
            z = np.where(h > 0, np.log(np.where(h > 0, h, 1.0)) / self.sigma, -np.inf)
        return special.ndtr(z)

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        pos = h > 0
        hs = np.where(pos, h, 1.0)
        val = std_normal_pdf(np.log(hs) / self.sigma) / (hs * self.sigma)
        return np.where(pos, val, 0.0)

    def quantile(self, p):
        return np.exp(self.sigma * special.ndtri(p))

    def log_range(self, width: float = 10.0) -> tuple[float, float]:
        """Interval in ``t = ln h`` carrying all but a negligible tail of the mass."""
        return -width * self.sigma, width * self.sigma

    def sample(self, rng: np.random.Generator, size=None):
        return np.exp(self.sigma * rng.standard_normal(size))


@dataclass(frozen=True)
class Rayleigh:
    """Rayleigh amplitude with scale ``psi``: the power is exponential with mean ``2 psi**2``."""

    psi: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if not self.psi > 0:
            raise ValueError(f"rayleigh scale must be positive, got {self.psi}")

    @property
    def mean_power(self) -> float:
        return 2.0 * self.psi**2

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        return np.where(h > 0, -np.expm1(-np.maximum(h, 0.0) / self.mean_power), 0.0)

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        return np.where(h >= 0, np.exp(-np.maximum(h, 0.0) / self.mean_power) / self.mean_power, 0.0)

    def quantile(self, p):
        return -self.mean_power * np.log1p(-np.asarray(p, dtype=float))

    def log_range(self, width: float = 10.0) -> tuple[float, float]:
        # lower tail mass ~ h/mean, upper ~ exp(-h/mean); both below 1e-12 here
        m = self.mean_power
        return math.log(m * 1e-12), math.log(m * 28.0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(self.mean_power, size)


@dataclass(frozen=True)
class Rician:
    """Rician fading power (LOS component plus scattered part), normalised to ``mean_power``.

    Supported for simulation and the Vickrey auction only; its reverse virtual
    valuation is not monotone in general so the Myerson auction rejects it.
    """

    k_factor: float
    mean_power: float = 1.0

    def __post_init__(self):
        if self.k_factor < 0 or not self.mean_power > 0:
            raise ValueError("rician needs k_factor >= 0 and mean_power > 0")

    @property
    def _dist(self):
        # 2(K+1)H/mean ~ noncentral chi-square(2 dof, nc = 2K)
        scale = self.mean_power / (2.0 * (self.k_factor + 1.0))
        return stats.ncx2(df=2, nc=2.0 * self.k_factor, scale=scale)

    def cdf(self, h):
        return self._dist.cdf(np.maximum(np.asarray(h, dtype=float), 0.0))

    def pdf(self, h):
        return self._dist.pdf(np.asarray(h, dtype=float))

    def quantile(self, p):
        return self._dist.ppf(p)

    def log_range(self, width: float = 10.0) -> tuple[float, float]:
        return float(np.log(self.quantile(1e-12))), float(np.log(self.quantile(1 - 1e-12)))

    def sample(self, rng: np.random.Generator, size=None):
        s = math.sqrt(self.mean_power / (2.0 * (self.k_factor + 1.0)))
        nu = math.sqrt(self.k_factor * self.mean_power / (self.k_factor + 1.0))
        re = nu + s * rng.standard_normal(size)
        im = s * rng.standard_normal(size)
        return re * re + im * im


FadingModel = Union[Lognormal, Rayleigh, Rician]


def fading_cdf(model: FadingModel, h):
    return model.cdf(h)


def fading_pdf(model: FadingModel, h):
    return model.pdf(h)


def sample_fading(model: FadingModel, rng: np.random.Generator, size=None):
    return model.sample(rng, size)


# Link budget ----------------------------------------------------------------


def max_rate(p_tx, h, noise_mw):
    """Shannon spectral efficiency ``log2(1 + p_tx h / noise)`` in bit/s/Hz."""
    if np.any(np.asarray(noise_mw) <= 0):
        raise ValueError("noise power must be positive")
    if np.ndim(p_tx) or np.ndim(h):
        return np.log2(1.0 + np.asarray(p_tx, dtype=float) * h / noise_mw)
    return math.log2(1.0 + p_tx * h / noise_mw)


@dataclass(frozen=True)
class SystemParams:
    noise_dbm: float = -75.0
    p_max_mw: float = 100.0
    t_s: float = 1.0
    d_bits_per_hz: float = 8.0
    alpha: float = 0.2
    aperture_m2: float = 0.01
    reward_c: float = 1000.0
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    fading_los: FadingModel = field(default_factory=lambda: Lognormal(8.66))
    fading_nlos: FadingModel = field(default_factory=lambda: Lognormal(9.02))

    def __post_init__(self):
        problems = []
        if not self.p_max_mw > 0:
            problems.append("p_max_mw must be positive")
        if not self.t_s > 0:
            problems.append("t_s must be positive")
        if not self.d_bits_per_hz > 0:
            problems.append("d_bits_per_hz must be positive")
        if not 0 < self.alpha <= 1:
            problems.append("alpha must lie in (0, 1]")
        if not self.aperture_m2 > 0:
            problems.append("aperture_m2 must be positive")
        if not self.reward_c > self.t_s * self.p_max_mw:
            problems.append(
                f"reward_c must exceed t_s * p_max_mw = {self.t_s * self.p_max_mw:g} (mW s)"
            )
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_dbm)

    @property
    def zeta(self) -> float:
        return min_received_power(self)


def min_received_power(params: SystemParams) -> float:
    """Received power needed to carry ``D`` bit/Hz within ``T`` seconds, in mW."""
    return math.expm1(params.d_bits_per_hz / params.t_s * math.log(2.0)) * params.noise_mw


def rayleigh_params(**overrides) -> SystemParams:
    """Default parameters with Rayleigh fading on every link."""
    kw = dict(fading_los=Rayleigh(), fading_nlos=Rayleigh())
    kw.update(overrides)
    return SystemParams(**kw)
