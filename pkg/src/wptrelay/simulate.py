"""Monte Carlo harness: sample worlds, run the three mechanisms on each, aggregate.

Trials are grouped in fixed-size blocks and each block draws from its own
seed-derived substream, so results depend only on ``(seed, n, trials)`` and
never on how many worker processes ran the blocks.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .channel import SystemParams
from .geometry import Environment
from .mechanism import run_all_batch
from .valuation import realize_batch

BLOCK = 4096
MECHANISM_NAMES = ("baseline", "vickrey", "myerson")


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    mechanism: str
    winner: int
    communicated: bool
    source_energy_mws: float
    net_harvest_energy_mws: float


@dataclass
class MechanismColumns:
    winner: np.ndarray
    communicated: np.ndarray
    source_energy: np.ndarray
    net_harvest: np.ndarray
    payment: np.ndarray


@dataclass
class TrialResults:
    """Per-trial outcomes for every mechanism, stored column-wise."""

    n: int
    t_s: float
    columns: dict[str, MechanismColumns]
    # winner's valuation and efficiency, kept for energy-accounting checks
    lowest: np.ndarray = field(repr=False, default=None)
    second: np.ndarray = field(repr=False, default=None)
    lowest_alpha: np.ndarray = field(repr=False, default=None)

    @property
    def trials(self) -> int:
        return self.columns["baseline"].winner.shape[0]

    def records(self) -> list[TrialRecord]:
        out = []
        for k in range(self.trials):
            for name in MECHANISM_NAMES:
                c = self.columns[name]
                out.append(TrialRecord(k, name, int(c.winner[k]), bool(c.communicated[k]),
                                       float(c.source_energy[k]), float(c.net_harvest[k])))
        return out


def block_rng(seed: int, n: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(n, block))))


def _run_block(args) -> dict[str, np.ndarray]:
    env, params, n, size, seed, block = args
    batch = realize_batch(env, params, n, size, block_rng(seed, n, block))
    outs = run_all_batch(batch, params.fading_los)
    cols = {}
    for name, o in outs.items():
        cols[f"{name}.winner"] = o.winner
        cols[f"{name}.communicated"] = o.communicated
        cols[f"{name}.source_energy"] = params.t_s * o.source_power
        cols[f"{name}.net_harvest"] = params.t_s * o.net_harvest
        cols[f"{name}.payment"] = o.payment
    allv = np.concatenate([batch.v0[:, None], batch.valuation], axis=1)
    srt = np.sort(allv, axis=1)
    cols["lowest"] = srt[:, 0]
    cols["second"] = srt[:, 1] if allv.shape[1] > 1 else np.full(size, np.nan)
    low = np.argmin(allv, axis=1)
    alpha = np.zeros(size)
    cand = low > 0
    alpha[cand] = batch.alpha_tilde[np.arange(size)[cand], low[cand] - 1]
    cols["lowest_alpha"] = alpha
    return cols


def run_trials(env: Environment, params: SystemParams, n: int, trials: int, seed: int,
               workers: int = 1) -> TrialResults:
    """Run baseline, Vickrey and Myerson on ``trials`` shared realizations with ``n`` candidates."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if n < 0:
        raise ValueError("n must be non-negative")
    jobs = []
    for b, start in enumerate(range(0, trials, BLOCK)):
        jobs.append((env, params, n, min(BLOCK, trials - start), seed, b))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    columns = {
        name: MechanismColumns(
            winner=cat[f"{name}.winner"],
            communicated=cat[f"{name}.communicated"],
            source_energy=cat[f"{name}.source_energy"],
            net_harvest=cat[f"{name}.net_harvest"],
            payment=cat[f"{name}.payment"],
        )
        for name in MECHANISM_NAMES
    }
    return TrialResults(n, params.t_s, columns, lowest=cat["lowest"], second=cat["second"],
                        lowest_alpha=cat["lowest_alpha"])


# Aggregation ------------------------------------------------------------------------


def _mean_se(x: np.ndarray) -> tuple[float | None, float | None]:
    m = x.shape[0]
    if m == 0:
        return None, None
    mean = math.fsum(x.tolist()) / m
    if m == 1:
        return mean, 0.0
    var = math.fsum(((x - mean) ** 2).tolist()) / (m - 1)
    return mean, math.sqrt(var / m)


@dataclass(frozen=True)
class MechanismStats:
    n: int
    mechanism: str
    trials: int
    outage_rate: float
    outage_se: float
    mean_src_energy: float | None       # over trials that communicated
    mean_src_energy_se: float | None
    mean_src_energy_all: float          # every trial, outages counted as zero
    mean_src_energy_all_se: float
    mean_harvest: float | None          # over trials a candidate won
    mean_harvest_se: float | None
    candidate_win_rate: float


@dataclass(frozen=True)
class AggregateStats:
    n: int
    trials: int
    by_mechanism: dict[str, MechanismStats]

    def __getitem__(self, name: str) -> MechanismStats:
        return self.by_mechanism[name]


def aggregate(results: TrialResults) -> AggregateStats:
    by = {}
    for name in MECHANISM_NAMES:
        c = results.columns[name]
        N = c.winner.shape[0]
        if N == 0:
            raise ValueError("cannot aggregate an empty result set")
        p = float(np.count_nonzero(~c.communicated)) / N
        e_ok, e_ok_se = _mean_se(c.source_energy[c.communicated])
        e_all, e_all_se = _mean_se(c.source_energy)
        won = c.winner > 0
        h, h_se = _mean_se(c.net_harvest[won])
        by[name] = MechanismStats(
            n=results.n, mechanism=name, trials=N,
            outage_rate=p, outage_se=math.sqrt(p * (1.0 - p) / N),
            mean_src_energy=e_ok, mean_src_energy_se=e_ok_se,
            mean_src_energy_all=e_all, mean_src_energy_all_se=e_all_se,
            mean_harvest=h, mean_harvest_se=h_se,
            candidate_win_rate=float(np.count_nonzero(won)) / N,
        )
    return AggregateStats(results.n, results.trials, by)


def aggregate_records(records: Sequence[TrialRecord], n: int) -> AggregateStats:
    """Aggregate from a flat record list (the slow, explicit route)."""
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    cols = {}
    for name in MECHANISM_NAMES:
        rs = [r for r in records if r.mechanism == name]
        cols[name] = MechanismColumns(
            winner=np.array([r.winner for r in rs], dtype=int),
            communicated=np.array([r.communicated for r in rs], dtype=bool),
            source_energy=np.array([r.source_energy_mws for r in rs], dtype=float),
            net_harvest=np.array([r.net_harvest_energy_mws for r in rs], dtype=float),
            payment=np.full(len(rs), np.nan),
        )
    return aggregate(TrialResults(n, float("nan"), cols))


# Critical reward -------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalReward:
    n: int
    c_star: float
    valid: bool


def critical_reward(stats_v: MechanismStats, stats_m: MechanismStats, params: SystemParams) -> CriticalReward:
    """Reward at which the source's mean utility is the same under Vickrey and Myerson.

    Mean utility is ``C (1 - p_out) - mean energy`` with energy averaged over all
    trials, so the crossing is ``(E_V - E_M) / (p_M - p_V)``.  The means here
    are already energies (``T`` times power).
    """
    if stats_v.n != stats_m.n:
        raise ValueError(f"statistics come from different n ({stats_v.n} vs {stats_m.n})")
    dp = stats_m.outage_rate - stats_v.outage_rate
    de = stats_v.mean_src_energy_all - stats_m.mean_src_energy_all
    if dp == 0:
        return CriticalReward(stats_v.n, float("nan"), False)
    c = de / dp
    return CriticalReward(stats_v.n, c, bool(c > 0 and math.isfinite(c)))


def source_utilities(results: TrialResults, mechanism: str, reward_c: float) -> np.ndarray:
    c = results.columns[mechanism]
    return reward_c * c.communicated - c.source_energy


def utility_gap(results: TrialResults, reward_c: float) -> tuple[float, float]:
    """Mean and standard error of ``U_Myerson - U_Vickrey`` over paired trials."""
    d = source_utilities(results, "myerson", reward_c) - source_utilities(results, "vickrey", reward_c)
    mean, se = _mean_se(d)
    return mean, se


# CSV ----------------------------------------------------------------------------------

CSV_COLUMNS = (
    "n", "mechanism", "trials", "outage_rate", "outage_se",
    "mean_src_energy_mWs", "mean_src_energy_all_mWs", "mean_harvest_mWs",
)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_aggregate_csv(path, stats: Iterable[AggregateStats], analytic: dict[int, dict[str, float]] | None = None) -> None:
    """One row per (n, mechanism); ``analytic`` adds an ``analytic_outage`` column keyed by n then mechanism."""
    header = list(CSV_COLUMNS) + (["analytic_outage"] if analytic is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for agg in stats:
            for name in MECHANISM_NAMES:
                s = agg[name]
                row = [s.n, name, s.trials, s.outage_rate, s.outage_se,
                       s.mean_src_energy, s.mean_src_energy_all, s.mean_harvest]
                if analytic is not None:
                    row.append(analytic.get(s.n, {}).get(name))
                w.writerow([_fmt(x) for x in row])
