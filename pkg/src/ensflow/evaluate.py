"""Scores for central prediction intervals and ensemble-gain bookkeeping.

A central interval at level 1 - alpha runs from the alpha/2 to the
1 - alpha/2 predictive quantile.  Three scores describe it: coverage
probability (fraction of observations inside the closed interval), average
width, and the average interval score

    IS = (u - l) + (2/alpha) (l - y) [y < l] + (2/alpha) (y - u) [y > u]

which penalises misses in proportion to how far they fall outside.  Smaller
is better.  Relative improvements compare two prediction systems by their
average interval scores; the crowd comparison relates a combined prediction
to the individual ensemble members it was averaged from.

All averages use exactly-rounded summation so any batch order gives the same
result.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# central-interval levels 99, 97.5, 95, 90 and 80 percent
INTERVAL_ALPHAS = (0.01, 0.025, 0.05, 0.10, 0.20)


class DegenerateBenchmarkError(ValueError):
    """Benchmark score is zero; a relative comparison is undefined."""


@dataclass(frozen=True)
class IntervalPrediction:
    """Lower and upper bound series of one central interval.

    ``alpha`` is the nominal miss rate, so the level is 1 - alpha.  Bounds
    are stored exactly as delivered: a lower bound above its upper bound
    (quantile crossing) stays visible and is scored as-is.
    """

    alpha: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise ValueError(f"bounds must be equal-length 1-d arrays, got {lower.shape} vs {upper.shape}")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("interval bounds contain non-finite values")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def level(self) -> float:
        return 1.0 - self.alpha

    @property
    def n(self) -> int:
        return self.lower.size


def _check_observations(pred: IntervalPrediction, observed) -> np.ndarray:
    y = np.asarray(observed, dtype=float)
    if y.shape != pred.lower.shape:
        raise ValueError(f"observations {y.shape} do not match interval length {pred.lower.shape}")
    if not np.isfinite(y).all():
        raise ValueError("observations contain non-finite values")
    return y


def coverage_probability(pred: IntervalPrediction, observed) -> float:
    """Fraction of observations inside the closed interval [lower, upper]."""
    y = _check_observations(pred, observed)
    inside = (y >= pred.lower) & (y <= pred.upper)
    return int(np.count_nonzero(inside)) / pred.n


def average_width(pred: IntervalPrediction) -> float:
    return math.fsum(pred.upper - pred.lower) / pred.n


def average_interval_score(pred: IntervalPrediction, observed) -> float:
    """Mean interval score; lower is better, misses cost 2/alpha per mm."""
    y = _check_observations(pred, observed)
    penalty = 2.0 / pred.alpha
    scores = (
        (pred.upper - pred.lower)
        + penalty * np.where(y < pred.lower, pred.lower - y, 0.0)
        + penalty * np.where(y > pred.upper, y - pred.upper, 0.0)
    )
    return math.fsum(scores) / pred.n


def crossing_count(pred: IntervalPrediction) -> int:
    """Number of time steps whose lower bound exceeds the upper bound."""
    return int(np.count_nonzero(pred.lower > pred.upper))


def relative_improvement(score_of_interest: float, benchmark_score: float) -> float:
    """(benchmark - candidate) / benchmark; positive when the candidate is better."""
    if benchmark_score == 0.0:
        raise DegenerateBenchmarkError("benchmark average interval score is zero")
    return (benchmark_score - score_of_interest) / benchmark_score


@dataclass(frozen=True)
class WisdomRecord:
    """Combined-versus-members comparison at one interval level.

    ``improvements`` holds the relative improvement of the combined interval
    over each member (nan where a member scored exactly zero and the ratio
    is undefined; those member indices appear in ``excluded``).
    ``relative_difference`` compares the members' average score with the
    combined score; by convexity of the interval score it cannot be negative
    when the combined bounds are the member means.
    """

    alpha: float
    ais_out: float
    aais_in: float
    relative_difference: float
    improvements: tuple[float, ...]
    excluded: tuple[int, ...]


def wisdom_metrics(member_lowers, member_uppers, combined: IntervalPrediction, observed) -> WisdomRecord:
    """Score each ensemble member against the combined interval.

    ``member_lowers`` and ``member_uppers`` are (m, n) arrays of per-member
    interval bounds at the same level as ``combined``.
    """
    lowers = np.asarray(member_lowers, dtype=float)
    uppers = np.asarray(member_uppers, dtype=float)
    if lowers.ndim != 2 or lowers.shape != uppers.shape:
        raise ValueError(f"member bounds must be matching (m, n) arrays, got {lowers.shape} vs {uppers.shape}")
    if lowers.shape[1] != combined.n:
        raise ValueError(f"member length {lowers.shape[1]} does not match combined length {combined.n}")
    y = _check_observations(combined, observed)

    ais_out = average_interval_score(combined, y)
    member_scores = [
        average_interval_score(IntervalPrediction(combined.alpha, lowers[i], uppers[i]), y)
        for i in range(lowers.shape[0])
    ]
    aais_in = math.fsum(member_scores) / len(member_scores)

    improvements = []
    excluded = []
    for i, score in enumerate(member_scores):
        if score == 0.0:
            improvements.append(float("nan"))
            excluded.append(i)
        else:
            improvements.append((score - ais_out) / score)
    relative_difference = 0.0 if aais_in == 0.0 else (aais_in - ais_out) / aais_in
    return WisdomRecord(
        alpha=combined.alpha,
        ais_out=ais_out,
        aais_in=aais_in,
        relative_difference=relative_difference,
        improvements=tuple(improvements),
        excluded=tuple(excluded),
    )


def rank_schemes(ais_table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Competition-rank schemes per catchment by average interval score.

    ``ais_table`` has one row per catchment and one column per scheme.
    Returns (ranks, average_rank_per_scheme); the best (smallest) score gets
    rank 1 and ties share the smaller rank.
    """
    table = np.asarray(ais_table, dtype=float)
    if table.ndim != 2 or table.size == 0:
        raise ValueError(f"need a (catchments, schemes) table, got shape {table.shape}")
    if not np.isfinite(table).all():
        raise ValueError("scores must be finite to rank")
    ranks = 1 + np.sum(table[:, None, :] < table[:, :, None], axis=2)
    return ranks, ranks.mean(axis=0)


@dataclass(frozen=True)
class MetricsRecord:
    """One scored (catchment, scheme, level) cell."""

    catchment: str
    scheme: str
    alpha: float
    coverage: float
    width: float
    score: float
    crossings: int
    seconds: float


METRICS_FIELDS = ("catchment", "scheme", "alpha", "coverage", "width", "score", "crossings", "seconds")


def write_metrics_csv(records, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for r in records:
            writer.writerow(
                (
                    r.catchment,
                    r.scheme,
                    repr(float(r.alpha)),
                    repr(float(r.coverage)),
                    repr(float(r.width)),
                    repr(float(r.score)),
                    int(r.crossings),
                    repr(float(r.seconds)),
                )
            )


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    records: list[MetricsRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != METRICS_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(METRICS_FIELDS)}")
        for row in reader:
            records.append(
                MetricsRecord(
                    catchment=row[0],
                    scheme=row[1],
                    alpha=float(row[2]),
                    coverage=float(row[3]),
                    width=float(row[4]),
                    score=float(row[5]),
                    crossings=int(row[6]),
                    seconds=float(row[7]),
                )
            )
    return records


def _level_label(alpha: float) -> str:
    return f"{(1.0 - alpha) * 100:g}"


def summarize(records) -> dict:
    """Mean and median of each score per (scheme, level) across catchments."""
    cells: dict[tuple[str, float], dict[str, list[float]]] = {}
    for r in records:
        cell = cells.setdefault((r.scheme, r.alpha), {"coverage": [], "width": [], "score": []})
        cell["coverage"].append(r.coverage)
        cell["width"].append(r.width)
        cell["score"].append(r.score)
    out: dict = {}
    for (scheme, alpha), cell in sorted(cells.items()):
        level = _level_label(alpha)
        block = out.setdefault(scheme, {})
        block[level] = {
            "n_catchments": len(cell["score"]),
            "coverage_mean": math.fsum(cell["coverage"]) / len(cell["coverage"]),
            "coverage_median": float(np.median(cell["coverage"])),
            "width_mean": math.fsum(cell["width"]) / len(cell["width"]),
            "width_median": float(np.median(cell["width"])),
            "score_mean": math.fsum(cell["score"]) / len(cell["score"]),
            "score_median": float(np.median(cell["score"])),
        }
    return out


def write_summary_json(summary: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
