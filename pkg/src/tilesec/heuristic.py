"""Core re-allocation between the secure and insecure clusters from MPKI trends.

Slopes are measured on doubly-normalized axes: core counts divided by the
machine size ``n`` and MPKI divided by its maximum, so a curve that falls
from 1 to 0 across the whole machine has an average slope of 1.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import random
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

from .machine import ConfigurationError

SATURATION_SLOPE = 0.1
LINEAR_SLOPE = 0.5


@dataclass(frozen=True)
class MpkiTrend:
    samples: tuple
    degenerate: bool = False

    def __post_init__(self):
        samples = tuple((int(c), float(v)) for c, v in self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ValueError("trend needs at least one sample")
        cores = [c for c, _ in samples]
        if any(b <= a for a, b in zip(cores, cores[1:])) or cores[0] < 1:
            raise ValueError("trend core counts must be positive and strictly increasing")
        vals = [v for _, v in samples]
        if any(v < 0 or v > 1 + 1e-12 for v in vals):
            raise ValueError("normalized MPKI must lie in [0, 1]")
        if not self.degenerate and abs(max(vals) - 1.0) > 1e-12:
            raise ValueError("trend must be normalized to a maximum of 1.0")

    @property
    def cores(self) -> list[int]:
        return [c for c, _ in self.samples]

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.samples]

    def at(self, cores: float) -> float:
        """Linear interpolation, clamped to the end samples."""
        cs = self.cores
        vs = self.values
        if cores <= cs[0]:
            return vs[0]
        if cores >= cs[-1]:
            return vs[-1]
        i = bisect.bisect_right(cs, cores)
        c0, c1 = cs[i - 1], cs[i]
        if cores == c0:
            return vs[i - 1]
        return vs[i - 1] + (vs[i] - vs[i - 1]) * (cores - c0) / (c1 - c0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cores", "mpki"])
        for c, v in self.samples:
            w.writerow([c, repr(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, normalize: bool = True) -> "MpkiTrend":
        rows = read_trend_csv(text)
        if normalize:
            return normalize_trend(rows)
        return cls(tuple(rows))


def read_trend_csv(text: str) -> list[tuple[int, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["cores", "mpki"]:
        raise ValueError("trend CSV must start with the header 'cores,mpki'")
    rows = []
    for rec in reader:
        if not rec:
            continue
        rows.append((int(rec[0]), float(rec[1])))
    return rows


def normalize_trend(raw: Iterable[tuple]) -> MpkiTrend:
    """Divide raw MPKI by its maximum. All-zero input gives a degenerate flat trend."""
    raw = [(int(c), float(m)) for c, m in raw]
    if any(m < 0 for _, m in raw):
        raise ValueError("raw MPKI must be non-negative")
    peak = max((m for _, m in raw), default=0.0)
    if peak == 0.0:
        return MpkiTrend(tuple((c, 0.0) for c, _ in raw), degenerate=True)
    return MpkiTrend(tuple((c, m / peak) for c, m in raw))


def combine_raw(trends: Sequence[Sequence[tuple]]) -> list[tuple[int, float]]:
    """Pointwise sum of raw MPKI trends sampled at identical core counts."""
    if not trends:
        raise ValueError("nothing to combine")
    cores = [c for c, _ in trends[0]]
    for t in trends[1:]:
        if [c for c, _ in t] != cores:
            raise ValueError("trends must share core counts")
    return [(c, sum(t[i][1] for t in trends)) for i, c in enumerate(cores)]


def segment_slopes(trend: MpkiTrend, n: Optional[int] = None) -> list[float]:
    n = n or trend.cores[-1]
    s = trend.samples
    return [abs(v1 - v0) / ((c1 - c0) / n) for (c0, v0), (c1, v1) in zip(s, s[1:])]


def find_point_b(trend: MpkiTrend, n: Optional[int] = None) -> int:
    """Start of the saturation region, scanning from the largest core count down."""
    slopes = segment_slopes(trend, n)
    for i in range(len(slopes) - 1, -1, -1):
        if slopes[i] > SATURATION_SLOPE:
            return trend.samples[i + 1][0]
    return trend.samples[0][0]


def find_point_a(trend: MpkiTrend, n: Optional[int] = None) -> int:
    """Start of the linear region, scanning from the smallest core count up."""
    slopes = segment_slopes(trend, n)
    for i, s in enumerate(slopes):
        if s < LINEAR_SLOPE:
            return trend.samples[i][0]
    return trend.samples[-1][0]


@dataclass(frozen=True)
class RegionPoints:
    point_a: int
    point_b: int
    linear_slope: float


def region_points(trend: MpkiTrend, n: Optional[int] = None) -> RegionPoints:
    n = n or trend.cores[-1]
    b = find_point_b(trend, n)
    a = min(find_point_a(trend, n), b)
    slope = abs(trend.at(a) - trend.at(b)) / ((b - a) / n) if b > a else 0.0
    return RegionPoints(a, b, slope)


@dataclass(frozen=True)
class AllocationDecision:
    cores_secure: int
    cores_insecure: int
    r_desired: int
    anomaly: int
    sr: float
    adjust_factor: int
    branch: str
    b_secure: int
    b_insecure: int
    slope_secure: float
    slope_insecure: float

    def to_dict(self) -> dict:
        return asdict(self)


def allocate_from_points(b_secure: int, b_insecure: int, slope_secure: float,
                         slope_insecure: float, n: int) -> AllocationDecision:
    """Resolve the desired saturation points against ``n`` available cores."""
    if n < 2:
        raise ConfigurationError("need at least two cores to form two clusters")
    r_desired = b_secure + b_insecure
    anomaly = abs(n - r_desired)
    sr, adjust = 1.0, 0
    if r_desired == n:
        branch = "Exact"
        cs, ci = b_secure, b_insecure
    elif r_desired < n:
        branch = "Surplus"
        half = anomaly // 2
        cs, ci = b_secure + half, b_insecure + (anomaly - half)
    else:
        branch = "Deficit"
        larger, smaller = max(slope_secure, slope_insecure), min(slope_secure, slope_insecure)
        sr = smaller / larger if larger > 0 else 1.0
        # tolerance absorbs float noise in slope ratios such as 0.25 -> 0.2500000000000001
        adjust = math.ceil(anomaly * sr - 1e-9)
        if slope_secure >= slope_insecure:
            cs = b_secure - adjust
            ci = b_insecure - (anomaly - adjust)
        else:
            ci = b_insecure - adjust
            cs = b_secure - (anomaly - adjust)
        if cs < 1:
            ci -= 1 - cs
            cs = 1
        if ci < 1:
            cs -= 1 - ci
            ci = 1
    return AllocationDecision(cs, ci, r_desired, anomaly, sr, adjust, branch,
                              b_secure, b_insecure, slope_secure, slope_insecure)


def compute_allocation(trend_s: MpkiTrend, trend_i: MpkiTrend, n: int) -> AllocationDecision:
    if n < 2:
        raise ConfigurationError("need at least two cores to form two clusters")
    ps = region_points(trend_s, n)
    pi = region_points(trend_i, n)
    return allocate_from_points(ps.point_b, pi.point_b, ps.linear_slope, pi.linear_slope, n)


def aggregate_mpki(trend_s: MpkiTrend, trend_i: MpkiTrend, cores_secure: int, n: int) -> float:
    return trend_s.at(cores_secure) + trend_i.at(n - cores_secure)


def exhaustive_optimal(trend_s: MpkiTrend, trend_i: MpkiTrend, n: int) -> tuple[int, int]:
    """Every split with both sides non-empty; ties go to the larger secure share."""
    best_c, best_v = None, math.inf
    for c in range(1, n):
        v = trend_s.at(c) + trend_i.at(n - c)
        if v <= best_v:
            best_c, best_v = c, v
    return best_c, n - best_c


def synthetic_three_region(rng: random.Random, n: int = 64) -> MpkiTrend:
    """A per-integer trend with a steep head, a linear middle and a flat tail.

    Region bounds and slopes are drawn so every segment sits clearly inside its
    band (>0.5, 0.1-0.5, <0.1 on doubly-normalized axes).
    """
    while True:
        a = rng.randint(3, n // 3)
        b = rng.randint(a + 4, min(n - 4, a + n // 2))
        lin = rng.uniform(0.15, 0.45)
        sat = rng.uniform(0.0, 0.06)
        floor = rng.uniform(0.02, 0.3)
        p = rng.uniform(1.0, 3.0)
        knee = rng.uniform(0.6, 1.0)
        head = [(a - 1 - j) / max(a - 2, 1) for j in range(1, a)]
        budget = (1 - floor) * n - lin * (b - a) - sat * (n - b)
        extra = budget - knee * (a - 1)
        if extra <= 0:
            continue
        scale = extra / sum(h ** p for h in head) if sum(h ** p for h in head) > 0 else 0
        slopes = [knee + scale * h ** p for h in head]
        slopes += [lin] * (b - a) + [sat] * (n - b)
        if max(slopes[: a - 1]) > 12 or scale <= 0:
            continue
        vals = [floor]
        for s in reversed(slopes):
            vals.append(vals[-1] + s / n)
        vals.reverse()
        top = vals[0]
        return MpkiTrend(tuple((c + 1, v / top) for c, v in enumerate(vals)))
