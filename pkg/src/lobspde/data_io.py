"""Order-book snapshot files, uniform resampling and average profiles.

Snapshot rows follow the LOBSTER orderbook layout: for each level ``1..k`` the
four columns ``ask_price, ask_size, bid_price, bid_size``.  Prices are held as
integers in units of 1e-4 dollars; a price token containing a decimal point is
read as dollars.  Empty levels carry the dummy prices ``+-9999999999`` with
size 0.  Timestamps are seconds after midnight, held as integer nanoseconds.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from .estimation import DepthSeries
from .sde_core import TimeGrid

PRICE_SCALE = 10_000
NS = 1_000_000_000
DUMMY_ASK = 9_999_999_999
DUMMY_BID = -9_999_999_999

TimeSource = Literal["column", "message", "index"]
PriceFormat = Literal["int", "dollars"]


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RawSnapshot:
    timestamp_ns: int
    ask_prices: np.ndarray
    ask_sizes: np.ndarray
    bid_prices: np.ndarray
    bid_sizes: np.ndarray

    @property
    def timestamp(self) -> float:
        return self.timestamp_ns / NS

    @property
    def levels(self) -> int:
        return self.ask_prices.size

    @property
    def best_ask(self) -> int:
        return int(self.ask_prices[0])

    @property
    def best_bid(self) -> int:
        return int(self.bid_prices[0])

    @property
    def mid(self) -> float:
        """Mid-price in dollars."""
        return 0.5 * (self.best_ask + self.best_bid) / PRICE_SCALE

    def validate(self) -> Optional[str]:
        """Reason the snapshot violates the book invariants, or ``None``."""
        if np.any(self.ask_sizes < 0) or np.any(self.bid_sizes < 0):
            return "negative size"
        ask = self.ask_prices[self.ask_prices != DUMMY_ASK]
        bid = self.bid_prices[self.bid_prices != DUMMY_BID]
        if ask.size == 0 or bid.size == 0:
            return "empty side"
        if np.any(np.diff(ask) <= 0):
            return "ask prices not increasing"
        if np.any(np.diff(bid) >= 0):
            return "bid prices not decreasing"
        if ask[0] <= bid[0]:
            return "crossed book"
        return None


@dataclass(frozen=True, eq=False)
class ParseResult:
    snapshots: list[RawSnapshot]
    skipped: list[tuple[int, str]]
    total: int
    price_format: PriceFormat
    time_source: TimeSource

    @property
    def parsed(self) -> int:
        return len(self.snapshots)


def _parse_price(tok: str) -> tuple[int, bool]:
    tok = tok.strip()
    if "." in tok or "e" in tok.lower():
        return int((Decimal(tok) * PRICE_SCALE).to_integral_value()), True
    return int(tok), False


def _parse_time_ns(tok: str) -> int:
    return int((Decimal(tok.strip()) * NS).to_integral_value())


def _format_time(ns: int) -> str:
    return f"{ns // NS}.{ns % NS:09d}"


def _format_price(p: int, fmt: PriceFormat) -> str:
    if fmt == "int" or p in (DUMMY_ASK, DUMMY_BID):
        return str(p)
    d = (Decimal(p) / PRICE_SCALE).normalize()
    s = format(d, "f")
    return s if "." in s else s + ".0"


def _format_size(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def parse_orderbook_file(path, k: int, *, time_source: TimeSource = "column",
                         message_path=None, index_dt: float = 1.0) -> ParseResult:
    """Parse a snapshot file with ``k`` levels.

    ``time_source``: ``"column"`` reads the timestamp from an extra first
    column, ``"message"`` from the first column of a companion message file
    (one line per snapshot row) and ``"index"`` uses ``row * index_dt``.
    Rows that fail to parse or violate the book invariants are skipped and
    reported with their 1-based line number; ``parsed + skipped == total``.
    """
    if k < 1:
        raise ValueError("need at least one level")
    msg_times = None
    if time_source == "message":
        if message_path is None:
            raise ValueError("message time source needs message_path")
        with open(message_path, newline="") as fh:
            msg_times = [row[0] for row in csv.reader(fh) if row]
    elif time_source not in ("column", "index"):
        raise ValueError(f"unknown time source {time_source!r}")
    n_cols = 4 * k + (1 if time_source == "column" else 0)
    snaps, skipped = [], []
    dollars_seen = None
    total = 0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            total += 1
            if len(row) != n_cols:
                skipped.append((lineno, f"expected {n_cols} columns, got {len(row)}"))
                continue
            try:
                if time_source == "column":
                    ts = _parse_time_ns(row[0])
                    body = row[1:]
                elif time_source == "message":
                    ts = _parse_time_ns(msg_times[total - 1])
                    body = row
                else:
                    ts = int(round((total - 1) * index_dt * NS))
                    body = row
                prices, dollars = zip(*(_parse_price(t) for t in body[0::2]))
                sizes = [float(t) for t in body[1::2]]
            except (ValueError, InvalidOperation, IndexError) as exc:
                skipped.append((lineno, f"unparseable field: {exc}"))
                continue
            if dollars_seen is None:
                dollars_seen = any(dollars)
            pr = np.array(prices, dtype=np.int64)
            sz = np.array(sizes)
            snap = RawSnapshot(ts, pr[0::2], sz[0::2], pr[1::2], sz[1::2])
            reason = snap.validate()
            if reason is not None:
                skipped.append((lineno, reason))
                continue
            snaps.append(snap)
    if skipped:
        warnings.warn(f"{len(skipped)} of {total} rows skipped (first at line "
                      f"{skipped[0][0]}: {skipped[0][1]})", RuntimeWarning, stacklevel=2)
    if total and not snaps:
        raise DataError(f"no valid rows in {path}")
    return ParseResult(snaps, skipped, total, "dollars" if dollars_seen else "int", time_source)


def write_orderbook_file(path, snapshots: Iterable[RawSnapshot], *, price_format: PriceFormat = "int",
                         with_time: bool = True) -> None:
    """Write snapshots in the layout read by :func:`parse_orderbook_file`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for s in snapshots:
            row = [_format_time(s.timestamp_ns)] if with_time else []
            for j in range(s.levels):
                row += [_format_price(int(s.ask_prices[j]), price_format), _format_size(s.ask_sizes[j]),
                        _format_price(int(s.bid_prices[j]), price_format), _format_size(s.bid_sizes[j])]
            w.writerow(row)


def _level_depth(sizes: np.ndarray, k: int) -> float:
    return float(np.mean(sizes[:k]))


def resample(snapshots: Sequence[RawSnapshot], dt: float, k_depth: int = 2,
             t0: Optional[float] = None, t_end: Optional[float] = None) -> DepthSeries:
    """Last-observation-carried-forward sampling on a uniform grid.

    Depth is the mean size over the first ``k_depth`` levels of each side and
    the mid-price is the average of the best quotes, in dollars.
    """
    if not snapshots:
        raise DataError("no snapshots to resample")
    if dt <= 0:
        raise ValueError("dt must be positive")
    ts = np.array([s.timestamp_ns for s in snapshots], dtype=np.int64)
    if np.any(np.diff(ts) < 0):
        raise DataError("snapshots are not time-sorted")
    dt_ns = int(round(dt * NS))
    start = ts[0] if t0 is None else int(round(t0 * NS))
    stop = ts[-1] if t_end is None else int(round(t_end * NS))
    if start < ts[0]:
        raise DataError("grid starts before the first snapshot")
    n = (stop - start) // dt_ns
    if n < 1:
        raise DataError("resampling interval shorter than one step")
    grid_ns = start + dt_ns * np.arange(n + 1, dtype=np.int64)
    idx = np.searchsorted(ts, grid_ns, side="right") - 1
    d_b = np.array([_level_depth(s.bid_sizes, k_depth) for s in snapshots])[idx]
    d_a = np.array([_level_depth(s.ask_sizes, k_depth) for s in snapshots])[idx]
    mid = np.array([s.mid for s in snapshots])[idx]
    if np.any(d_b <= 0) or np.any(d_a <= 0):
        raise DataError("zero depth at a sampling point")
    return DepthSeries(TimeGrid(start / NS, dt_ns / NS, int(n)), d_b, d_a, mid)


@dataclass
class ProfileAccumulator:
    """Running per-tick size sums for each side, relative to the same-side best price."""

    n_ticks: int
    tick: int = 100
    window: tuple[float, float] = (-math.inf, math.inf)
    bid_sum: np.ndarray = field(init=False)
    ask_sum: np.ndarray = field(init=False)
    count: int = 0

    def __post_init__(self):
        self.bid_sum = np.zeros(self.n_ticks)
        self.ask_sum = np.zeros(self.n_ticks)

    def add(self, s: RawSnapshot) -> bool:
        if not self.window[0] <= s.timestamp < self.window[1]:
            return False
        for prices, sizes, total, sign, best in (
                (s.ask_prices, s.ask_sizes, self.ask_sum, 1, s.best_ask),
                (s.bid_prices, s.bid_sizes, self.bid_sum, -1, s.best_bid)):
            live = sizes > 0
            j = sign * (prices[live] - best) // self.tick
            keep = (j >= 0) & (j < self.n_ticks)
            np.add.at(total, j[keep], sizes[live][keep])
        self.count += 1
        return True

    def mean(self) -> tuple[np.ndarray, np.ndarray]:
        if self.count == 0:
            raise DataError("empty profile window")
        return self.bid_sum / self.count, self.ask_sum / self.count


@dataclass(frozen=True, eq=False)
class AverageProfile:
    ticks: np.ndarray
    x: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    count: int

    def side(self, name: str) -> np.ndarray:
        return self.bid if name == "bid" else self.ask


def average_profile(snapshots: Iterable[RawSnapshot], window: Optional[tuple[float, float]] = None,
                    scaling_exponent_a: float = 1.0, n_ticks: int = 20, tick: int = 100
                    ) -> AverageProfile:
    """Time-averaged size per tick distance ``1..n_ticks`` from the same-side best price.

    ``x = ticks ** scaling_exponent_a`` is the power-scaled coordinate.
    """
    acc = ProfileAccumulator(n_ticks, tick, window or (-math.inf, math.inf))
    for s in snapshots:
        acc.add(s)
    bid, ask = acc.mean()
    ticks = np.arange(1, n_ticks + 1)
    return AverageProfile(ticks, ticks.astype(float) ** scaling_exponent_a, bid, ask, acc.count)


def write_profile_csv(path, prof: AverageProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick", "x", "mean_size_bid", "mean_size_ask"])
        for row in zip(prof.ticks, prof.x, prof.bid, prof.ask):
            w.writerow([int(row[0])] + [f"{v:.17g}" for v in row[1:]])


def read_profile_csv(path) -> AverageProfile:
    arr = _read_numeric(path, ["tick", "x", "mean_size_bid", "mean_size_ask"])
    return AverageProfile(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3], 0)


def write_depth_csv(path, series: DepthSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["time_s", "d_bid", "d_ask"] + (["mid_price"] if series.has_price else [])
        w.writerow(cols)
        data = [series.grid.times, series.d_b, series.d_a]
        if series.has_price:
            data.append(series.s)
        for row in zip(*data):
            w.writerow([f"{v:.17g}" for v in row])


def _read_numeric(path, required: list[str]) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path} lacks columns {missing}")
    cols = [header.index(c) for c in required]
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append([float(row[c]) for c in cols])
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise DataError(f"{path} has no data rows")
    return np.array(out)


def read_depth_csv(path) -> DepthSeries:
    """Read ``time_s,d_bid,d_ask[,mid_price]``; the time column must be uniform."""
    with open(path, newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    has_mid = "mid_price" in header
    arr = _read_numeric(path, ["time_s", "d_bid", "d_ask"] + (["mid_price"] if has_mid else []))
    t = arr[:, 0]
    if t.size < 2:
        raise DataError("depth series needs at least 2 rows")
    d = np.diff(t)
    dt = float(np.median(d))
    if dt <= 0 or not np.allclose(d, dt, rtol=1e-6, atol=1e-9):
        raise DataError("time column is not uniformly spaced")
    try:
        return DepthSeries(TimeGrid(float(t[0]), dt, t.size - 1), arr[:, 1], arr[:, 2],
                           arr[:, 3] if has_mid else None)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def synthetic_snapshots(p, trajectory, rng: np.random.Generator, *, n_levels: int = 20,
                        tick: int = 100, mid0: int = 1_000_000, start_ns: int = 34_200 * NS,
                        step_ns: Optional[int] = None, poisson: bool = True,
                        path_index: int = 0) -> list[RawSnapshot]:
    """Snapshots of a simulated book.

    Level ``j`` of a side sits ``j - 1`` ticks behind the best price of that
    side and holds ``V theta |H_1(x_j)|`` shares with ``x_j = theta j^a`` in price
    units (Poisson-sampled when ``poisson``).  The best quotes straddle the
    simulated mid-price, rounded to the tick grid.
    """
    from .lob_model import principal_pair

    tr = trajectory.path(path_index)
    theta = p.theta
    j = np.arange(1, n_levels + 1)
    xj = theta * j.astype(float) ** p.scaling_exponent_a
    if xj[-1] >= p.L:
        raise ValueError("levels extend beyond the book half-width L")
    hb, ha = principal_pair(p, np.concatenate([-xj[::-1], xj]))
    shape_b = np.abs(hb[:n_levels][::-1]) * theta
    shape_a = np.abs(ha[n_levels:]) * theta
    if step_ns is None:
        step_ns = int(round(trajectory.grid.dt * NS))
    # tick size in 1e-4 dollars corresponds to theta in model price units
    to_int = tick / theta
    out = []
    for k in range(tr.v_a.size):
        mid = mid0 + tr.s[k] * to_int
        best_bid = int(math.floor(mid / tick - 0.5) * tick)
        best_ask = best_bid + tick
        lam_a, lam_b = tr.v_a[k] * shape_a, tr.v_b[k] * shape_b
        size_a = rng.poisson(lam_a).astype(float) if poisson else np.round(lam_a)
        size_b = rng.poisson(lam_b).astype(float) if poisson else np.round(lam_b)
        out.append(RawSnapshot(start_ns + k * step_ns,
                               (best_ask + (j - 1) * tick).astype(np.int64), size_a,
                               (best_bid - (j - 1) * tick).astype(np.int64), size_b))
    return out
