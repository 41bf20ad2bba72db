"""
Event-driven single-server queue under preemptive SRPT (or nonpreemptive FIFO).

The state descriptor is the multiset of residual processing times. Between
events the job in service loses residual at rate one. Events are, in the
order they are processed at equal times: completion, crossing of a tracked
level by the job in service, arrival, grid observation. Crossing events make
the busy-period clocks tau(t, x) exact.
"""

import heapq
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.paths import DisciplineKind, EventRecord, RawPath, ThresholdSeries

logger = logging.getLogger(__name__)

COMPLETION_TOLERANCE = 1e-12
GRID_RTOL = 1e-12
INF = math.inf


class JobSet:
    """
    Ordered multiset of (residual, seq). The job in service is held apart from
    the waiting heap; only its residual changes between events.
    """

    def __init__(self, discipline: DisciplineKind = DisciplineKind.SRPT):
        self.discipline = DisciplineKind(discipline)
        self._waiting: List[Tuple[float, float]] = []
        self.served_residual: Optional[float] = None
        self.served_seq: int = -1
        self.total_count = 0
        self.total_work = 0.0
        self._next_seq = 0

    def _key(self, residual: float, seq: int) -> Tuple[float, float]:
        if self.discipline == DisciplineKind.SRPT:
            return (residual, seq)
        return (seq, residual)

    def _unkey(self, key: Tuple[float, float]) -> Tuple[float, int]:
        if self.discipline == DisciplineKind.SRPT:
            return key[0], int(key[1])
        return key[1], int(key[0])

    def set_discipline(self, discipline: DisciplineKind) -> None:
        entries = [self._unkey(k) for k in self._waiting]
        self.discipline = DisciplineKind(discipline)
        self._waiting = [self._key(res, seq) for res, seq in entries]
        heapq.heapify(self._waiting)

    def add(self, residual: float) -> int:
        """Insert a waiting job; returns its sequence number."""
        if residual <= 0:
            raise ValueError(f"JobSet.add: residual must be positive, got {residual}")
        seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._waiting, self._key(residual, seq))
        self.total_count += 1
        self.total_work += residual
        return seq

    def arrive(self, size: float) -> int:
        """Insert an arriving job and apply the discipline's preemption rule."""
        seq = self.add(size)
        if self.served_residual is None:
            self.start_next()
        elif (self.discipline == DisciplineKind.SRPT
              and (size, seq) < (self.served_residual, self.served_seq)):
            heapq.heappush(self._waiting, self._key(self.served_residual, self.served_seq))
            heapq.heappop(self._waiting)  # the arrival itself is the minimum
            self.served_residual, self.served_seq = size, seq
        return seq

    def start_next(self) -> bool:
        if self.served_residual is not None or not self._waiting:
            return False
        self.served_residual, self.served_seq = self._unkey(heapq.heappop(self._waiting))
        return True

    def advance(self, dt: float) -> None:
        self.served_residual -= dt
        self.total_work -= dt

    def snap(self, level: float) -> None:
        self.total_work += level - self.served_residual
        self.served_residual = level

    def complete(self) -> int:
        seq = self.served_seq
        self.total_work -= self.served_residual
        self.total_count -= 1
        self.served_residual = None
        self.served_seq = -1
        if self.total_count == 0:
            self.total_work = 0.0
        return seq

    def residuals(self) -> np.ndarray:
        idx = 0 if self.discipline == DisciplineKind.SRPT else 1
        out = np.fromiter((k[idx] for k in self._waiting), dtype=float, count=len(self._waiting))
        if self.served_residual is not None:
            out = np.append(out, self.served_residual)
        return out

    def recompute(self) -> Tuple[int, float]:
        res = self.residuals()
        return int(res.size), math.fsum(res)

    def __len__(self) -> int:
        return self.total_count


@dataclass
class ThresholdTracker:
    """Busy-period clock of the region [0, x] with snapshots taken at tau."""
    x: float
    tau: float = 0.0
    count_in: int = 0
    vx: float = 0.0
    work_tau: float = 0.0
    count_tau: int = 0
    vx_tau: float = 0.0
    vx_tau_minus: float = 0.0
    e_tau_minus: int = 0

    def enter(self, now: float, amount: float, vx_before: float, vx_after: float, e_before: int) -> None:
        if self.count_in == 0:
            self.tau = now
            self.work_tau = 0.0
            self.count_tau = 0
            self.vx_tau_minus = vx_before
            self.e_tau_minus = e_before
        if self.tau == now:
            self.work_tau += amount
            self.count_tau += 1
            self.vx_tau = vx_after
        self.count_in += 1

    def theta(self, now: float) -> float:
        return 0.0 if self.count_in == 0 else now - self.tau


class _Recorder:
    def __init__(self, n: int, xs: Sequence[float]):
        self.q = np.zeros(n, dtype=np.int64)
        self.w = np.zeros(n)
        self.e = np.zeros(n, dtype=np.int64)
        self.busy = np.zeros(n)
        self.arrived = np.zeros(n)
        self.per_x = {x: {
            "count_in": np.zeros(n, dtype=np.int64), "work_in": np.zeros(n), "weighted_in": np.zeros(n),
            "vx": np.zeros(n), "tau": np.zeros(n), "work_tau": np.zeros(n),
            "count_tau": np.zeros(n, dtype=np.int64), "vx_tau": np.zeros(n),
            "vx_tau_minus": np.zeros(n), "e_tau_minus": np.zeros(n, dtype=np.int64),
        } for x in xs}


class SrptEngine:
    def __init__(self, discipline: DisciplineKind = DisciplineKind.SRPT,
                 thresholds: Iterable[float] = (), record_events: bool = False):
        self.discipline = DisciplineKind(discipline)
        self.thresholds = list(dict.fromkeys(float(x) for x in thresholds))
        if any(x < 0 for x in self.thresholds):
            raise ValueError("SrptEngine: thresholds must be nonnegative")
        self.record_events = record_events

    def simulate(self, jobs: JobSet, arrival_times: np.ndarray, sizes: np.ndarray,
                 grid: np.ndarray) -> RawPath:
        jobs.set_discipline(self.discipline)
        grid = np.asarray(grid, dtype=float)
        times = [float(t) for t in arrival_times]
        job_sizes = [float(s) for s in sizes]
        n_grid = len(grid)
        rec = _Recorder(n_grid, self.thresholds)
        events: Optional[List[EventRecord]] = [] if self.record_events else None

        initial = np.sort(jobs.residuals())
        trackers = []
        work_initial = {}
        count_initial = {}
        for x in self.thresholds:
            idx = int(np.searchsorted(initial, x, side="right"))
            tr = ThresholdTracker(x=x, count_in=idx)
            tr.work_tau = math.fsum(initial[:idx])
            tr.count_tau = idx
            trackers.append(tr)
            work_initial[x] = tr.work_tau
            count_initial[x] = idx
        # crossing levels; each positive threshold maps to its tracker
        levels = sorted(x for x in self.thresholds if x > 0)
        level_tracker = {tr.x: tr for tr in trackers}
        positive = [tr for tr in trackers if tr.x > 0]

        now = 0.0
        i = 0
        n_arr = len(times)
        e_count = 0
        busy = 0.0
        arrived = 0.0
        g = 0
        jobs.start_next()

        while g < n_grid:
            t_arr = times[i] if i < n_arr else INF
            t_grid = grid[g]
            res = jobs.served_residual
            t_comp = t_cross = INF
            level = None
            if res is not None:
                t_comp = now + res
                j = bisect_left(levels, res) - 1
                if j >= 0:
                    level = levels[j]
                    t_cross = now + (res - level)
            t_next = min(t_comp, t_cross, t_arr, t_grid)
            if t_next < now:
                raise ValueError(f"SrptEngine: event time {t_next} precedes clock {now}")

            if res is not None:
                dt = t_next - now
                if dt > 0:
                    jobs.advance(dt)
                    busy += dt
            now = t_next

            if res is not None and (t_next == t_comp or jobs.served_residual <= COMPLETION_TOLERANCE):
                seq = jobs.complete()
                for tr in positive:
                    tr.count_in -= 1
                jobs.start_next()
                if events is not None:
                    events.append(EventRecord(now, "completion", seq, 0.0, jobs.total_count, jobs.total_work))
            elif res is not None and t_next == t_cross:
                jobs.snap(level)
                tr = level_tracker[level]
                tr.enter(now, level, tr.vx, tr.vx, e_count)
                if events is not None:
                    events.append(EventRecord(now, "crossing", jobs.served_seq, level, jobs.total_count, jobs.total_work))

            if t_next == t_arr:
                size = job_sizes[i]
                i += 1
                e_before = e_count
                e_count += 1
                arrived += size
                for tr in trackers:
                    if size <= tr.x:
                        vx_before = tr.vx
                        tr.vx = vx_before + size
                        tr.enter(now, size, vx_before, tr.vx, e_before)
                seq = jobs.arrive(size)
                if events is not None:
                    events.append(EventRecord(now, "arrival", seq, size, jobs.total_count, jobs.total_work))

            if t_next == t_grid:
                self._observe(g, now, jobs, trackers, rec, e_count, busy, arrived)
                if events is not None:
                    events.append(EventRecord(now, "grid", -1, jobs.served_residual or 0.0,
                                              jobs.total_count, jobs.total_work))
                g += 1

        series = {}
        for x in self.thresholds:
            cols = rec.per_x[x]
            series[x] = ThresholdSeries(x=x, work_initial=work_initial[x], count_initial=count_initial[x], **cols)
        logger.debug(f"[Engine] {self.discipline.value}: {e_count} arrivals, {n_grid} grid points, clock {now:.6g}")
        return RawPath(
            discipline=self.discipline, times=grid.copy(), q=rec.q, w=rec.w, e=rec.e,
            busy=rec.busy, arrived_work=rec.arrived, thresholds=series, events=events,
        )

    @staticmethod
    def _observe(g, now, jobs, trackers, rec, e_count, busy, arrived):
        res = np.sort(jobs.residuals())
        rec.q[g] = res.size
        rec.w[g] = math.fsum(res)
        rec.e[g] = e_count
        rec.busy[g] = busy
        rec.arrived[g] = arrived
        for tr in trackers:
            cols = rec.per_x[tr.x]
            idx = int(np.searchsorted(res, tr.x, side="right"))
            below = res[:idx]
            cols["count_in"][g] = idx
            cols["work_in"][g] = math.fsum(below)
            cols["weighted_in"][g] = math.fsum(np.maximum(below, 1.0))
            cols["vx"][g] = tr.vx
            if tr.count_in == 0:
                cols["tau"][g] = now
                cols["work_tau"][g] = 0.0
                cols["count_tau"][g] = 0
                cols["vx_tau"][g] = tr.vx
                cols["vx_tau_minus"][g] = tr.vx
                cols["e_tau_minus"][g] = e_count
            else:
                cols["tau"][g] = tr.tau
                cols["work_tau"][g] = tr.work_tau
                cols["count_tau"][g] = tr.count_tau
                cols["vx_tau"][g] = tr.vx_tau
                cols["vx_tau_minus"][g] = tr.vx_tau_minus
                cols["e_tau_minus"][g] = tr.e_tau_minus


def _check_grid(grid, horizon: Optional[float] = None) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d sequence of times")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be strictly increasing and nonnegative")
    if horizon is not None and grid[-1] > horizon * (1.0 + GRID_RTOL):
        raise ValueError(f"grid extends past horizon {horizon}")
    return grid


def run(cfg, p, discipline: DisciplineKind, horizon: float, grid, thresholds: Iterable[float],
        seed: int, record_events: bool = False) -> RawPath:
    """Simulate one replication of the r-th system from its derived primitive streams."""
    from backend.utils.seeding import ARRIVAL_STREAM, SIZE_STREAM, derive_seed
    from services.htseq_service import arrival_stream, initial_condition

    if horizon <= 0:
        raise ValueError(f"run: horizon must be positive, got {horizon}")
    grid = _check_grid(grid, horizon)
    times, sizes = arrival_stream(p, cfg, horizon, derive_seed(seed, ARRIVAL_STREAM), derive_seed(seed, SIZE_STREAM))
    jobs = initial_condition(p, cfg)
    engine = SrptEngine(discipline, thresholds, record_events=record_events)
    return engine.simulate(jobs, times, sizes, grid)


def inject_trace(arrivals: Sequence[Tuple[float, float]], discipline: DisciplineKind, grid,
                 thresholds: Iterable[float], jobs: Optional[JobSet] = None,
                 record_events: bool = False) -> RawPath:
    """Run the engine on supplied (time, size) primitives."""
    times = np.array([a[0] for a in arrivals], dtype=float)
    sizes = np.array([a[1] for a in arrivals], dtype=float)
    if times.size and (np.any(np.diff(times) <= 0) or times[0] < 0):
        raise ValueError("inject_trace: arrival times must be nonnegative and strictly increasing")
    if np.any(sizes <= 0):
        raise ValueError("inject_trace: job sizes must be positive")
    engine = SrptEngine(discipline, thresholds, record_events=record_events)
    return engine.simulate(jobs or JobSet(), times, sizes, _check_grid(grid))


def theta_at(path: RawPath, t: float, x: float) -> float:
    """Physical time elapsed since [0, x] was last empty."""
    ser = path.series(x)
    idx = path.grid_index(t)
    return float(path.times[idx] - ser.tau[idx])


def _require_srpt(path: RawPath, what: str) -> None:
    if path.discipline != DisciplineKind.SRPT:
        raise ValueError(f"{what}: unsupported for discipline {path.discipline.value}")


def balance_residual(path: RawPath, s: Optional[float], t: float, x: float) -> float:
    """
    work_in(t) - work_in(tau+) - (V_x(t) - V_x(tau)) + (t - tau): the exact
    truncated-workload balance over (tau, t]. Zero up to rounding under SRPT.
    s is checked against the recorded tau(t, x); pass None to use it as is.
    """
    _require_srpt(path, "balance_residual")
    ser = path.series(x)
    idx = path.grid_index(t)
    tau = ser.tau[idx]
    if s is not None and abs(s - tau) > 1e-12 * max(1.0, abs(tau)):
        raise ValueError(f"balance_residual: s={s} is not the recorded tau={tau}")
    return float((ser.work_in[idx] - ser.work_tau[idx]) - (ser.vx[idx] - ser.vx_tau[idx])
                 + (path.times[idx] - tau))


def timetau_residual(path: RawPath, t: float, x: float) -> float:
    """Slack of work_in(tau+) <= work_in(0) + (V_x(tau) - V_x(tau-)) + x. Nonnegative."""
    ser = path.series(x)
    idx = path.grid_index(t)
    return float(ser.work_initial + (ser.vx_tau[idx] - ser.vx_tau_minus[idx]) + x - ser.work_tau[idx])


def rep_work_below_x_residual(path: RawPath, t: float, x: float) -> float:
    """Slack of work_in(t) <= work_in(0) + V_x(t) - V_x(tau-) - (t - tau) + x. Nonnegative under SRPT."""
    _require_srpt(path, "rep_work_below_x_residual")
    ser = path.series(x)
    idx = path.grid_index(t)
    return float(ser.work_initial + (ser.vx[idx] - ser.vx_tau_minus[idx])
                 - (path.times[idx] - ser.tau[idx]) + x - ser.work_in[idx])


def queue_rep_residual(path: RawPath, t: float, x: float) -> float:
    """Slack of count_in(t) <= count_in(0) + (E(t) - E(tau-)) + 1. Nonnegative under SRPT."""
    _require_srpt(path, "queue_rep_residual")
    ser = path.series(x)
    idx = path.grid_index(t)
    return float(ser.count_initial + (path.e[idx] - ser.e_tau_minus[idx]) + 1 - ser.count_in[idx])


def workload_balance_residual(path: RawPath, i: int, j: int) -> float:
    """W(t_j) - W(t_i) - arrived work in (t_i, t_j] + busy time in (t_i, t_j]."""
    return float(path.w[j] - path.w[i] - (path.arrived_work[j] - path.arrived_work[i])
                 + (path.busy[j] - path.busy[i]))
