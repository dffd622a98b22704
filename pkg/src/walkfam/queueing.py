"""Workload queues fed by simultaneous signed batch arrivals.

All d classes arrive together on a rate-1 Poisson clock.  A positive
arrival of class i adds its batch to the workload; a negative arrival
removes work, and when it exceeds the workload present the remainder is
reflected: the new workload is the unserved excess.  Class i batch sizes
are the sign-conditioned magnitudes of the walk increment law, so the
workload vector reproduces the reflected walk coordinate-by-coordinate.
"""

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, InvalidParameterError, UnsupportedModeError
from .families import ScaledMember, split_signed
from .rng import BATCH_SIZE
from .walker import _map_batches

__all__ = [
    "QueueState",
    "ArrivalBatch",
    "arrival_update",
    "simulate_queue",
    "workloads_at_arrival",
    "workloads_at_clock",
    "workloads_from_increments",
    "write_queue_csv",
]


@dataclass(frozen=True)
class QueueState:
    """Workload vector plus arrival counter and clock time."""

    workloads: tuple
    arrivals: int = 0
    clock: float = 0.0

    @property
    def dimension(self):
        return len(self.workloads)


@dataclass(frozen=True)
class ArrivalBatch:
    """One arrival epoch: per-class signs (+1 / -1) and batch sizes."""

    signs: tuple
    sizes: tuple
    interarrival: float = 0.0

    def __post_init__(self):
        if len(self.signs) != len(self.sizes):
            raise InvalidParameterError("signs and sizes must align")
        for s, b in zip(self.signs, self.sizes):
            if s not in (1, -1):
                raise InvalidParameterError(f"sign must be +-1, got {s}")
            if b < 0:
                raise InvalidParameterError(f"batch size must be nonnegative, got {b}")
            if s == -1 and b == 0:
                raise InvalidParameterError("negative arrival needs positive size")


def arrival_update(state, batch):
    """Apply one arrival.

    Positive class: workload grows by the batch.  Negative class: the
    batch removes work; if it exceeds what is present, the unserved
    excess becomes the new workload.
    """
    if len(batch.signs) != state.dimension:
        raise InvalidParameterError("batch dimension mismatch")
    new = []
    for w, s, b in zip(state.workloads, batch.signs, batch.sizes):
        if w < 0:
            raise InvalidParameterError("workload must be nonnegative")
        if s == 1:
            new.append(w + b)
        elif w >= b:
            new.append(w - b)
        else:
            new.append(b - w)
    return QueueState(workloads=tuple(new), arrivals=state.arrivals + 1,
                      clock=state.clock + batch.interarrival)


class _CoordinateSampler:
    """Sign/size draws for one class, integer sizes in gcd units."""

    def __init__(self, law, strict):
        split = split_signed(law)
        if strict and split.p_plus != Fraction(1, 2):
            raise ConfigError(
                "strict mode needs equally likely signs (and equal batch "
                f"means); this law has p_plus = {split.p_plus}")
        self.p_plus = float(split.p_plus)
        support = split.positive_support()
        from .families import rational_gcd
        self.unit = rational_gcd(support)
        self.b_vals, self.b_cum = self._table(split.b_pmf)
        self.bt_vals, self.bt_cum = self._table(split.bt_pmf)

    def _table(self, pmf):
        vals = sorted(pmf.keys())
        ints = np.array([int(v / self.unit) for v in vals], dtype=np.int64)
        cum = np.cumsum([float(pmf[v]) for v in vals])
        cum[-1] = 1.0
        return ints, cum

    def draw(self, rng, n):
        """Signed size deltas (positive => add, negative => remove)."""
        sign_plus = rng.random(n) < self.p_plus
        ib = np.searchsorted(self.b_cum, rng.random(n), side="right")
        ib = np.minimum(ib, len(self.b_vals) - 1)
        it = np.searchsorted(self.bt_cum, rng.random(n), side="right")
        it = np.minimum(it, len(self.bt_vals) - 1)
        return np.where(sign_plus, self.b_vals[ib], -self.bt_vals[it])


def _samplers(member, strict):
    if not isinstance(member, ScaledMember) or not member.is_lattice:
        raise UnsupportedModeError("queue simulation needs a lattice member")
    return [_CoordinateSampler(law, strict) for law in member.laws]


def simulate_queue(member, n_arrivals, n_paths, seed, *, strict=False,
                   record_trajectory=False, threads=1, batch_size=BATCH_SIZE):
    """Simulate workload paths over a fixed number of arrivals.

    In strict mode signs are required to be equally likely (the published
    model assumption, equivalent to equal positive / negative batch
    means); otherwise the sign probability of the increment law is used.
    Returns final workloads (n_paths, d) in real units; with
    ``record_trajectory`` also (workloads over epochs, clock times).
    """
    samplers = _samplers(member, strict)
    d = member.dimension
    units = np.array([float(s.unit) for s in samplers])

    def worker(start, stop, rng):
        n = stop - start
        w = np.zeros((n, d), dtype=np.int64)
        traj = clocks = None
        if record_trajectory:
            traj = np.zeros((n, n_arrivals + 1, d))
            clocks = np.zeros((n, n_arrivals + 1))
        clock = np.zeros(n)
        for j in range(1, n_arrivals + 1):
            clock += rng.exponential(1.0, n)
            for i, smp in enumerate(samplers):
                w[:, i] = np.abs(w[:, i] + smp.draw(rng, n))
            if record_trajectory:
                traj[:, j, :] = w * units
                clocks[:, j] = clock
        if record_trajectory:
            return w * units, traj, clocks
        return w * units

    results = _map_batches(worker, seed, n_paths, threads, batch_size)
    if record_trajectory:
        return (np.concatenate([r[0] for r in results]),
                np.concatenate([r[1] for r in results]),
                np.concatenate([r[2] for r in results]))
    return np.concatenate(results)


def workloads_at_arrival(member, j, n_paths, seed, *, strict=False, threads=1):
    """Workload vectors right after the j-th arrival."""
    return simulate_queue(member, j, n_paths, seed, strict=strict,
                          threads=threads)


def workloads_at_clock(member, t, n_paths, seed, *, strict=False, threads=1,
                       batch_size=BATCH_SIZE):
    """Workload vectors at clock time t (arrival counts are Poisson(t))."""
    samplers = _samplers(member, strict)
    d = member.dimension
    units = np.array([float(s.unit) for s in samplers])

    def worker(start, stop, rng):
        n = stop - start
        counts = rng.poisson(float(t), n)
        w = np.zeros((n, d), dtype=np.int64)
        for j in range(1, int(counts.max()) + 1 if n else 0):
            active = counts >= j
            for i, smp in enumerate(samplers):
                delta = smp.draw(rng, n)
                w[active, i] = np.abs(w[active, i] + delta[active])
        return w * units

    return np.concatenate(_map_batches(worker, seed, n_paths, threads,
                                       batch_size))


def workloads_from_increments(increments):
    """Workloads driven by given signed increments (coupling construction).

    ``increments`` has shape (paths, steps, d); entry x >= 0 is a positive
    arrival with batch x, x < 0 a negative arrival with batch -x.  Applies
    the queue update rule literally, branch by branch.
    """
    inc = np.asarray(increments)
    n, steps, d = inc.shape
    w = np.zeros((n, d))
    out = np.zeros((n, steps + 1, d))
    for t in range(steps):
        x = inc[:, t, :]
        positive = x >= 0
        ordinary = (~positive) & (w >= -x)
        # remaining case: negative arrival larger than the workload
        w = np.where(positive | ordinary, w + x, -(w + x))
        out[:, t + 1, :] = w
    return out


def write_queue_csv(fileobj, trajectory, clocks, dimension):
    """Write workload trajectories as rows (path, j, clock, W_1..W_d)."""
    writer = csv.writer(fileobj)
    writer.writerow(["path", "j", "clock"]
                    + [f"W_{i + 1}" for i in range(dimension)])
    n_paths, n_epochs, d = trajectory.shape
    for p in range(n_paths):
        for j in range(n_epochs):
            writer.writerow([p, j, repr(float(clocks[p, j]))]
                            + [repr(float(x)) for x in trajectory[p, j, :]])
