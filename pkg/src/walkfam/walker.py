"""Path simulation for walk families.

Scalar ``step`` / ``reflect_step`` operate on exact rational positions for
lattice members (floats for continuous ones) and are meant for tests and
small traces.  The batch engines keep integer positions in the member's
common lattice unit and stream over time, so millions of paths fit in
memory; they draw from counter-based per-batch streams (see rng.py), which
makes results independent of threading.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidParameterError, UnsupportedModeError
from .families import KlebanerFamily, ScaledMember, SymmetricFamily
from .rng import BATCH_SIZE, batch_streams

__all__ = [
    "WalkState",
    "HittingRecord",
    "HittingRecords",
    "step",
    "reflect_step",
    "norm",
    "simulate_paths",
    "norms_at",
    "record_hittings",
    "write_paths_csv",
]

TRAJECTORY_ELEMENT_LIMIT = 200_000_000


@dataclass(frozen=True)
class WalkState:
    """Position (tuple of coordinates) and integer time."""

    position: tuple
    time: int = 0

    @property
    def dimension(self):
        return len(self.position)


def norm(state_or_position):
    """l1 norm of a state or raw position tuple."""
    pos = getattr(state_or_position, "position", state_or_position)
    return sum(abs(x) for x in pos)


def _draw_exact(member, rng):
    """One increment vector, exact Fractions for lattice members."""
    if isinstance(member, ScaledMember):
        if member.is_lattice:
            out = []
            for law in member.laws:
                pmf = law.lattice_pmf()
                vals = sorted(pmf.keys())
                cum = np.cumsum([float(pmf[v]) for v in vals])
                idx = int(np.searchsorted(cum, rng.random(), side="right"))
                out.append(vals[min(idx, len(vals) - 1)])
            return tuple(out)
        return tuple(float(law.sample(rng, ())) for law in member.laws)
    if isinstance(member, SymmetricFamily):
        cum = np.cumsum([2 * float(x) for x in member.alphas])
        coord = int(np.searchsorted(cum, rng.random(), side="right"))
        coord = min(coord, member.dimension - 1)
        sign = 1 if rng.random() < 0.5 else -1
        inc = [Fraction(0)] * member.dimension
        inc[coord] = Fraction(sign)
        return tuple(inc)
    raise UnsupportedModeError(f"cannot draw steps for {type(member).__name__}")


def step(state, member, rng):
    """Advance the plain walk one step."""
    if isinstance(member, KlebanerFamily):
        level = state.position[0]
        if level < 0:
            raise InvalidParameterError("level walk state must be nonnegative")
        up = member.up_probability(int(level))
        move = 1 if rng.random() < up else -1
        return WalkState(position=(level + move,), time=state.time + 1)
    inc = _draw_exact(member, rng)
    pos = tuple(x + dx for x, dx in zip(state.position, inc))
    return WalkState(position=pos, time=state.time + 1)


def reflect_step(state, member, rng):
    """Advance the reflected walk: new coordinate = |old + increment|.

    The reflected walk lives in the nonnegative orthant; a negative input
    coordinate is a contract violation.
    """
    if any(x < 0 for x in state.position):
        raise InvalidParameterError(
            f"reflected walk state must be nonnegative, got {state.position}")
    if isinstance(member, KlebanerFamily):
        return step(state, member, rng)
    inc = _draw_exact(member, rng)
    pos = tuple(abs(x + dx) for x, dx in zip(state.position, inc))
    return WalkState(position=pos, time=state.time + 1)


# batch engines --------------------------------------------------------------

def _map_batches(worker, seed, n_paths, threads=1, batch_size=BATCH_SIZE):
    """Run ``worker(start, stop, rng)`` over path batches, in order."""
    batches = list(batch_streams(seed, n_paths, batch_size))
    if threads <= 1 or len(batches) == 1:
        return [worker(*b) for b in batches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, *b) for b in batches]
        return [f.result() for f in futures]


class LatticeStepper:
    """Integer increment sampler in the member's common lattice unit."""

    def __init__(self, member):
        if not member.is_lattice:
            raise UnsupportedModeError("lattice stepper needs a lattice member")
        self.member = member
        self.unit = member.common_unit()
        self.tables = []
        for law in member.laws:
            pmf = law.lattice_pmf()
            vals = sorted(pmf.keys())
            ints = np.array([int(v / self.unit) for v in vals], dtype=np.int64)
            cum = np.cumsum([float(pmf[v]) for v in vals])
            cum[-1] = 1.0
            symmetric_pair = (len(ints) == 2 and ints[0] == -ints[1]
                              and abs(cum[0] - 0.5) < 1e-15)
            self.tables.append((ints, cum, symmetric_pair))

    def units(self, z):
        """Express a norm level in lattice units; error if off-lattice."""
        from .families import as_fraction
        q = as_fraction(z) / self.unit
        if q.denominator != 1:
            raise InvalidParameterError(
                f"level {z} is not on the {self.unit} lattice")
        return int(q)

    def draw(self, rng, n):
        """(n, d) int32 array of one-step increments in lattice units."""
        d = self.member.dimension
        out = np.empty((n, d), dtype=np.int32)
        for i, (ints, cum, sym) in enumerate(self.tables):
            if sym:
                v = int(ints[1])
                out[:, i] = (rng.integers(0, 2, n, dtype=np.int8,
                                          endpoint=False).astype(np.int32) * 2 - 1) * v
            else:
                idx = np.searchsorted(cum, rng.random(n), side="right")
                out[:, i] = ints[np.minimum(idx, len(ints) - 1)]
        return out


class ContinuousStepper:
    """Float increment sampler for continuous members."""

    def __init__(self, member):
        if member.is_lattice:
            raise UnsupportedModeError("continuous stepper needs a continuous member")
        self.member = member
        self.scales = np.array([float(law.scale) for law in member.laws])

    def draw(self, rng, n):
        u = rng.random((n, self.member.dimension))
        return self.member.base.ppf(u) * self.scales


class SymmetricStepper:
    """Sampler for the one-coordinate-at-a-time symmetric walk."""

    def __init__(self, member):
        self.member = member
        self.cum = np.cumsum([2 * float(x) for x in member.alphas])
        self.cum[-1] = 1.0

    def draw(self, rng, n):
        d = self.member.dimension
        coord = np.searchsorted(self.cum, rng.random(n), side="right")
        coord = np.minimum(coord, d - 1)
        signs = rng.integers(0, 2, n, dtype=np.int8).astype(np.int32) * 2 - 1
        out = np.zeros((n, d), dtype=np.int32)
        out[np.arange(n), coord] = signs
        return out


def make_stepper(member):
    if isinstance(member, SymmetricFamily):
        return SymmetricStepper(member)
    if isinstance(member, ScaledMember):
        if member.is_lattice:
            return LatticeStepper(member)
        return ContinuousStepper(member)
    raise UnsupportedModeError(f"no batch stepper for {type(member).__name__}")


def _coordinate_scale(member, stepper):
    """Factor converting engine coordinates back to real values."""
    if isinstance(stepper, LatticeStepper):
        return float(stepper.unit)
    return 1.0


def simulate_paths(member, horizon, n_paths, seed, *, reflected=False,
                   record_trajectory=False, threads=1, batch_size=BATCH_SIZE):
    """Simulate paths from the origin.

    Returns final positions (n_paths, d) in real units; with
    ``record_trajectory`` also the full (n_paths, horizon + 1, d) array,
    refused above a fixed element limit.
    """
    d = member.dimension
    if record_trajectory and (n_paths * (horizon + 1) * d
                              > TRAJECTORY_ELEMENT_LIMIT):
        raise InvalidParameterError(
            "trajectory too large to record; lower paths or horizon")
    stepper = make_stepper(member)
    scale = _coordinate_scale(member, stepper)
    integer = isinstance(stepper, (LatticeStepper, SymmetricStepper))
    dtype = np.int64 if integer else np.float64

    def worker(start, stop, rng):
        n = stop - start
        pos = np.zeros((n, d), dtype=dtype)
        traj = None
        if record_trajectory:
            traj = np.zeros((n, horizon + 1, d), dtype=np.float64)
        for t in range(1, horizon + 1):
            pos += stepper.draw(rng, n)
            if reflected:
                np.abs(pos, out=pos)
            if record_trajectory:
                traj[:, t, :] = pos * scale
        return pos * scale if not record_trajectory else (pos * scale, traj)

    results = _map_batches(worker, seed, n_paths, threads, batch_size)
    if record_trajectory:
        finals = np.concatenate([r[0] for r in results])
        trajs = np.concatenate([r[1] for r in results])
        return finals, trajs
    return np.concatenate(results)


def norms_at(member, horizon, n_paths, seed, *, reflected=False, threads=1):
    """l1 norms at time ``horizon`` without storing trajectories."""
    finals = simulate_paths(member, horizon, n_paths, seed,
                            reflected=reflected, threads=threads)
    return np.abs(finals).sum(axis=1)


@dataclass(frozen=True)
class HittingRecord:
    """Visits of one path to a norm level: times and outward flags."""

    path: int
    times: np.ndarray
    outward: np.ndarray


class HittingRecords:
    """Collection of per-path hitting records for one level."""

    def __init__(self, level, records, horizon, window=None):
        self.level = level
        self.window = window
        self.horizon = horizon
        self.records = records

    def __len__(self):
        return len(self.records)

    def total_visits(self):
        return int(sum(len(r.times) for r in self.records))

    def pooled_outward(self):
        """(fraction, count) over all recorded visits."""
        total = self.total_visits()
        if total == 0:
            return float("nan"), 0
        up = int(sum(r.outward.sum() for r in self.records))
        return up / total, total

    def per_visit_table(self, max_j=None):
        """Rows (j, paths with a j-th visit, outward fraction at visit j)."""
        counts = {}
        ups = {}
        for r in self.records:
            for j, flag in enumerate(r.outward, start=1):
                if max_j is not None and j > max_j:
                    break
                counts[j] = counts.get(j, 0) + 1
                ups[j] = ups.get(j, 0) + int(flag)
        return [(j, counts[j], ups[j] / counts[j]) for j in sorted(counts)]


def record_hittings(member, level, horizon, n_paths, seed, *, window=None,
                    reflected=False, threads=1, batch_size=BATCH_SIZE):
    """Record visits to a norm level and whether the next step left it upward.

    Lattice members hit ``level`` exactly; continuous members need a
    ``window`` half-width and a visit means the norm lies within it.
    The outward flag is a strict norm increase on the following step.
    """
    stepper = make_stepper(member)
    scale = _coordinate_scale(member, stepper)
    integer = isinstance(stepper, (LatticeStepper, SymmetricStepper))
    if integer:
        if isinstance(stepper, LatticeStepper):
            level_units = stepper.units(level)
        else:
            level_units = int(level)
            if level_units != level or level_units < 0:
                raise InvalidParameterError("level must be a nonnegative integer")
        if window is not None:
            raise InvalidParameterError("window applies to continuous members only")
    else:
        if window is None:
            raise InvalidParameterError("continuous member needs a window")
    d = member.dimension
    dtype = np.int64 if integer else np.float64

    def worker(start, stop, rng):
        n = stop - start
        pos = np.zeros((n, d), dtype=dtype)
        nrm = np.zeros(n, dtype=dtype)
        hits_t = [[] for _ in range(n)]
        hits_up = [[] for _ in range(n)]
        for t in range(1, horizon + 1):
            pos += stepper.draw(rng, n)
            if reflected:
                np.abs(pos, out=pos)
            new_nrm = np.abs(pos).sum(axis=1)
            if integer:
                mask = nrm == level_units
            else:
                mask = np.abs(nrm - float(level)) <= float(window)
            if t > 1 and mask.any():
                idx = np.nonzero(mask)[0]
                up = new_nrm[idx] > nrm[idx]
                for i, u in zip(idx, up):
                    hits_t[i].append(t - 1)
                    hits_up[i].append(bool(u))
            nrm = new_nrm
        return [
            HittingRecord(path=start + i,
                          times=np.array(hits_t[i], dtype=np.int64),
                          outward=np.array(hits_up[i], dtype=bool))
            for i in range(n)
        ]

    chunks = _map_batches(worker, seed, n_paths, threads, batch_size)
    records = [r for chunk in chunks for r in chunk]
    return HittingRecords(level=level, records=records, horizon=horizon,
                          window=window)


def write_paths_csv(fileobj, trajectory, dimension):
    """Write trajectories as rows (path, t, coord_1.., norm)."""
    writer = csv.writer(fileobj)
    writer.writerow(["path", "t"] + [f"coord_{i + 1}" for i in range(dimension)]
                    + ["norm"])
    n_paths, n_times, d = trajectory.shape
    for p in range(n_paths):
        for t in range(n_times):
            coords = trajectory[p, t, :]
            writer.writerow([p, t] + [repr(float(c)) for c in coords]
                            + [repr(float(np.abs(coords).sum()))])
