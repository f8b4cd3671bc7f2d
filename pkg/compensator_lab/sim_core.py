"""Raw stochastic ingredients: Brownian paths, local time at zero, clocks, Poisson jump times and time changes.

Every simulation reads its randomness from a stream derived from `(master_seed, path index)` so per-path results do
not depend on how many paths ran before or on how many threads evaluate them.

"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .lab_helpers import LOGGER, GridError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time axis `t_i = i * step()` for `i = 0..n_steps`."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise GridError(f'Expected positive horizon. Found: {self.horizon}')
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise GridError(f'Expected integer n_steps >= 2. Found: {self.n_steps}')

    def step(self):
        """Return the grid spacing."""  # noqa: DAR201
        return self.horizon / self.n_steps

    def times(self):
        """Return the grid points as an array of length `n_steps + 1`."""  # noqa: DAR201
        return np.arange(self.n_steps + 1) * self.step()

    def index_of(self, t):
        """Return the nearest grid index for time `t`, clipped to the grid.

        Args:
            t: time

        Returns:
            int: grid index

        """
        return int(min(max(round(t / self.step()), 0), self.n_steps))

    def snap(self, t):
        """Return the grid time nearest to `t`."""  # noqa: DAR101,DAR201
        return self.index_of(t) * self.step()

    def truncated(self, n_steps):
        """Return the grid restricted to its first `n_steps` steps.

        Args:
            n_steps: number of steps to keep

        Returns:
            TimeGrid: grid with the same step and horizon `n_steps * step()`

        """
        return TimeGrid(horizon=n_steps * self.step(), n_steps=n_steps)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Real-valued path on a time grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_steps + 1,):
            raise GridError(f'Expected {self.grid.n_steps + 1} values. Found shape: {values.shape}')
        object.__setattr__(self, 'values', values)

    def at(self, t):
        """Return the path value at the grid point nearest to `t`."""  # noqa: DAR101,DAR201
        return self.values[self.grid.index_of(t)]

    def truncated(self, n_steps):
        """Return the path restricted to the first `n_steps` steps."""  # noqa: DAR101,DAR201
        return type(self)(self.grid.truncated(n_steps), self.values[:n_steps + 1])


@dataclass(frozen=True, eq=False)
class IncreasingPath(SamplePath):
    """Nondecreasing path starting at zero: compensators, local time, clocks."""

    def __post_init__(self):
        super().__post_init__()
        if self.values[0] != 0:
            raise GridError(f'Increasing path must start at 0. Found: {self.values[0]}')
        if np.any(np.diff(self.values) < 0):
            raise GridError('Increasing path must be nondecreasing')

    def increments(self):
        """Return `values[i] - values[i - 1]` for `i = 1..n_steps`."""  # noqa: DAR201
        return np.diff(self.values)


@dataclass(frozen=True, eq=False)
class JumpTimes:
    """Strictly increasing jump times in `(0, horizon]`."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size and (times[0] <= 0 or times[-1] > self.horizon or np.any(np.diff(times) <= 0)):
            raise GridError('Jump times must be strictly increasing within (0, horizon]')
        object.__setattr__(self, 'times', times)


@dataclass(frozen=True)
class StoppingSample:
    """Realized random time; `censored` is True iff the time was not reached within the horizon."""

    value: float
    censored: bool = False

    def __post_init__(self):
        if self.censored != math.isinf(self.value):
            raise GridError(f'Censored samples are represented by inf. Found: {self}')
        if not self.value >= 0:
            raise GridError(f'Stopping samples must be nonnegative. Found: {self.value}')

    @classmethod
    def at(cls, value):
        """Return an uncensored sample."""  # noqa: DAR101,DAR201
        return cls(float(value), censored=False)

    @classmethod
    def never(cls):
        """Return a censored sample."""  # noqa: DAR201
        return cls(math.inf, censored=True)


@dataclass(frozen=True)
class RngSpec:
    """Counter-style stream derivation from a single master seed."""

    master_seed: int

    def stream(self, index, *tags):
        """Return the generator for path `index`. Extra integer tags select independent sub-experiments.

        Args:
            index: path index
            tags: optional integers distinguishing experiments that share path indices

        Returns:
            np.random.Generator: independent, reproducible stream

        """
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(index, *tags))
        return np.random.Generator(np.random.Philox(seq))


def map_paths(worker, n_paths, rng, threads=1, chunk_size=256, tags=()):
    """Evaluate `worker(index, stream)` for every path index and return the records in index order.

    Args:
        worker: callable returning a per-path record. Must not mutate shared state
        n_paths: number of paths
        rng: RngSpec
        threads: maximum number of worker threads. Results do not depend on it
        chunk_size: paths per task
        tags: extra stream tags forwarded to `RngSpec.stream()`

    Returns:
        list: per-path records

    """
    chunks = [range(lo, min(lo + chunk_size, n_paths)) for lo in range(0, n_paths, chunk_size)]

    def run_chunk(indices):
        return [worker(index, rng.stream(index, *tags)) for index in indices]

    LOGGER.debug(f'map_paths: {n_paths} paths in {len(chunks)} chunks on {threads} thread(s)')
    if threads <= 1:
        results = [run_chunk(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
    return [record for chunk in results for record in chunk]


def stack_field(records, key):
    """Stack one field of the per-path records into an array with paths along the first axis."""  # noqa: DAR101,DAR201
    return np.array([record[key] for record in records], dtype=float)


def simulate_bm(grid, stream):
    """Simulate standard Brownian motion at the grid points.

    Args:
        grid: TimeGrid
        stream: numpy Generator

    Returns:
        SamplePath: path with `B_0 = 0` and independent N(0, step) increments

    """
    increments = stream.normal(0.0, math.sqrt(grid.step()), size=grid.n_steps)
    return SamplePath(grid, np.concatenate(([0.0], np.cumsum(increments))))


def default_epsilon(grid):
    """Return the default occupation half-width `sqrt(step)`."""  # noqa: DAR101,DAR201
    return math.sqrt(grid.step())


def near_zero(path, epsilon):
    """Return the boolean indicator `|path| <= epsilon` per grid index."""  # noqa: DAR101,DAR201
    return np.abs(path.values) <= epsilon


def local_time_zero(path, epsilon=None):
    """Estimate the local time at zero by normalized occupation time.

    `L_{t_i} = (1 / 2 eps) * step * #{1 <= j <= i : |path[j]| <= eps}`, so `L_0 = 0` and the estimate grows only at
    indices where the path is within `eps` of zero.

    Args:
        path: SamplePath
        epsilon: occupation half-width. Default is `sqrt(step)`

    Returns:
        IncreasingPath: local time estimate

    """
    epsilon = default_epsilon(path.grid) if epsilon is None else epsilon
    if not epsilon > 0:
        raise GridError(f'Expected positive epsilon. Found: {epsilon}')
    weight = path.grid.step() / (2 * epsilon)
    hits = near_zero(path, epsilon)[1:]
    return IncreasingPath(path.grid, np.concatenate(([0.0], np.cumsum(hits * weight))))


def inverse_clock(clock, level):
    """Return `inf{s : L_s > level}` on the grid (earliest index, strict inequality).

    Args:
        clock: IncreasingPath
        level: nonnegative level

    Returns:
        StoppingSample: censored if the clock never exceeds the level within the horizon

    """
    if level < 0:
        raise GridError(f'Expected nonnegative level. Found: {level}')
    above = clock.values > level
    if not above.any():
        return StoppingSample.never()
    return StoppingSample.at(clock.grid.times()[np.argmax(above)])


def simulate_poisson(rate, horizon, stream):
    """Simulate the jump times of a Poisson process on `(0, horizon]` from exponential inter-arrival times.

    Args:
        rate: nonnegative intensity
        horizon: positive horizon
        stream: numpy Generator

    Returns:
        JumpTimes: jump times truncated at the horizon

    """
    if rate < 0:
        raise GridError(f'Expected nonnegative rate. Found: {rate}')
    if rate == 0:
        return JumpTimes(np.empty(0), horizon)

    mean = rate * horizon
    block = int(mean + 5 * math.sqrt(mean) + 10)
    arrivals = np.cumsum(stream.exponential(1 / rate, size=block))
    while arrivals[-1] <= horizon:
        more = arrivals[-1] + np.cumsum(stream.exponential(1 / rate, size=block))
        arrivals = np.concatenate((arrivals, more))
    return JumpTimes(arrivals[arrivals <= horizon], horizon)


def count_at(jumps, t):
    """Return the number of jump times `<= t` (right-continuous counting)."""  # noqa: DAR101,DAR201
    return int(np.searchsorted(jumps.times, t, side='right'))


def time_change_counting(jumps, clock):
    """Return the time-changed counting path `N_{clock_t}` on the clock's grid.

    Args:
        jumps: JumpTimes of N
        clock: IncreasingPath clock

    Returns:
        SamplePath: nondecreasing integer-valued path

    """
    counts = np.searchsorted(jumps.times, clock.values, side='right')
    return SamplePath(clock.grid, counts.astype(float))


def first_passage_timechanged(jumps, clock, threshold, interpolate=False):
    """Return the first time the time-changed count reaches `threshold`.

    Args:
        jumps: JumpTimes of N
        clock: IncreasingPath clock
        threshold: positive integer
        interpolate: if True, place the crossing inside the crossing step by linear interpolation of the clock

    Returns:
        StoppingSample: censored if the count stays below the threshold

    """
    if threshold < 1:
        raise GridError(f'Expected threshold >= 1. Found: {threshold}')
    counts = time_change_counting(jumps, clock).values
    reached = counts >= threshold
    if not reached.any():
        return StoppingSample.never()
    index = int(np.argmax(reached))
    times = clock.grid.times()
    if not interpolate or index == 0:
        return StoppingSample.at(times[index])
    # clock[index - 1] < target jump time <= clock[index]
    target = jumps.times[threshold - 1]
    lo, hi = clock.values[index - 1], clock.values[index]
    fraction = (target - lo) / (hi - lo)
    return StoppingSample.at(times[index - 1] + fraction * clock.grid.step())
