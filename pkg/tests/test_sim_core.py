"""Test the sim_core.py file."""

import math

import numpy as np
import pytest
from compensator_lab.lab_helpers import GridError
from compensator_lab.sim_core import (IncreasingPath, JumpTimes, RngSpec, SamplePath, StoppingSample, TimeGrid,
                                      count_at, first_passage_timechanged, inverse_clock, local_time_zero, map_paths,
                                      near_zero, simulate_bm, simulate_poisson, stack_field, time_change_counting)

GRID = TimeGrid(horizon=1.0, n_steps=4)
"""Grid with step 0.25."""


def test_time_grid():
    """Check the grid points, snapping and truncation."""
    times = GRID.times()  # act

    assert times.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert GRID.snap(0.3) == 0.25
    assert GRID.index_of(5.0) == 4
    assert GRID.truncated(3) == TimeGrid(0.75, 3)


@pytest.mark.parametrize('horizon,n_steps', [(0.0, 10), (1.0, 1), (1.0, 2.5)])
def test_time_grid_invalid(horizon, n_steps):
    """Check that degenerate grids are rejected."""
    with pytest.raises(GridError):
        TimeGrid(horizon, n_steps)  # act


def test_increasing_path_validation():
    """Check that increasing paths start at zero and never decrease."""
    with pytest.raises(GridError):
        IncreasingPath(GRID, [0.0, 1.0, 0.5, 0.5, 0.5])  # act

    with pytest.raises(GridError):
        IncreasingPath(GRID, [0.1, 0.2, 0.3, 0.4, 0.5])
    with pytest.raises(GridError):
        SamplePath(GRID, [0.0, 1.0])


def test_stopping_sample():
    """Check that censoring is represented by infinity."""
    never = StoppingSample.never()  # act

    assert never.censored and math.isinf(never.value)
    assert not StoppingSample.at(0.5).censored
    with pytest.raises(GridError):
        StoppingSample(math.inf, censored=False)


def test_rng_streams_are_reproducible():
    """Check that streams depend on (seed, index, tags) only."""
    rng = RngSpec(42)

    first = rng.stream(3).random(4)  # act

    assert np.array_equal(first, RngSpec(42).stream(3).random(4))
    assert not np.array_equal(first, rng.stream(4).random(4))
    assert not np.array_equal(first, rng.stream(3, 1).random(4))
    assert not np.array_equal(first, RngSpec(43).stream(3).random(4))


def test_map_paths_is_thread_independent():
    """Check that records come back in path order with identical values for any thread count."""
    rng = RngSpec(7)

    def worker(index, stream):
        return {'index': index, 'draw': stream.random()}

    single = map_paths(worker, 1000, rng, threads=1, chunk_size=64)  # act

    threaded = map_paths(worker, 1000, rng, threads=8, chunk_size=64)
    assert stack_field(single, 'index').tolist() == list(range(1000))
    assert np.array_equal(stack_field(single, 'draw'), stack_field(threaded, 'draw'))


def test_simulate_bm():
    """Check that paths start at zero and increments have variance `step`."""
    grid = TimeGrid(1.0, 1000)

    path = simulate_bm(grid, RngSpec(1).stream(0))  # act

    assert path.values[0] == 0
    assert np.var(np.diff(path.values)) == pytest.approx(grid.step(), rel=0.15)


def test_local_time_zero_counts_visits():
    """Check the occupation-time formula on a hand-made path."""
    path = SamplePath(GRID, [0.0, 0.1, 0.9, -0.2, 0.6])

    local_time = local_time_zero(path, epsilon=0.5)  # act

    # weight = step / (2 eps) = 0.25; visits at indices 1 and 3
    assert local_time.values.tolist() == [0.0, 0.25, 0.25, 0.5, 0.5]
    assert near_zero(path, 0.5).tolist() == [True, True, False, True, False]


def test_local_time_mean():
    """Check that the mean local time at 1 is within 4 standard errors plus 2% of sqrt(2 / pi).

    The 2% allows for the occupation-time discretization at 4096 steps. The full-scale local-time scenario checks
    the 2% bound alone.

    """
    grid = TimeGrid(1.0, 2 ** 12)
    rng = RngSpec(3)

    records = map_paths(lambda _i, stream: {'l': local_time_zero(simulate_bm(grid, stream)).values[-1]}, 2000, rng)

    local_times = stack_field(records, 'l')  # act
    target = math.sqrt(2 / math.pi)
    std_error = np.std(local_times, ddof=1) / math.sqrt(len(local_times))
    assert abs(np.mean(local_times) - target) <= 4 * std_error + 0.02 * target


def test_inverse_clock_galois():
    """Check that `L_s > x` implies `inverse_clock(L, x) <= s` and that the first exceedance is strict."""
    grid = TimeGrid(1.0, 512)
    clock = local_time_zero(simulate_bm(grid, RngSpec(8).stream(0)))
    times = grid.times()

    for level in np.linspace(0.0, clock.values[-1], 25, endpoint=False):
        tau = inverse_clock(clock, level)  # act

        assert not tau.censored
        assert all(tau.value <= s for s in times[clock.values > level])
        assert all(clock.values[times < tau.value] <= level)


def test_time_change_counting_is_nondecreasing():
    """Check that `N_{L_t}` never decreases along a nondecreasing clock."""
    grid = TimeGrid(1.0, 512)
    rng = RngSpec(10)

    for index in range(20):
        clock = local_time_zero(simulate_bm(grid, rng.stream(index)))
        jumps = simulate_poisson(1.0, max(clock.values[-1], 1e-9), rng.stream(index, 1))

        counting = time_change_counting(jumps, clock)  # act

        assert np.all(np.diff(counting.values) >= 0)
        assert counting.values[0] == 0


def test_inverse_clock():
    """Check the strict first-exceedance rule and censoring."""
    clock = IncreasingPath(GRID, [0.0, 0.25, 0.25, 0.5, 0.5])

    tau = inverse_clock(clock, 0.25)  # act

    assert tau == StoppingSample.at(0.75)
    assert inverse_clock(clock, 0.0) == StoppingSample.at(0.25)
    assert inverse_clock(clock, 0.5).censored


def test_simulate_poisson():
    """Check the jump count mean and that rate zero gives no jumps."""
    rng = RngSpec(11)

    counts = [len(simulate_poisson(2.0, 3.0, rng.stream(i)).times) for i in range(2000)]  # act

    assert np.mean(counts) == pytest.approx(6.0, abs=0.25)
    assert len(simulate_poisson(0.0, 3.0, rng.stream(0)).times) == 0


def test_jump_times_validation():
    """Check that jump times must be increasing within the horizon."""
    with pytest.raises(GridError):
        JumpTimes([0.5, 0.4], horizon=1.0)  # act

    with pytest.raises(GridError):
        JumpTimes([0.5, 1.5], horizon=1.0)


def test_time_changed_first_passage():
    """Check the grid and interpolated first passage of a time-changed counting process."""
    clock = IncreasingPath(GRID, [0.0, 0.2, 0.6, 0.6, 1.0])
    jumps = JumpTimes([0.4, 0.8], horizon=1.0)

    on_grid = first_passage_timechanged(jumps, clock, 1)  # act

    assert on_grid == StoppingSample.at(0.5)
    # clock crosses 0.4 half way through (0.25, 0.5]
    assert first_passage_timechanged(jumps, clock, 1, interpolate=True).value == pytest.approx(0.375)
    assert first_passage_timechanged(jumps, clock, 2).value == 1.0
    assert first_passage_timechanged(jumps, clock, 3).censored
    assert time_change_counting(jumps, clock).values.tolist() == [0, 0, 1, 1, 2]
    assert count_at(jumps, 0.4) == 1
