"""Filtration changes: optional projection onto a coarse view, measure change of a compensator, and the honest-time
objects of the last-zero example (Azema supermartingale, local-time compensator, Jeulin-Yor expansion).

"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .lab_helpers import LOGGER, BracketUnavailable, GridError, HorizonViolation, export_rows_as_csv
from .martingale_verify import assign_bins, quantile_edges
from .sim_core import IncreasingPath, SamplePath, StoppingSample, local_time_zero

JEULIN_YOR_FLOOR = 1e-6
"""Floor applied to `Z_{s-}` in the Jeulin-Yor integrand."""


# ----------------------------------------------------------------------------------------------------------------------
# Optional projection


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    """Bin averages of an intensity per evaluation time and the projected value of every path."""

    times: np.ndarray
    edges: list
    table: np.ndarray
    counts: np.ndarray
    projected: np.ndarray
    empty_bins: tuple = ()

    def value(self, t_index, bin_index):
        return float(self.table[t_index, bin_index])


def optional_projection_estimate(bundle, view, observable, edges=None, n_bins=8):
    """Estimate the optional projection of an intensity onto the information of a coarse view.

    At each evaluation time the paths are grouped by the coarse observable and each path receives the average
    intensity of its group.

    Args:
        bundle: PathBundle of the intensity (nonnegative)
        view: coarse FiltrationView
        observable: coarse observable used for binning
        edges: fixed bin edges shared by all times. Default is `n_bins` equal-probability bins per time
        n_bins: number of quantile bins when `edges` is None

    Returns:
        ProjectionTable: per-bin table, counts and projected paths

    """
    if np.any(bundle.values < 0):
        raise GridError('Intensity paths must be nonnegative')
    n_cols = len(bundle.times)
    all_edges, empty = [], []
    width = (len(edges) - 1) if edges is not None else n_bins
    table = np.full((n_cols, width), np.nan)
    counts = np.zeros((n_cols, width), dtype=int)
    projected = np.full(bundle.values.shape, np.nan)
    for col in range(n_cols):
        x = view.read(bundle, observable, col)
        col_edges = np.asarray(edges, dtype=float) if edges is not None else quantile_edges(x, n_bins)
        all_edges.append(col_edges)
        bins = assign_bins(x, col_edges)
        for j in range(width):
            mask = bins == j
            counts[col, j] = np.count_nonzero(mask)
            if not counts[col, j]:
                empty.append((float(bundle.times[col]), j))
                continue
            table[col, j] = np.mean(bundle.values[mask, col])
            projected[mask, col] = table[col, j]
    if empty:
        LOGGER.debug(f'EmptyBins in projection: {len(empty)} bin(s) without paths')
    return ProjectionTable(bundle.times, all_edges, table, counts, projected, tuple(empty))


def stopped_intensity_integral(rates, grid, stop):
    """Integrate intensities on a grid up to `t ^ R` for every path.

    Full cells use the trapezoid rule; the cell containing R contributes its left value times the partial length.

    Args:
        rates: intensity at the grid points, shape `(n_steps + 1,)` or `(n_paths, n_steps + 1)`
        grid: TimeGrid
        stop: realized R per path (inf when censored), shape `(n_paths,)`

    Returns:
        np.ndarray: integrals of shape `(n_paths, n_steps + 1)`

    """
    times = grid.times()
    stop = np.asarray(stop, dtype=float)
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (len(stop), len(times)))
    cells = 0.5 * (rates[:, :-1] + rates[:, 1:]) * grid.step()
    cumulative = np.concatenate((np.zeros((len(stop), 1)), np.cumsum(cells, axis=1)), axis=1)

    last = np.clip(np.floor(np.minimum(stop, grid.horizon) / grid.step()).astype(int), 0, grid.n_steps)
    rows = np.arange(len(stop))
    partial = np.where(np.isfinite(stop), np.maximum(np.minimum(stop, grid.horizon) - times[last], 0.0), 0.0)
    at_stop = cumulative[rows, last] + rates[rows, last] * partial
    return np.where(times[None, :] <= stop[:, None], cumulative, at_stop[:, None])


# ----------------------------------------------------------------------------------------------------------------------
# Measure change


@dataclass(frozen=True, eq=False)
class DensityMartingale:
    """Density process of an equivalent measure along one path."""

    path: SamplePath
    floor: float = JEULIN_YOR_FLOOR

    def __post_init__(self):
        if not math.isclose(self.path.values[0], 1.0):
            raise GridError(f'Density martingale must start at 1. Found: {self.path.values[0]}')
        if np.any(self.path.values <= 0):
            raise GridError('Density martingale must stay positive')

    @classmethod
    def constant(cls, grid):
        """Return `Z = 1` (no change of measure)."""  # noqa: DAR101,DAR201
        return cls(SamplePath(grid, np.ones(grid.n_steps + 1)))

    def is_constant(self):
        return bool(np.all(self.path.values == 1.0))


def poisson_tilt_density(jumps, grid, rate, tilted_rate, stop=math.inf):
    """Return the density `(mu / lam)^N_{t ^ R} exp(-(mu - lam)(t ^ R))` of the tilt of a Poisson rate.

    Args:
        jumps: JumpTimes of N
        grid: TimeGrid
        rate: base rate lam
        tilted_rate: rate mu under the new measure
        stop: time at which the density is frozen. Default is no stopping

    Returns:
        DensityMartingale: density along the path

    """
    times = np.minimum(grid.times(), stop)
    counts = np.searchsorted(jumps.times, times, side='right')
    log_density = counts * math.log(tilted_rate / rate) - (tilted_rate - rate) * times
    return DensityMartingale(SamplePath(grid, np.exp(log_density)))


def _poisson_tilt_bracket(lam, density, _martingale, params, widths):
    """Return the cell increments of `<Z, M>` for the tilt of a Poisson rate by the factor `params['ratio']`.

    `lam` is the stopped intensity `lam 1{s < R}`, so the bracket vanishes after R.

    """
    z_left = density.path.values[:-1]
    return z_left * (params['ratio'] - 1.0) * lam.values[:-1] * widths


BRACKETS = {
    'poisson-tilt': _poisson_tilt_bracket,
}
"""Closed-form predictable brackets `<Z, M>` by scenario."""


def girsanov_compensator(lam, density, martingale, bracket='poisson-tilt', params=None, stop=math.inf):
    """Return the compensator under the new measure, `int lam ds + int (1 / Z_{s-}) d<Z, M>_s`.

    Both integrals are left-point sums on the grid of `lam`. The cell that contains `stop` is charged only up to
    `stop`, so an intensity stopped at R integrates to its exact value at `t ^ R`.

    Args:
        lam: SamplePath of the base intensity, already stopped at R
        density: DensityMartingale
        martingale: SamplePath of the compensated indicator under the base measure
        bracket: key of `BRACKETS`, or None when no correction is available
        params: parameters for the bracket
        stop: time after which `lam` vanishes. Default is no stopping

    Returns:
        IncreasingPath: compensator under the new measure

    Raises:
        BracketUnavailable: if the bracket is unknown, or None while Z is not identically 1

    """
    times = lam.grid.times()
    widths = np.maximum(np.minimum(times[1:], stop) - times[:-1], 0.0)
    base = np.concatenate(([0.0], np.cumsum(lam.values[:-1] * widths)))
    if bracket is None:
        if not density.is_constant():
            raise BracketUnavailable('A bracket is required when the density is not identically 1')
        return IncreasingPath(lam.grid, base)
    if bracket not in BRACKETS:
        raise BracketUnavailable(f'No closed-form bracket registered for {bracket}. Known: {sorted(BRACKETS)}')

    increments = BRACKETS[bracket](lam, density, martingale, params or {}, widths)
    correction = np.concatenate(([0.0], np.cumsum(increments / density.path.values[:-1])))
    return IncreasingPath(lam.grid, base + correction)


# ----------------------------------------------------------------------------------------------------------------------
# Honest times


def azema_supermartingale(b, t):
    """Return `Z_t = 2 Phi(-|b| / sqrt(1 - t))` for the last zero before 1.

    Args:
        b: value(s) of `B_t`
        t: time, strictly below 1

    Returns:
        float or np.ndarray: conditional probability that the last zero comes after t

    Raises:
        HorizonViolation: for t >= 1

    """
    if t >= 1:
        raise HorizonViolation(f'Azema supermartingale is defined for t < 1. Found: {t}')
    return 2 * scipy.stats.norm.cdf(-np.abs(b) / math.sqrt(1 - t))


def azema_path(path):
    """Return Z along a Brownian path whose grid ends before 1."""  # noqa: DAR101,DAR201
    if path.grid.horizon >= 1:
        raise HorizonViolation(f'Grid must end before 1. Found: {path.grid.horizon}')
    times = path.grid.times()
    return SamplePath(path.grid, 2 * scipy.stats.norm.cdf(-np.abs(path.values) / np.sqrt(1 - times)))


def last_zero_before_one(path, stream=None):
    """Return the last zero of the path on `[0, 1]`.

    A zero is an exact zero at a grid point or a sign change between adjacent points; a sign change is placed by
    linear interpolation inside its step. With a `stream`, a step whose end points share a sign also holds a zero
    with the Brownian-bridge probability `exp(-2 a b / step)`, and such a zero is placed uniformly in its step.

    Args:
        path: SamplePath on a grid reaching at least 1
        stream: optional numpy Generator for the bridge correction

    Returns:
        StoppingSample: last zero, 0 when the path never returns to zero

    """
    grid = path.grid
    if grid.horizon < 1 - 1e-12:
        raise HorizonViolation(f'Grid must reach 1. Found: {grid.horizon}')
    last = int(math.floor(1 / grid.step() + 1e-9))
    values = path.values[:last + 1]
    before, after = values[:-1], values[1:]
    exact = after == 0
    crossing = before * after < 0
    found = exact | crossing
    bridged = np.zeros_like(found)
    if stream is not None:
        draws = stream.random(len(before))
        bridged = ~found & (draws < np.exp(-2 * np.maximum(before * after, 0.0) / grid.step()))
    hits = np.flatnonzero(found | bridged) + 1
    if not len(hits):
        return StoppingSample.at(0.0)
    index = int(hits[-1])
    if values[index] == 0:
        return StoppingSample.at(index * grid.step())
    if bridged[index - 1]:
        return StoppingSample.at((index - 1 + stream.random()) * grid.step())
    left, right = values[index - 1], values[index]
    return StoppingSample.at((index - 1 + left / (left - right)) * grid.step())


def honest_compensator_AL(local_time):
    """Return `A^L_t = sum sqrt(2 / (pi (1 - t_{i-1}))) dL0_i`, the compensator of the last zero before 1.

    Args:
        local_time: IncreasingPath of the local time at zero on a grid ending at or before `1 - step`

    Returns:
        IncreasingPath: compensator with the same support as the local time

    Raises:
        HorizonViolation: if the grid reaches past `1 - step`

    """
    grid = local_time.grid
    if grid.horizon > 1 - grid.step() + 1e-12:
        raise HorizonViolation(f'Grid must end at or before 1 - step. Found: {grid.horizon}')
    left = grid.times()[:-1]
    weights = np.sqrt(2 / (math.pi * (1 - left)))
    return IncreasingPath(grid, np.concatenate(([0.0], np.cumsum(weights * local_time.increments()))))


def jeulin_yor_compensator(azema, compensator_al, last_zero, floor=JEULIN_YOR_FLOOR):
    """Return the expanded-filtration compensator `int_0^{t ^ L} dA^L_s / max(Z_{s-}, floor)`.

    Args:
        azema: SamplePath of Z
        compensator_al: IncreasingPath of A^L on the same grid
        last_zero: StoppingSample of L
        floor: lower bound applied to `Z_{s-}`

    Returns:
        tuple: `(IncreasingPath, clipped_mass)` where `clipped_mass` is the A^L mass whose denominator was floored

    """
    if azema.grid != compensator_al.grid:
        raise GridError('Z and A^L must share a grid')
    times = compensator_al.grid.times()
    z_left = azema.values[:-1]
    increments = compensator_al.increments() * (times[1:] <= last_zero.value)
    clipped = z_left < floor
    values = np.concatenate(([0.0], np.cumsum(increments / np.maximum(z_left, floor))))
    return IncreasingPath(compensator_al.grid, values), float(np.sum(increments[clipped]))


@dataclass(frozen=True, eq=False)
class HonestTimeBundle:
    """Per-path objects of the last-zero example on the grid `[0, 1 - step]`."""

    brownian: SamplePath
    local_time: IncreasingPath
    last_zero: StoppingSample
    azema: SamplePath
    compensator_al: IncreasingPath
    jeulin_yor: IncreasingPath = field(default=None)
    clipped_mass: float = 0.0

    def __post_init__(self):
        if self.last_zero.value > 1:
            raise GridError(f'Last zero must be at most 1. Found: {self.last_zero.value}')
        if np.any((self.azema.values < 0) | (self.azema.values > 1)):
            raise GridError('Azema supermartingale must stay in [0, 1]')
        if np.any((self.compensator_al.increments() > 0) & (self.local_time.increments() == 0)):
            raise GridError('A^L increased where the local time is flat')

    def to_csv(self, csv_filename):
        """Write the per-path table (t, B, L0, Z, AL)."""  # noqa: DAR101
        rows = zip(self.brownian.grid.times(), self.brownian.values, self.local_time.values, self.azema.values,
                   self.compensator_al.values)
        export_rows_as_csv(csv_filename, ['t', 'B', 'L0', 'Z', 'AL'], rows)


def honest_time_bundle(path, epsilon=None, floor=JEULIN_YOR_FLOOR, stream=None):
    """Build every last-zero object from a Brownian path on `[0, 1]`.

    Args:
        path: SamplePath of B on a grid with horizon 1
        epsilon: local-time half-width. Default is `sqrt(step)`
        floor: Jeulin-Yor denominator floor
        stream: optional numpy Generator for the bridge-corrected last zero

    Returns:
        HonestTimeBundle: objects on the grid truncated to `1 - step`

    """
    last_zero = last_zero_before_one(path, stream)
    inner = path.truncated(path.grid.n_steps - 1)
    local_time = local_time_zero(inner, epsilon)
    azema = azema_path(inner)
    compensator_al = honest_compensator_AL(local_time)
    jeulin_yor, clipped = jeulin_yor_compensator(azema, compensator_al, last_zero, floor)
    return HonestTimeBundle(inner, local_time, last_zero, azema, compensator_al, jeulin_yor, clipped)
