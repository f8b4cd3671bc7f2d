"""Compensators of random times from their law (Dellacherie), hazard rates, empirical laws and singularity diagnostics.

For the minimal filtration of a positive random time R with law F, the compensator of `1{t >= R}` is

    A_t = int_(0, t ^ R] dF(u) / (1 - F(u-))

which reduces to `-ln(1 - F(t ^ R))` when F is continuous. A law here is a finite atom list plus at most one
"continuous" part. The continuous part is either absolutely continuous (exponential, uniform, gamma, table) and
integrated by quadrature, or an empirical step function integrated exactly (the Nelson-Aalen sum).

"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.stats
from cerberus import Validator
from scipy.integrate import quad

from .lab_helpers import LOGGER, ConfigError, DegenerateLaw, GridError, InsufficientData, LabError, ZeroMass
from .sim_core import IncreasingPath, StoppingSample

DEGENERATE_CAP = 1e-12
"""Evaluation stops once the survival probability `1 - F(u-)` falls below this value."""

QUAD_EPSREL = 1e-9
"""Relative tolerance of the quadrature of the absolutely continuous part."""

MIN_SAMPLES = 100
"""Minimum number of uncensored samples for `empirical_law()`."""


# ----------------------------------------------------------------------------------------------------------------------
# Continuous parts


@dataclass(frozen=True)
class ParametricPart:
    """Absolutely continuous part backed by a scipy distribution and scaled by `weight`."""

    kind: str
    weight: float
    rate: float = None
    low: float = None
    high: float = None
    shape: float = None

    is_discrete = False

    @cached_property
    def dist(self):
        """Return the frozen scipy distribution."""  # noqa: DAR201
        if self.kind == 'exponential':
            return scipy.stats.expon(scale=1 / self.rate)
        if self.kind == 'uniform':
            return scipy.stats.uniform(loc=self.low, scale=self.high - self.low)
        return scipy.stats.gamma(a=self.shape, scale=1 / self.rate)

    def cdf(self, u):
        return self.weight * self.dist.cdf(u)

    def left_cdf(self, u):
        return self.cdf(u)

    def density(self, u):
        return self.weight * self.dist.pdf(u)

    def kinks(self):
        return np.array([self.low, self.high]) if self.kind == 'uniform' else np.empty(0)

    def jump_points(self):
        return np.empty(0), np.empty(0)

    def sample(self, stream):
        return float(self.dist.ppf(stream.random()))

    def to_json(self):
        keys = {'exponential': ('rate',), 'uniform': ('low', 'high'), 'gamma': ('shape', 'rate')}[self.kind]
        return {'kind': self.kind, 'weight': self.weight, **{key: getattr(self, key) for key in keys}}


@dataclass(frozen=True)
class TablePart:
    """Absolutely continuous part given by sorted `(u, F(u))` pairs with linear interpolation."""

    points: tuple

    kind = 'table'
    is_discrete = False

    def __post_init__(self):
        grid = np.array(self.points, dtype=float)
        if grid.ndim != 2 or grid.shape[0] < 2 or np.any(np.diff(grid[:, 0]) <= 0) or np.any(np.diff(grid[:, 1]) < 0):
            raise ConfigError('Table law needs at least two points with increasing u and nondecreasing F')
        if grid[0, 0] > 0:
            grid = np.vstack(([0.0, 0.0], grid))
        if grid[0, 1] != 0 or grid[0, 0] < 0:
            raise ConfigError('Table law must start from F(0) = 0')
        object.__setattr__(self, 'points', tuple(map(tuple, grid)))

    @cached_property
    def _nodes(self):
        grid = np.array(self.points)
        return grid[:, 0], grid[:, 1]

    @property
    def weight(self):
        return self._nodes[1][-1]

    def cdf(self, u):
        nodes, values = self._nodes
        return np.interp(u, nodes, values)

    def left_cdf(self, u):
        return self.cdf(u)

    def density(self, u):
        nodes, values = self._nodes
        slopes = np.diff(values) / np.diff(nodes)
        index = np.clip(np.searchsorted(nodes, u, side='right') - 1, 0, len(slopes) - 1)
        inside = (np.asarray(u) >= nodes[0]) & (np.asarray(u) < nodes[-1])
        return np.where(inside, slopes[index], 0.0)

    def kinks(self):
        return self._nodes[0]

    def jump_points(self):
        return np.empty(0), np.empty(0)

    def sample(self, stream):
        nodes, values = self._nodes
        return float(np.interp(stream.random() * self.weight, values, nodes))

    def to_json(self):
        return {'kind': self.kind, 'points': [list(point) for point in self.points]}


@dataclass(frozen=True, eq=False)
class EmpiricalPart:
    """Step part from samples: each retained sample carries mass `weight / len(values)`."""

    values: np.ndarray
    weight: float
    bandwidth_rule: str = 'silverman'

    kind = 'empirical'
    is_discrete = True

    def __post_init__(self):
        object.__setattr__(self, 'values', np.sort(np.asarray(self.values, dtype=float)))

    def cdf(self, u):
        return self.weight * np.searchsorted(self.values, u, side='right') / len(self.values)

    def left_cdf(self, u):
        return self.weight * np.searchsorted(self.values, u, side='left') / len(self.values)

    def density(self, u):
        return None

    def kinks(self):
        return np.empty(0)

    def jump_points(self):
        points, counts = np.unique(self.values, return_counts=True)
        return points, self.weight * counts / len(self.values)

    def kde(self):
        """Return a diagnostic kernel density (scaled by `weight`). Never used inside the compensator integral.

        Returns:
            callable: density estimate

        """
        kernel = scipy.stats.gaussian_kde(self.values, bw_method=self.bandwidth_rule)
        return lambda u: self.weight * kernel(np.atleast_1d(u))

    def sample(self, stream):
        return float(self.values[stream.integers(len(self.values))])

    def to_json(self):
        return {'kind': self.kind, 'weight': self.weight, 'values': self.values.tolist()}


# ----------------------------------------------------------------------------------------------------------------------
# Law


@dataclass(frozen=True)
class Law:
    """Distribution of a positive random time: finite atom list plus an optional continuous part."""

    atoms: tuple = ()
    continuous: object = None

    def __post_init__(self):
        atoms = tuple((float(time), float(mass)) for time, mass in self.atoms)
        times = [time for time, _mass in atoms]
        if any(time <= 0 for time in times) or any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise ConfigError(f'Atom times must be positive and strictly increasing. Found: {times}')
        if any(mass <= 0 for _time, mass in atoms):
            raise ConfigError(f'Atom masses must be positive. Found: {atoms}')
        object.__setattr__(self, 'atoms', atoms)
        if self.total_mass() > 1 + 1e-12:
            raise ConfigError(f'Total mass exceeds 1: {self.total_mass()}')

    @cached_property
    def _atom_arrays(self):
        times = np.array([time for time, _mass in self.atoms], dtype=float)
        masses = np.array([mass for _time, mass in self.atoms], dtype=float)
        return times, np.concatenate(([0.0], np.cumsum(masses))), masses

    def atom_mass(self):
        return math.fsum(mass for _time, mass in self.atoms)

    def total_mass(self):
        return self.atom_mass() + (self.continuous.weight if self.continuous is not None else 0.0)

    def cdf(self, u):
        """Return `F(u)`."""  # noqa: DAR101,DAR201
        times, cumulative, _masses = self._atom_arrays
        atoms = cumulative[np.searchsorted(times, u, side='right')]
        return atoms + (self.continuous.cdf(u) if self.continuous is not None else 0.0)

    def left_cdf(self, u):
        """Return `F(u-)`."""  # noqa: DAR101,DAR201
        times, cumulative, _masses = self._atom_arrays
        atoms = cumulative[np.searchsorted(times, u, side='left')]
        return atoms + (self.continuous.left_cdf(u) if self.continuous is not None else 0.0)

    def discrete_points(self):
        """Return sorted points carrying positive mass (atoms and empirical steps) and their masses.

        Returns:
            tuple: `(points, masses)` arrays

        """
        times, _cumulative, masses = self._atom_arrays
        if self.continuous is None:
            return times, masses
        part_points, part_masses = self.continuous.jump_points()
        points, inverse = np.unique(np.concatenate((times, part_points)), return_inverse=True)
        merged = np.zeros(len(points))
        np.add.at(merged, inverse, np.concatenate((masses, part_masses)))
        return points, merged

    def sample(self, stream):
        """Draw one random time. Mass missing from the law is returned as a censored sample.

        Args:
            stream: numpy Generator

        Returns:
            StoppingSample: sample of R

        """
        times, cumulative, _masses = self._atom_arrays
        draw = stream.random()
        if draw < cumulative[-1]:
            return StoppingSample.at(times[np.searchsorted(cumulative, draw, side='right') - 1])
        if self.continuous is not None and draw < cumulative[-1] + self.continuous.weight:
            return StoppingSample.at(self.continuous.sample(stream))
        return StoppingSample.never()


def exponential_law(rate):
    """Return the exponential law with the given rate."""  # noqa: DAR101,DAR201
    return Law(continuous=ParametricPart('exponential', weight=1.0, rate=rate))


def uniform_law(low, high):
    """Return the uniform law on `[low, high]`."""  # noqa: DAR101,DAR201
    return Law(continuous=ParametricPart('uniform', weight=1.0, low=low, high=high))


def gamma_law(shape, rate):
    """Return the Gamma(shape, rate) law, the law of the `shape`-th jump of a Poisson process."""  # noqa: DAR101,DAR201
    return Law(continuous=ParametricPart('gamma', weight=1.0, shape=shape, rate=rate))


# ----------------------------------------------------------------------------------------------------------------------
# Law JSON codec

_PAIR = {'type': 'list', 'minlength': 2, 'maxlength': 2, 'schema': {'type': 'number'}}

LAW_SCHEMA = {
    'atoms': {'type': 'list', 'default': [], 'schema': _PAIR},
    'continuous': {
        'type': 'dict',
        'nullable': True,
        'default': None,
        'schema': {
            'kind': {'type': 'string', 'required': True,
                     'allowed': ['exponential', 'uniform', 'gamma', 'table', 'empirical']},
            'weight': {'type': 'number', 'min': 0, 'max': 1},
            'rate': {'type': 'number', 'min': 0},
            'low': {'type': 'number', 'min': 0},
            'high': {'type': 'number', 'min': 0},
            'shape': {'type': 'number', 'min': 0},
            'points': {'type': 'list', 'schema': _PAIR},
            'values': {'type': 'list', 'schema': {'type': 'number'}},
        },
    },
}
"""Cerberus schema of the Law JSON document."""

_REQUIRED = {
    'exponential': ('rate',),
    'uniform': ('low', 'high'),
    'gamma': ('shape', 'rate'),
    'table': ('points',),
    'empirical': ('values',),
}


def law_from_json(obj):
    """Parse and validate a Law JSON document.

    Args:
        obj: dictionary such as `{"atoms": [[1.0, 0.5]], "continuous": {"kind": "exponential", "rate": 2}}`

    Returns:
        Law: parsed law

    Raises:
        ConfigError: if the document does not match `LAW_SCHEMA`

    """
    validator = Validator(LAW_SCHEMA)
    if not validator.validate(obj or {}):
        raise ConfigError(f'Invalid law: {validator.errors}')
    doc = validator.document
    atoms = tuple(tuple(pair) for pair in doc['atoms'])
    part_doc = doc['continuous']
    if part_doc is None:
        return Law(atoms=atoms)

    kind = part_doc['kind']
    missing = [key for key in _REQUIRED[kind] if key not in part_doc]
    if missing:
        raise ConfigError(f'Law kind {kind} is missing {missing}')
    default_weight = max(1.0 - math.fsum(mass for _time, mass in atoms), 0.0)
    weight = part_doc.get('weight', default_weight)
    if kind == 'table':
        part = TablePart(tuple(tuple(pair) for pair in part_doc['points']))
    elif kind == 'empirical':
        part = EmpiricalPart(np.array(part_doc['values']), weight)
    else:
        if kind == 'uniform' and not part_doc['high'] > part_doc['low']:
            raise ConfigError(f'Uniform law needs high > low. Found: {part_doc}')
        if not part_doc.get('rate', 1) > 0 or not part_doc.get('shape', 1) > 0:
            raise ConfigError(f'Rate and shape must be positive. Found: {part_doc}')
        part = ParametricPart(kind, weight=weight, **{key: part_doc[key] for key in _REQUIRED[kind]})
    return Law(atoms=atoms, continuous=part)


def law_to_json(law):
    """Return the JSON document of a law."""  # noqa: DAR101,DAR201
    return {
        'atoms': [[time, mass] for time, mass in law.atoms],
        'continuous': law.continuous.to_json() if law.continuous is not None else None,
    }


# ----------------------------------------------------------------------------------------------------------------------
# Compensators


def _check_survival(survival, where):
    if np.min(survival, initial=1.0) < DEGENERATE_CAP:
        raise DegenerateLaw(f'1 - F(u-) fell below {DEGENERATE_CAP} at {where}')


def _ac_integral(law, lo, hi):
    """Integrate `f(u) / (1 - F(u-))` over `(lo, hi]` for the absolutely continuous part.

    Args:
        law: Law
        lo: lower limit
        hi: upper limit

    Returns:
        float: integral, split at atoms and table nodes

    """
    part = law.continuous
    if part is None or part.is_discrete or hi <= lo:
        return 0.0
    points, _masses = law.discrete_points()
    breaks = np.unique(np.concatenate(([lo, hi], points, part.kinks())))
    breaks = breaks[(breaks >= lo) & (breaks <= hi)]

    def integrand(u):
        return float(part.density(u)) / (1.0 - float(law.left_cdf(u)))

    total = []
    for seg_lo, seg_hi in zip(breaks[:-1], breaks[1:]):
        if part.cdf(seg_hi) - part.cdf(seg_lo) <= 0:
            continue
        _check_survival(1.0 - law.left_cdf(seg_hi), seg_hi)
        value, _error = quad(integrand, seg_lo, seg_hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)
        total.append(value)
    return math.fsum(total)


def _jump_terms(law, upper):
    points, masses = law.discrete_points()
    keep = points <= upper
    survival = 1.0 - law.left_cdf(points[keep])
    _check_survival(survival, points[keep])
    return masses[keep] / survival


def dellacherie_compensator(law, t, r=math.inf):
    """Return `A_t = int_(0, t ^ r] dF(u) / (1 - F(u-))`.

    Args:
        law: Law of R
        t: evaluation time
        r: realized value of R. Default is infinity (the compensator before R occurs)

    Returns:
        float: compensator value

    """
    upper = min(t, r)
    if upper <= 0:
        return 0.0
    return math.fsum(_jump_terms(law, upper)) + _ac_integral(law, 0.0, upper)


def jump_increments(law, upper=math.inf):
    """Return the compensator jumps `dF(u) / (1 - F(u-))` at the discrete points of the law up to `upper`.

    Args:
        law: Law
        upper: last time to include

    Returns:
        tuple: `(points, increments)` arrays

    """
    points, _masses = law.discrete_points()
    return points[points <= upper], _jump_terms(law, upper)


def log_survival_compensator(law, t, r=math.inf):
    """Return `-ln(1 - F(t ^ r))` for a law without atoms.

    Args:
        law: atom-free Law of R
        t: evaluation time
        r: realized value of R

    Returns:
        float: compensator value

    Raises:
        LabError: if the law has atoms

    """
    if law.atoms:
        raise LabError('The log-survival form requires a law without atoms')
    upper = min(t, r)
    if upper <= 0:
        return 0.0
    cdf = float(law.cdf(upper))
    _check_survival(1.0 - cdf, upper)
    return -math.log1p(-cdf)


def log_survival_values(law, stopped):
    """Return `-ln(1 - F(x))` for an array of times already stopped at R."""  # noqa: DAR101,DAR201
    if law.atoms:
        raise LabError('The log-survival form requires a law without atoms')
    cdf = law.cdf(np.asarray(stopped, dtype=float))
    _check_survival(1.0 - cdf, 'the stopped times')
    return -np.log1p(-cdf)


def hazard_rate(density, law, t):
    """Return the hazard rate `f(t) / (1 - F(t))`.

    Args:
        density: callable density of the law
        law: atom-free Law
        t: evaluation time

    Returns:
        float: hazard rate

    """
    survival = 1.0 - float(law.cdf(t))
    _check_survival(survival, t)
    return float(density(t)) / survival


class CompensatorTable:
    """Dellacherie compensator tabulated once on a grid and evaluated at `t ^ R` for many paths.

    The absolutely continuous contribution is integrated cell by cell and interpolated linearly inside cells; the
    discrete contribution is summed exactly. Past the first cell where `1 - F(u-)` vanishes, the absolutely continuous
    contribution is integrated up to each evaluation point instead.

    """

    def __init__(self, law, grid):
        """Tabulate the compensator.

        Args:
            law: Law of R
            grid: TimeGrid covering the evaluation range

        """
        self.law = law
        self.grid = grid
        self.times = grid.times()
        self._saturated = None
        cells = []
        for index, (lo, hi) in enumerate(zip(self.times[:-1], self.times[1:])):
            try:
                cells.append(_ac_integral(law, lo, hi))
            except DegenerateLaw:
                LOGGER.debug(f'Compensator table saturates in ({lo}, {hi}]')
                self._saturated = index
                cells.extend([math.inf] * (len(self.times) - 1 - len(cells)))
                break
        self._ac = np.concatenate(([0.0], np.cumsum(cells)))

        points, masses = law.discrete_points()
        survival = 1.0 - law.left_cdf(points)
        with np.errstate(divide='ignore'):
            increments = np.where(survival >= DEGENERATE_CAP, masses / np.maximum(survival, DEGENERATE_CAP), math.inf)
        self._points = points
        self._cumulative = np.cumsum(increments)

    @property
    def has_jumps(self):
        """Return True if the compensator jumps, so R is not totally inaccessible."""  # noqa: DAR201
        return bool(self.law.atoms)

    def _saturated_ac(self, x):
        """Integrate the continuous part from the start of the saturating cell to each of `x`."""  # noqa: DAR101,DAR201
        lo = self.times[self._saturated]
        base = self._ac[self._saturated]
        exact = {value: base + _ac_integral(self.law, lo, value) for value in np.unique(x)}
        return np.array([exact[value] for value in x])

    def at(self, x):
        """Return the compensator evaluated at the times `x` (any shape).

        Args:
            x: evaluation times, already stopped at R

        Returns:
            np.ndarray: compensator values

        Raises:
            DegenerateLaw: if an evaluation falls where the survival probability vanished

        """
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        with np.errstate(invalid='ignore'):
            ac = np.interp(flat, self.times, self._ac)
        if self._saturated is not None:
            beyond = flat > self.times[self._saturated]
            if np.any(beyond):
                ac[beyond] = self._saturated_ac(flat[beyond])
        index = np.searchsorted(self._points, flat, side='right')
        jumps = np.where(index > 0, np.concatenate(([0.0], self._cumulative))[index], 0.0)
        values = (ac + jumps).reshape(x.shape)
        if not np.all(np.isfinite(values)):
            raise DegenerateLaw('Compensator evaluated beyond the point where 1 - F(u-) vanished')
        return values

    def path(self, r):
        """Return the compensator path `A_{t ^ r}` on the table grid."""  # noqa: DAR101,DAR201
        return IncreasingPath(self.grid, self.at(np.minimum(self.times, r)))


# ----------------------------------------------------------------------------------------------------------------------
# Empirical laws and diagnostics


def empirical_law(samples, bandwidth_rule='silverman', atom_threshold=None, min_samples=MIN_SAMPLES):
    """Estimate the law of R from stopping samples. Censored samples keep their mass outside the law.

    Args:
        samples: list of StoppingSample
        bandwidth_rule: KDE bandwidth rule for the diagnostic density
        atom_threshold: minimum number of bit-equal samples for an atom. Default is `max(5, 0.1% of samples)`
        min_samples: minimum number of uncensored samples

    Returns:
        Law: atoms plus an empirical step part

    Raises:
        InsufficientData: below the sample floor

    """
    n_total = len(samples)
    values = np.array([sample.value for sample in samples if not sample.censored], dtype=float)
    if len(values) < min_samples:
        raise InsufficientData(f'Need {min_samples} uncensored samples. Found: {len(values)} of {n_total}')
    threshold = atom_threshold if atom_threshold is not None else max(5, math.ceil(0.001 * n_total))

    unique, counts = np.unique(values, return_counts=True)
    is_atom = counts >= threshold
    atoms = tuple(zip(unique[is_atom], counts[is_atom] / n_total))
    rest = values[~np.isin(values, unique[is_atom])]
    LOGGER.debug(f'empirical_law: {len(values)} uncensored of {n_total}, {len(atoms)} atom(s)')
    continuous = EmpiricalPart(rest, len(rest) / n_total, bandwidth_rule) if len(rest) else None
    return Law(atoms=atoms, continuous=continuous)


def ks_distance(law, reference_cdf):
    """Return the sup-distance between a law with discrete points and a reference CDF.

    Both one-sided limits are compared at every discrete point, which attains the supremum when the reference is
    continuous.

    Args:
        law: Law with atoms or an empirical part
        reference_cdf: vectorized callable

    Returns:
        float: Kolmogorov-Smirnov distance

    """
    points, _masses = law.discrete_points()
    if not len(points):
        raise InsufficientData('Law has no discrete points to compare')
    reference = reference_cdf(points)
    return float(max(np.max(np.abs(law.cdf(points) - reference)), np.max(np.abs(law.left_cdf(points) - reference))))


@dataclass(frozen=True)
class SingularityReport:
    """Share of an increasing path's mass carried by a set, and the Lebesgue measure of that set."""

    mass_on_set: float
    lebesgue_of_set: float
    epsilon_used: float
    total_mass: float = field(default=None)


def mass_decomposition(path, support_indicator, epsilon_used=math.nan):
    """Split the increments of an increasing path between a set of grid indices and its complement.

    The increment `values[i] - values[i - 1]` is attributed to index `i`.

    Args:
        path: IncreasingPath
        support_indicator: boolean per grid index (length `n_steps + 1`)
        epsilon_used: half-width that defined the set, echoed in the report

    Returns:
        SingularityReport: mass share on the set and the set's Lebesgue measure

    Raises:
        ZeroMass: if the path is constant
        GridError: if the indicator does not match the path grid

    """
    indicator = np.asarray(support_indicator, dtype=bool)
    if indicator.shape != path.values.shape:
        raise GridError(f'Indicator shape {indicator.shape} does not match path {path.values.shape}')
    increments = path.increments()
    total = float(np.sum(increments))
    if total <= 0:
        raise ZeroMass('Increasing path is constant')
    on_set = float(np.sum(increments[indicator[1:]]))
    return SingularityReport(
        mass_on_set=min(on_set / total, 1.0),
        lebesgue_of_set=path.grid.step() * int(np.count_nonzero(indicator[1:])),
        epsilon_used=epsilon_used,
        total_mass=total,
    )
