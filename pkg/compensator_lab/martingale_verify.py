"""Compensated indicators, test-functional orthogonality checks and the Ethier-Kurtz conditional-increment bound.

A bundle holds every path sampled at a short list of evaluation times. Observables are stored per evaluation time and
are computed by the scenario from the path up to that time only, so a functional evaluated at `s` cannot look ahead.

"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .lab_helpers import LOGGER, GridError, InsufficientPaths, ViewViolation
from .sim_core import IncreasingPath, SamplePath

MIN_PATHS = 1000
"""Minimum number of paths for `test_orthogonality()`."""

Z_THRESHOLD = 4.0
"""Default absolute z-score limit per row."""

FUNCTIONAL_KINDS = ('constant-one', 'bin-indicator', 'clipped-polynomial')


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Values of a process for every path at the evaluation times, plus the observables available at those times."""

    times: np.ndarray
    values: np.ndarray
    observables: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(times):
            raise GridError(f'Expected values of shape (n_paths, {len(times)}). Found: {values.shape}')
        observables = {name: np.asarray(obs, dtype=float) for name, obs in self.observables.items()}
        for name, obs in observables.items():
            if obs.shape != values.shape:
                raise GridError(f'Observable {name} has shape {obs.shape}, expected {values.shape}')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'observables', observables)

    @property
    def n_paths(self):
        return self.values.shape[0]

    def index_of(self, t):
        """Return the column of evaluation time `t`.

        Args:
            t: evaluation time present in `times`

        Returns:
            int: column index

        Raises:
            GridError: if `t` is not an evaluation time of the bundle

        """
        index = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[index], t, rel_tol=1e-9, abs_tol=1e-12):
            raise GridError(f'{t} is not an evaluation time of the bundle: {self.times}')
        return index

    def with_values(self, values):
        """Return a bundle with the same times and observables and new values."""  # noqa: DAR101,DAR201
        return PathBundle(self.times, values, self.observables)


@dataclass(frozen=True)
class FiltrationView:
    """Named set of observables a test functional may read at time `s`."""

    name: str
    observables: frozenset

    def __post_init__(self):
        object.__setattr__(self, 'observables', frozenset(self.observables))

    def read(self, bundle, observable, s_index):
        """Return the observable at column `s_index`, refusing names outside the view.

        Args:
            bundle: PathBundle
            observable: observable name
            s_index: column of the conditioning time

        Returns:
            np.ndarray: one value per path

        Raises:
            ViewViolation: if the observable is not part of the view or not in the bundle

        """
        if observable not in self.observables:
            raise ViewViolation(f'{observable} is not observable in the {self.name} view')
        if observable not in bundle.observables:
            raise ViewViolation(f'{observable} is missing from the bundle')
        return bundle.observables[observable][:, s_index]


@dataclass(frozen=True)
class TestFunctional:
    """Bounded functional `H_s` of one observable.

    `bin-indicator` uses `params = (lo, hi)` and returns `1{lo <= x < hi}`. `clipped-polynomial` uses the coefficients
    in `params` (lowest degree first) and clips the polynomial to `[-bound, bound]`.

    """

    __test__ = False

    name: str
    kind: str = 'constant-one'
    observable: str = None
    params: tuple = ()
    bound: float = 1.0

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ViewViolation(f'Unknown functional kind: {self.kind}')
        if self.kind != 'constant-one' and self.observable is None:
            raise ViewViolation(f'Functional {self.name} needs an observable')

    def evaluate(self, bundle, view, s_index):
        """Return `H_s` for every path.

        Args:
            bundle: PathBundle
            view: FiltrationView
            s_index: column of the conditioning time

        Returns:
            np.ndarray: bounded values

        Raises:
            ViewViolation: if the output leaves the declared bound

        """
        if self.kind == 'constant-one':
            output = np.ones(bundle.n_paths)
        else:
            x = view.read(bundle, self.observable, s_index)
            if self.kind == 'bin-indicator':
                lo, hi = self.params
                output = ((x >= lo) & (x < hi)).astype(float)
            else:
                output = np.clip(np.polynomial.polynomial.polyval(x, self.params), -self.bound, self.bound)
        if np.any(np.abs(output) > self.bound):
            raise ViewViolation(f'Functional {self.name} exceeded its bound {self.bound}')
        return output


# ----------------------------------------------------------------------------------------------------------------------
# Processes


def compensated_indicator(r, compensator):
    """Return `M_t = 1{t >= R} - A_t` on the compensator's grid.

    Args:
        r: StoppingSample. A censored sample leaves the indicator at 0
        compensator: IncreasingPath, already stopped at R

    Returns:
        SamplePath: compensated indicator

    """
    indicator = (compensator.grid.times() >= r.value).astype(float)
    return SamplePath(compensator.grid, indicator - compensator.values)


def quadratic_variation_discrete(path):
    """Return the running sum of squared grid increments of `path`."""  # noqa: DAR101,DAR201
    return IncreasingPath(path.grid, np.concatenate(([0.0], np.cumsum(np.diff(path.values) ** 2))))


def quantile_edges(x, n_bins):
    """Return equal-probability bin edges for `x` with open outer edges.

    Args:
        x: sample values
        n_bins: number of bins

    Returns:
        np.ndarray: `n_bins + 1` nondecreasing edges from `-inf` to `inf`

    """
    inner = np.quantile(x, np.linspace(0, 1, n_bins + 1)[1:-1])
    return np.concatenate(([-np.inf], inner, [np.inf]))


def assign_bins(x, edges):
    """Return the bin of each value (`edges[j] <= x < edges[j + 1]`), or -1 outside all bins."""  # noqa: DAR101,DAR201
    index = np.searchsorted(edges, x, side='right') - 1
    return np.where((index >= 0) & (index < len(edges) - 1), index, -1)


def _z_score(estimate, std_error):
    if std_error > 0:
        return estimate / std_error
    return 0.0 if estimate == 0 else math.copysign(math.inf, estimate)


# ----------------------------------------------------------------------------------------------------------------------
# Orthogonality


@dataclass(frozen=True)
class MartingaleRow:
    s: float
    t: float
    functional: str
    estimate: float
    std_error: float
    z: float
    passed: bool


@dataclass(frozen=True)
class MartingaleReport:
    """Rows of `E[H_s (M_t - M_s)]` estimates with their verdicts."""

    rows: tuple
    n_paths: int
    z_threshold: float = Z_THRESHOLD
    view: str = ''

    @property
    def overall_pass(self):
        return all(row.passed for row in self.rows)

    def row(self, s, t, functional):
        """Return the row for `(s, t, functional)`."""  # noqa: DAR101,DAR201
        return next(row for row in self.rows if (row.s, row.t, row.functional) == (s, t, functional))

    def max_abs_z(self):
        return max((abs(row.z) for row in self.rows), default=0.0)

    def recompute(self):
        """Return a copy whose pass flags are re-derived from the stored z-scores."""  # noqa: DAR201
        rows = tuple(MartingaleRow(**{**asdict(row), 'passed': abs(row.z) <= self.z_threshold}) for row in self.rows)
        return MartingaleReport(rows, self.n_paths, self.z_threshold, self.view)

    def to_frame(self):
        """Return a DataFrame with columns (s, t, functional, estimate, std_error, z, pass)."""  # noqa: DAR201
        frame = pd.DataFrame([asdict(row) for row in self.rows],
                             columns=['s', 't', 'functional', 'estimate', 'std_error', 'z', 'passed'])
        return frame.rename(columns={'passed': 'pass'})

    def to_json(self):
        return {
            'kind': 'martingale',
            'view': self.view,
            'n_paths': self.n_paths,
            'z_threshold': self.z_threshold,
            'n_rows': len(self.rows),
            'overall_pass': self.overall_pass,
            'rows': [asdict(row) for row in self.rows],
        }

    @classmethod
    def from_json(cls, obj):
        rows = tuple(MartingaleRow(**row) for row in obj['rows'])
        return cls(rows, obj['n_paths'], obj['z_threshold'], obj.get('view', ''))


def _check_pair(bundle, s, t):
    if not s < t:
        raise GridError(f'Expected s < t. Found: ({s}, {t})')
    return bundle.index_of(s), bundle.index_of(t)


def test_orthogonality(bundle, view, functionals, pairs, z_threshold=Z_THRESHOLD, min_paths=MIN_PATHS):
    """Estimate `E[H_s (M_t - M_s)]` for every pair and functional and compare the z-score to the threshold.

    Per-path products are formed first and then averaged in path order, so the report does not depend on how the
    bundle was produced.

    Args:
        bundle: PathBundle of M
        view: FiltrationView the functionals read from
        functionals: list of TestFunctional
        pairs: list of `(s, t)` evaluation times with `s < t`
        z_threshold: absolute z-score limit. Default is 4
        min_paths: minimum number of paths

    Returns:
        MartingaleReport: one row per `(s, t, functional)`

    Raises:
        InsufficientPaths: below `min_paths`

    """
    n_paths = bundle.n_paths
    if n_paths < min_paths:
        raise InsufficientPaths(f'Need {min_paths} paths. Found: {n_paths}')

    rows = []
    for s, t in pairs:
        s_index, t_index = _check_pair(bundle, s, t)
        increment = bundle.values[:, t_index] - bundle.values[:, s_index]
        for functional in functionals:
            products = functional.evaluate(bundle, view, s_index) * increment
            estimate = float(np.mean(products))
            std_error = float(np.std(products, ddof=1) / math.sqrt(n_paths))
            z = _z_score(estimate, std_error)
            rows.append(MartingaleRow(s, t, functional.name, estimate, std_error, z, abs(z) <= z_threshold))
    report = MartingaleReport(tuple(rows), n_paths, z_threshold, view.name)
    LOGGER.debug(f'{view.name}: {len(rows)} rows, max |z| = {report.max_abs_z():.3f}, pass={report.overall_pass}')
    return report


test_orthogonality.__test__ = False  # keep pytest from collecting the import


# ----------------------------------------------------------------------------------------------------------------------
# Ethier-Kurtz


@dataclass(frozen=True)
class EthierKurtzRow:
    s: float
    t: float
    bin_lo: float
    bin_hi: float
    count: int
    estimate: float
    bound: float
    std_error: float
    passed: bool


@dataclass(frozen=True)
class EthierKurtzReport:
    """Per-bin conditional increments of A against the linear bound `K (t - s)`."""

    rows: tuple
    empty_bins: tuple
    K: float
    se_multiplier: float = 3.0

    @property
    def overall_pass(self):
        return bool(self.rows) and all(row.passed for row in self.rows)

    def to_frame(self):
        return pd.DataFrame([asdict(row) for row in self.rows], columns=list(EthierKurtzRow.__dataclass_fields__))

    def to_json(self):
        return {
            'kind': 'ethier-kurtz',
            'K': self.K,
            'se_multiplier': self.se_multiplier,
            'overall_pass': self.overall_pass,
            'empty_bins': [list(item) for item in self.empty_bins],
            'rows': [asdict(row) for row in self.rows],
        }

    @classmethod
    def from_json(cls, obj):
        rows = tuple(EthierKurtzRow(**row) for row in obj['rows'])
        empty = tuple(tuple(item) for item in obj['empty_bins'])
        return cls(rows, empty, obj['K'], obj['se_multiplier'])


def check_ethier_kurtz(bundle, view, observable, edges, K, pairs, bound_process=None, se_multiplier=3.0):
    """Check `E[A_t - A_s | bin of the observable at s] <= K (t - s)` bin by bin.

    A bin passes iff its mean increment is at most the bound plus `se_multiplier` standard errors. Bins with fewer than
    two paths are skipped and listed in `empty_bins`.

    Args:
        bundle: PathBundle of the increasing process A
        view: FiltrationView the observable must belong to
        observable: name of the conditioning observable
        edges: bin edges, see `assign_bins()`
        K: nonnegative constant bound
        pairs: list of `(s, t)` evaluation times
        bound_process: optional observable name of an increasing process `K_s` per path. When given, the bound for
            a path is `K_t - K_s` instead of `K (t - s)`
        se_multiplier: standard-error headroom. Default is 3

    Returns:
        EthierKurtzReport: per-bin verdicts

    """
    rows, empty = [], []
    for s, t in pairs:
        s_index, t_index = _check_pair(bundle, s, t)
        x = view.read(bundle, observable, s_index)
        increment = bundle.values[:, t_index] - bundle.values[:, s_index]
        if bound_process is None:
            allowed = np.full(bundle.n_paths, K * (t - s))
        else:
            process = bundle.observables[bound_process]
            allowed = process[:, t_index] - process[:, s_index]
        bins = assign_bins(x, edges)
        for j, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            mask = bins == j
            count = int(np.count_nonzero(mask))
            if count < 2:
                empty.append((s, t, float(lo), float(hi)))
                continue
            excess = increment[mask] - allowed[mask]
            std_error = float(np.std(excess, ddof=1) / math.sqrt(count))
            rows.append(EthierKurtzRow(
                s=s, t=t, bin_lo=float(lo), bin_hi=float(hi), count=count,
                estimate=float(np.mean(increment[mask])), bound=float(np.mean(allowed[mask])),
                std_error=std_error, passed=bool(np.mean(excess) <= se_multiplier * std_error),
            ))
    if empty:
        LOGGER.warning(f'EmptyBins: skipped {len(empty)} bin(s): {empty}')
    return EthierKurtzReport(tuple(rows), tuple(empty), K, se_multiplier)
