"""Test the compensator_calc.py file."""

import json
import math

import numpy as np
import pytest
import scipy.stats
from compensator_lab.compensator_calc import (CompensatorTable, Law, TablePart, dellacherie_compensator,
                                              empirical_law, exponential_law, gamma_law, hazard_rate,
                                              jump_increments, ks_distance, law_from_json, law_to_json,
                                              log_survival_compensator, mass_decomposition, uniform_law)
from compensator_lab.lab_helpers import ConfigError, DegenerateLaw, GridError, InsufficientData, LabError, ZeroMass
from compensator_lab.sim_core import IncreasingPath, RngSpec, StoppingSample, TimeGrid

from .configuration import TEST_DATA_DIR

ATOMIC = law_from_json(json.loads((TEST_DATA_DIR / 'atomic_law.json').read_text()))
"""Law with atoms {(1, 0.5), (2, 0.3), (3, 0.2)}."""


def _counterexample_survival(t):
    return 2 * math.exp(t / 2) * scipy.stats.norm.cdf(-math.sqrt(t))


def _counterexample_density(t):
    root = math.sqrt(t)
    return math.exp(t / 2) * (scipy.stats.norm.pdf(root) / root - scipy.stats.norm.cdf(-root))


def test_dellacherie_exponential():
    """Check that the exponential compensator is the rate times the time."""
    value = dellacherie_compensator(exponential_law(2.0), 3.0)  # act

    assert value == pytest.approx(6.0, rel=1e-9)
    assert dellacherie_compensator(exponential_law(2.0), 3.0, r=1.0) == pytest.approx(2.0, rel=1e-9)
    assert log_survival_compensator(exponential_law(2.0), 3.0) == pytest.approx(6.0, abs=1e-12)


def test_dellacherie_atoms():
    """Check the atomic compensator increments against the hazard enumeration."""
    points, increments = jump_increments(ATOMIC)  # act

    assert points.tolist() == [1.0, 2.0, 3.0]
    assert np.allclose(increments, [0.5, 0.6, 1.0], rtol=0, atol=1e-12)
    assert dellacherie_compensator(ATOMIC, 3.0) == pytest.approx(2.1, abs=1e-12)
    assert dellacherie_compensator(ATOMIC, 2.5, r=1.5) == pytest.approx(0.5, abs=1e-12)


def test_single_atom():
    """Check that a certain time has a unit jump at its atom."""
    law = Law(atoms=((1.0, 1.0),))

    value = dellacherie_compensator(law, 2.0)  # act

    assert value == pytest.approx(1.0, abs=1e-12)
    assert CompensatorTable(law, TimeGrid(2.0, 4)).has_jumps


@pytest.mark.parametrize('law,t', [
    (exponential_law(1.0), 2.5),
    (uniform_law(0.0, 1.0), 0.9),
    (gamma_law(2, 1.0), 3.0),
])
def test_integral_matches_log_survival(law, t):
    """Check that the integral form agrees with -ln(1 - F) on continuous laws."""
    integral = dellacherie_compensator(law, t)  # act

    assert integral == pytest.approx(log_survival_compensator(law, t), abs=1e-6)


def test_defective_table_law():
    """Check the table law F(t) = t / 2 on [0, 1] against -ln(0.5)."""
    law = Law(continuous=TablePart(((0.0, 0.0), (1.0, 0.5))))

    integral = dellacherie_compensator(law, 1.0)  # act

    assert integral == pytest.approx(0.6931, abs=1e-4)
    assert integral == pytest.approx(log_survival_compensator(law, 1.0), abs=1e-9)
    assert log_survival_compensator(law, 0.0) == 0.0


def test_log_survival_rejects_atoms():
    """Check that the log-survival form refuses laws with atoms."""
    with pytest.raises(LabError):
        log_survival_compensator(ATOMIC, 1.0)  # act


def test_degenerate_law():
    """Check that evaluating where the survival vanished raises DegenerateLaw."""
    with pytest.raises(DegenerateLaw):
        dellacherie_compensator(uniform_law(0.0, 1.0), 1.5)  # act


def test_hazard_rate():
    """Check the exponential, uniform and counterexample hazard rates."""
    exp_law = exponential_law(2.0)

    rate = hazard_rate(lambda u: 2 * math.exp(-2 * u), exp_law, 0.7)  # act

    assert rate == pytest.approx(2.0)
    assert hazard_rate(lambda u: 1.0, uniform_law(0.0, 1.0), 0.5) == pytest.approx(2.0)

    nodes = np.linspace(0.0, 4.0, 4001)
    table = Law(continuous=TablePart(tuple((u, 1 - _counterexample_survival(u)) for u in nodes)))
    expected = _counterexample_density(1.0) / _counterexample_survival(1.0)
    assert hazard_rate(_counterexample_density, table, 1.0) == pytest.approx(expected, rel=1e-3)
    finite_difference = (_counterexample_survival(0.999) - _counterexample_survival(1.001)) / 0.002
    assert _counterexample_density(1.0) == pytest.approx(finite_difference, rel=1e-5)


def test_law_json():
    """Check parsing defaults and the JSON round trip of a mixed law."""
    law = law_from_json({'atoms': [[1.0, 0.25]], 'continuous': {'kind': 'exponential', 'rate': 2.0}})  # act

    assert law.continuous.weight == pytest.approx(0.75)
    assert law.total_mass() == pytest.approx(1.0)
    assert law_to_json(law_from_json(law_to_json(law))) == law_to_json(law)


@pytest.mark.parametrize('document', [
    {'atoms': [[1.0, 0.7], [2.0, 0.7]]},
    {'atoms': [[2.0, 0.1], [1.0, 0.1]]},
    {'continuous': {'kind': 'uniform', 'low': 1.0}},
    {'continuous': {'kind': 'weibull', 'rate': 1.0}},
    {'atoms': [], 'extra': 1},
])
def test_law_json_invalid(document):
    """Check that invalid law documents raise ConfigError."""
    with pytest.raises(ConfigError):
        law_from_json(document)  # act


def test_law_sample():
    """Check that sampling honors atom masses and censors the missing mass."""
    law = Law(atoms=((1.0, 0.5),))
    rng = RngSpec(5)

    samples = [law.sample(rng.stream(i)) for i in range(4000)]  # act

    hits = sum(sample.value == 1.0 for sample in samples)
    assert hits / len(samples) == pytest.approx(0.5, abs=0.04)
    assert all(sample.censored for sample in samples if sample.value != 1.0)


def test_compensator_table():
    """Check that the tabulated compensator matches the direct formula for a mixed law."""
    law = law_from_json({'atoms': [[1.0, 0.25]], 'continuous': {'kind': 'exponential', 'rate': 2.0}})
    table = CompensatorTable(law, TimeGrid(3.0, 300))

    values = table.at(np.array([0.5, 1.0, 2.0]))  # act

    direct = [dellacherie_compensator(law, t) for t in (0.5, 1.0, 2.0)]
    assert np.allclose(values, direct, atol=1e-6)
    assert table.path(1.5).values[-1] == pytest.approx(dellacherie_compensator(law, 1.5), abs=1e-6)


def test_compensator_table_saturating_law():
    """Check a uniform law whose survival vanishes inside the last grid cell it reaches."""
    table = CompensatorTable(uniform_law(0.0, 1.0), TimeGrid(3.0, 300))
    x = np.array([0.5, 0.98, 0.995, 0.9999])

    values = table.at(x)  # act

    assert np.allclose(values, -np.log1p(-x), rtol=1e-6)
    assert table.path(0.995).values[-1] == pytest.approx(-math.log(0.005), rel=1e-6)
    with pytest.raises(DegenerateLaw):
        table.at(1.5)


def test_empirical_law_single_atom():
    """Check that identical samples become a single atom."""
    samples = [StoppingSample.at(1.0)] * 200

    law = empirical_law(samples)  # act

    assert law.atoms == ((1.0, 1.0),)
    assert law.continuous is None


def test_empirical_law_all_censored():
    """Check that fully censored samples raise InsufficientData."""
    with pytest.raises(InsufficientData):
        empirical_law([StoppingSample.never()] * 500)  # act


def test_empirical_law_exponential():
    """Check the KS distance of an empirical exponential law and Nelson-Aalen against the hazard."""
    stream = RngSpec(9).stream(0)
    samples = [StoppingSample.at(value) for value in stream.exponential(0.5, size=20_000)]

    law = empirical_law(samples)  # act

    assert not law.atoms
    assert ks_distance(law, lambda u: 1 - np.exp(-2 * u)) < 0.015
    nelson_aalen = CompensatorTable(law, TimeGrid(1.0, 100)).at(1.0)
    assert float(nelson_aalen) == pytest.approx(2.0, abs=0.1)


def test_mass_decomposition():
    """Check mass shares for the identity clock and a path off the set."""
    grid = TimeGrid(1.0, 4)
    clock = IncreasingPath(grid, grid.times())

    report = mass_decomposition(clock, np.ones(5, dtype=bool))  # act

    assert report.mass_on_set == pytest.approx(1.0)
    assert report.lebesgue_of_set == pytest.approx(1.0)
    off_set = np.array([True, False, False, False, False])
    assert mass_decomposition(clock, off_set).mass_on_set == 0.0
    with pytest.raises(ZeroMass):
        mass_decomposition(IncreasingPath(grid, np.zeros(5)), off_set)
    with pytest.raises(GridError):
        mass_decomposition(clock, np.ones(4, dtype=bool))
