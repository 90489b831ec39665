"""Exact multi-target Bayes posterior on tiny discrete scenarios.

The hypothesis space is the set of ordered tuples of grid points up to a
small maximum length; densities over tuples are symmetric, so ordered tuples
carry the same information as sets while avoiding repeated-point pathologies
on discrete spaces.  The likelihood of a labeled measurement set given a
tuple of targets is evaluated twice, by structurally different enumerations,
because this module is the ground truth that gates everything else.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePriorError, SizeLimitError
from .pgf import CardinalityPgf
from .statespace import MeasurementSet, SensorModel, SpatialDensity

MAX_GRID = 5
MAX_MEASUREMENTS = 6
MAX_TARGETS = 4


def tuple_prior(prior_card: CardinalityPgf, density: SpatialDensity, n_max: int):
    """Weights over ordered target tuples: P(n) * prod p(x_i) w(x_i).

    Total mass is 1 when the cardinality support fits below n_max.
    """
    support = prior_card.support_max
    if support is not None and support > n_max:
        tail = math.fsum(prior_card.prob(n) for n in range(n_max + 1, support + 1))
        if tail > 0.0:
            raise SizeLimitError(
                f"prior cardinality support {support} exceeds the oracle bound {n_max}"
            )
    cell_mass = density.values * density.grid.weights
    weights: dict[tuple, float] = {}
    for n in range(n_max + 1):
        p_n = prior_card.prob(n)
        for combo in itertools.product(range(density.grid.size), repeat=n):
            w = p_n
            for i in combo:
                w *= cell_mass[i]
            weights[combo] = w
    return weights


def _cell_products(values, table) -> np.ndarray:
    """products[mask] = prod over set bits z of table[z], by lowest-bit recursion."""
    m = len(values)
    out = np.ones(1 << m)
    for mask in range(1, 1 << m):
        low = mask & -mask
        out[mask] = out[mask ^ low] * table[low.bit_length() - 1]
    return out


def _clutter_janossy(measurements: MeasurementSet, model: SensorModel) -> np.ndarray:
    """f_FA(W) = |W|! P_FA(|W|) prod p_FA for every label subset W (by mask)."""
    m = len(measurements)
    densities = [model.kernel.clutter_value(v) for v in measurements.values]
    prods = _cell_products(measurements.values, densities)
    out = np.zeros(1 << m)
    for mask in range(1 << m):
        size = bin(mask).count("1")
        out[mask] = math.factorial(size) * model.clutter_card.prob(size) * prods[mask]
    return out


def _target_janossy(measurements: MeasurementSet, model: SensorModel) -> np.ndarray:
    """ell(W | x_i) for every point i and label subset W (by mask).

    ell(empty | x) = 1 - p_D + p_D P_z(0 | x); for W non-empty,
    ell(W | x) = p_D |W|! P_z(|W| given x) prod_z p_z(z | x).
    """
    m = len(measurements)
    n_points = model.grid.size
    out = np.zeros((n_points, 1 << m))
    for i in range(n_points):
        p_d = float(model.detection_prob[i])
        card = model.meas_card[i]
        dens = [float(model.kernel.likelihood_column(v)[i]) for v in measurements.values]
        prods = _cell_products(measurements.values, dens)
        out[i, 0] = 1.0 - p_d + p_d * card.prob(0)
        for mask in range(1, 1 << m):
            size = bin(mask).count("1")
            out[i, mask] = p_d * math.factorial(size) * card.prob(size) * prods[mask]
    return out


def multi_target_likelihood(measurements: MeasurementSet, targets, model: SensorModel) -> float:
    """Joint density of the labeled measurement set given an ordered target tuple.

    Sums f_FA(Z_0) * prod_i ell(Z_i | x_i) over every ordered decomposition of
    the labels into disjoint, possibly empty cells; evaluated by submask
    recursion over the targets.
    """
    m = len(measurements)
    if m > MAX_MEASUREMENTS:
        raise SizeLimitError(f"oracle likelihood capped at {MAX_MEASUREMENTS} measurements")
    if len(targets) > MAX_TARGETS:
        raise SizeLimitError(f"oracle likelihood capped at {MAX_TARGETS} targets")
    clutter = _clutter_janossy(measurements, model)
    target_tables = _target_janossy(measurements, model)
    return _likelihood_from_tables(tuple(targets), clutter, target_tables, m)


def _likelihood_from_tables(targets, clutter, target_tables, m) -> float:
    full = (1 << m) - 1
    n = len(targets)
    # level[mask] = sum over ways the remaining targets consume exactly `mask`.
    level = np.zeros(1 << m)
    level[0] = 1.0
    for idx in range(n - 1, -1, -1):
        table = target_tables[targets[idx]]
        nxt = np.zeros(1 << m)
        for mask in range(1 << m):
            acc = 0.0
            sub = mask
            while True:
                acc += table[sub] * level[mask ^ sub]
                if sub == 0:
                    break
                sub = (sub - 1) & mask
            nxt[mask] = acc
        level = nxt
    return float(math.fsum(clutter[full ^ mask] * level[mask] for mask in range(1 << m)))


def likelihood_by_assignments(measurements: MeasurementSet, targets, model: SensorModel) -> float:
    """Second, independent likelihood enumeration used for self-validation.

    Iterates over per-measurement assignment functions (slot 0 is clutter,
    slot i >= 1 is target i), multiplying per-measurement densities and then
    correcting each slot with its |W|!-and-cardinality factor.
    """
    m = len(measurements)
    n = len(targets)
    clutter_dens = [model.kernel.clutter_value(v) for v in measurements.values]
    target_dens = [
        [float(model.kernel.likelihood_column(v)[x]) for v in measurements.values]
        for x in targets
    ]
    terms = []
    for assignment in itertools.product(range(n + 1), repeat=m):
        value = 1.0
        counts = [0] * (n + 1)
        for z, slot in enumerate(assignment):
            counts[slot] += 1
            value *= clutter_dens[z] if slot == 0 else target_dens[slot - 1][z]
        value *= math.factorial(counts[0]) * model.clutter_card.prob(counts[0])
        for i, x in enumerate(targets):
            c = counts[i + 1]
            p_d = float(model.detection_prob[x])
            card = model.meas_card[x]
            if c == 0:
                value *= 1.0 - p_d + p_d * card.prob(0)
            else:
                value *= p_d * math.factorial(c) * card.prob(c)
        terms.append(value)
    return float(math.fsum(terms))


@dataclass(frozen=True)
class OraclePosterior:
    cardinality: np.ndarray
    intensity: np.ndarray
    normalizer: float


def exact_posterior(prior_card: CardinalityPgf, density: SpatialDensity,
                    measurements: MeasurementSet, model: SensorModel,
                    n_max: int = MAX_TARGETS) -> OraclePosterior:
    """Exhaustive Bayes posterior: cardinality distribution and intensity.

    Posterior tuple weights are prior * likelihood, normalized; the intensity
    at a point is the expected count there divided by the quadrature weight.
    """
    grid = density.grid
    if grid.size > MAX_GRID:
        raise SizeLimitError(f"oracle grid capped at {MAX_GRID} points")
    if len(measurements) > 4:
        raise SizeLimitError("oracle posterior capped at 4 measurements")
    if n_max > MAX_TARGETS:
        raise SizeLimitError(f"oracle target count capped at {MAX_TARGETS}")
    prior = tuple_prior(prior_card, density, n_max)
    m = len(measurements)
    clutter = _clutter_janossy(measurements, model)
    target_tables = _target_janossy(measurements, model)

    weights: dict[tuple, float] = {}
    for combo, prior_w in prior.items():
        if prior_w == 0.0:
            weights[combo] = 0.0
            continue
        weights[combo] = prior_w * _likelihood_from_tables(combo, clutter, target_tables, m)
    normalizer = math.fsum(weights.values())
    if normalizer <= 0.0:
        raise DegeneratePriorError("every hypothesis has zero likelihood for this data")

    cardinality = np.zeros(n_max + 1)
    counts = np.zeros(grid.size)
    for combo, w in weights.items():
        posterior_w = w / normalizer
        cardinality[len(combo)] += posterior_w
        for i in combo:
            counts[i] += posterior_w
    intensity = counts / grid.weights
    return OraclePosterior(cardinality=cardinality, intensity=intensity, normalizer=normalizer)


def compare_to_corrector(oracle_out: OraclePosterior, corrector_out,
                         intensity_tol: float = 1e-9,
                         cardinality_tol: float = 1e-10) -> dict:
    """Deviation report: intensity max relative error, cardinality total
    variation, first-moment gap, and pass flags at the given thresholds."""
    ref = oracle_out.intensity
    got = np.asarray(corrector_out.intensity, dtype=float)
    nonzero = np.abs(ref) > 0.0
    if np.any(nonzero):
        intensity_err = float(np.max(np.abs(got[nonzero] - ref[nonzero]) / np.abs(ref[nonzero])))
    else:
        intensity_err = float(np.max(np.abs(got - ref)))
    card_ref = oracle_out.cardinality
    card_got = np.asarray(corrector_out.cardinality, dtype=float)
    size = max(card_ref.size, card_got.size)
    a = np.zeros(size)
    b = np.zeros(size)
    a[: card_ref.size] = card_ref
    b[: card_got.size] = card_got
    tv = 0.5 * float(np.sum(np.abs(a - b)))
    moment_gap = float(abs(np.dot(np.arange(size), a) - np.dot(np.arange(size), b)))
    return {
        "intensity_max_rel_error": intensity_err,
        "cardinality_total_variation": tv,
        "first_moment_gap": moment_gap,
        "intensity_tolerance": intensity_tol,
        "cardinality_tolerance": cardinality_tol,
        "pass": bool(intensity_err <= intensity_tol and tv <= cardinality_tol),
    }
