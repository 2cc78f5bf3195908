"""Distance measures between temporally separated block states, and revival statistics.

Two distances: the trace distance (half the absolute-eigenvalue sum of the
difference) and, as its spectrum-only counterpart, the total variation
distance between descendingly sorted eigenvalue vectors. A run's distance
series at a fixed temporal separation feeds a discrete slope; the sum of the
positive slopes is the revival degree, scanned over separations to give a
degree curve. Extremum spacing on either kind of series yields the
characteristic timescales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mps import DensityMatrix
from .tebd import EvolutionRecord

MEASURES = ("td", "tvd")

_REVIVAL_FLOOR = 1e-12
_RANGE_SLACK = 1e-12
_SPACING_TOL = 1e-9


def _entries(state) -> np.ndarray:
    if isinstance(state, DensityMatrix):
        return state.entries
    return np.asarray(state)


def trace_distance(rho, sigma) -> float:
    """Half the sum of absolute eigenvalues of (rho - sigma)."""
    a, b = _entries(rho), _entries(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def _sorted_spectrum(entries: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted descending, with truncation-level negatives zeroed
    and the vector renormalised to unit sum."""
    evals = np.linalg.eigvalsh(entries)
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    if total <= 0:
        raise ValueError("spectrum has no positive weight")
    return np.sort(evals / total)[::-1]


def total_variation_distance(rho, sigma) -> float:
    """Half the l1 distance between the descendingly sorted spectra."""
    a, b = _entries(rho), _entries(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(0.5 * np.sum(np.abs(_sorted_spectrum(a) - _sorted_spectrum(b))))


_MEASURE_FN = {"td": trace_distance, "tvd": total_variation_distance}


def _check_measure(measure: str) -> str:
    key = measure.lower()
    if key not in _MEASURE_FN:
        raise ValueError(f"measure must be one of {MEASURES}, got {measure!r}")
    return key


@dataclass(frozen=True, eq=False)
class DistanceSeries:
    """Distance between states separated by ``delta``, against the earlier time."""

    measure: str
    ell: int
    delta: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if len(self.times) > 1:
            gaps = np.diff(self.times)
            if np.max(np.abs(gaps - gaps[0])) > _SPACING_TOL:
                raise ValueError("series times are not uniformly spaced")
        if len(self.values) and (
            np.min(self.values) < -_RANGE_SLACK or np.max(self.values) > 1.0 + _RANGE_SLACK
        ):
            raise ValueError("distance values outside [0, 1]")

    @property
    def spacing(self) -> float:
        if len(self.times) < 2:
            raise ValueError("series too short to define a spacing")
        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class DegreeCurve:
    """Revival degree over a grid of temporal separations."""

    measure: str
    ell: int
    deltas: np.ndarray
    degrees: np.ndarray
    window: tuple

    def __post_init__(self):
        if len(self.deltas) != len(self.degrees):
            raise ValueError("deltas and degrees must have equal length")
        if len(self.deltas) > 1 and np.min(np.diff(self.deltas)) <= 0:
            raise ValueError("delta grid must be strictly increasing")
        if len(self.degrees) and np.min(self.degrees) < 0:
            raise ValueError("degrees must be non-negative")


def distance_series(
    record: EvolutionRecord, ell: int, delta: float, measure: str
) -> DistanceSeries:
    """Series value at t_k: distance between the block states at t_k + delta and t_k."""
    key = _check_measure(measure)
    if ell not in record.rdms:
        raise ValueError(f"subsystem size {ell} was not recorded")
    offset = record.grid_offset(delta)
    fn = _MEASURE_FN[key]
    rdms = record.rdms[ell]
    n_pairs = max(len(rdms) - offset, 0)
    values = np.array([fn(rdms[k + offset], rdms[k]) for k in range(n_pairs)])
    return DistanceSeries(
        measure=key,
        ell=ell,
        delta=offset * record.spacing,
        times=np.asarray(record.times[:n_pairs], dtype=float),
        values=values,
    )


def _check_step(series: DistanceSeries, step: float):
    if len(series) < 2:
        raise ValueError("series must contain at least two values")
    if abs(step - series.spacing) > _SPACING_TOL:
        raise ValueError(f"step {step} does not match the series spacing {series.spacing}")


def slope_series(series: DistanceSeries, step: float) -> np.ndarray:
    """Discrete forward-difference slope of the series."""
    _check_step(series, step)
    return np.diff(series.values) / step


def degree(series: DistanceSeries, step: float) -> float:
    """Cumulative magnitude of revivals: the sum of strictly positive slopes."""
    slopes = slope_series(series, step)
    positive = slopes[slopes > _REVIVAL_FLOOR]
    return float(positive.sum())


def degree_vs_delta(
    record: EvolutionRecord,
    ell: int,
    delta_grid,
    measure: str,
    step: float | None = None,
) -> DegreeCurve:
    """Revival degree at each separation of the grid (grid-aligned deltas only)."""
    key = _check_measure(measure)
    step = record.spacing if step is None else step
    degrees = [
        degree(distance_series(record, ell, d, key), step) for d in delta_grid
    ]
    window = (float(record.times[0]), float(record.times[-1]))
    return DegreeCurve(
        measure=key,
        ell=ell,
        deltas=np.asarray(delta_grid, dtype=float),
        degrees=np.array(degrees),
        window=window,
    )


@dataclass(frozen=True, eq=False)
class ExtremaReport:
    """Locations of interior extrema and the spacing statistics between them."""

    kind: str
    locations: np.ndarray
    gaps: np.ndarray
    mean_gap: float | None

    @property
    def n_extrema(self) -> int:
        return len(self.locations)

    @property
    def defined(self) -> bool:
        return self.mean_gap is not None


def extrema_gaps(xs, ys, kind: str, smoothing_window: int = 1) -> ExtremaReport:
    """Consecutive spacing of local extrema of a uniformly sampled series.

    An optional centered moving average (``smoothing_window`` samples) is
    applied first; extrema are strict neighbour comparisons and endpoints are
    never counted. With fewer than two extrema the mean gap is undefined
    (``mean_gap = None``).
    """
    if kind not in ("minima", "maxima"):
        raise ValueError(f"kind must be 'minima' or 'maxima', got {kind!r}")
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1d arrays")
    if len(xs) < 3:
        raise ValueError("need at least three samples to detect extrema")
    gaps_x = np.diff(xs)
    if np.max(np.abs(gaps_x - gaps_x[0])) > _SPACING_TOL * max(1.0, abs(gaps_x[0])):
        raise ValueError("xs must be uniformly spaced")
    if smoothing_window < 1:
        raise ValueError("smoothing_window must be at least 1")
    if smoothing_window > 1:
        kernel = np.full(smoothing_window, 1.0 / smoothing_window)
        ys = np.convolve(ys, kernel, mode="valid")
        xs = np.convolve(xs, kernel, mode="valid")

    interior = np.arange(1, len(ys) - 1)
    if kind == "maxima":
        hits = interior[(ys[interior] > ys[interior - 1]) & (ys[interior] > ys[interior + 1])]
    else:
        hits = interior[(ys[interior] < ys[interior - 1]) & (ys[interior] < ys[interior + 1])]
    locations = xs[hits]
    gaps = np.diff(locations)
    mean_gap = float(gaps.mean()) if len(gaps) else None
    return ExtremaReport(kind=kind, locations=locations, gaps=gaps, mean_gap=mean_gap)
