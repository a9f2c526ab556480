import os
from typing import Tuple

import numpy as np
from fuzzywuzzy import fuzz
from scipy.special import logsumexp
from scipy.stats import wasserstein_distance

import hblab.globals
from .exceptions import UserException, QuadratureException


def as_points(x, dim: int, what="point") -> Tuple[np.ndarray, bool]:
    """Validates `x` and returns it as a (n, dim) float array, together with a flag telling whether a single
    point was passed. A scalar is accepted when dim == 1.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim == 1 and arr.shape[0] != 1:
            # A 1-D array of scalars in one dimension is a batch of points
            arr = arr.reshape(-1, 1)
            single = False
        else:
            arr = arr.reshape(1, -1)

    if arr.shape[-1] != dim:
        raise UserException(f"Expected a {what} of dimension {dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise UserException(f"Non-finite coordinates in {what}: {np.asarray(x)!r}")
    return arr.reshape(-1, dim), single


def trapezoid_weights_1d(axis: np.ndarray) -> np.ndarray:
    h = np.diff(axis)
    w = np.zeros_like(axis)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def trapezoid_weights(axes) -> np.ndarray:
    """Tensor-product trapezoid weights with shape (len(axes[0]), len(axes[1]), ...)"""
    weights = np.ones(())
    for axis in axes:
        weights = np.multiply.outer(weights, trapezoid_weights_1d(axis))
    return weights


def log_trapezoid(log_values: np.ndarray, weights: np.ndarray, axis=None) -> np.ndarray:
    """log of the trapezoid integral of exp(log_values), stabilized with log-sum-exp"""
    with np.errstate(divide="ignore"):
        result = logsumexp(log_values, b=weights, axis=axis)
    if not np.all(np.isfinite(result)):
        raise QuadratureException("Integrand underflowed or overflowed everywhere on the quadrature grid")
    return result


def boundary_log_ratio(log_values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """log of (integral over the outermost nodes) / (total integral), along the last axis of a batch of 1-D
    integrands or over the outer frame of a batch of 2-D integrands (last two axes)
    """
    frame = np.zeros(log_values.shape[-weights.ndim :], dtype=bool)
    index = [slice(None)] * weights.ndim
    for axis in range(weights.ndim):
        for edge in (0, -1):
            index[axis] = edge
            frame[tuple(index)] = True
        index[axis] = slice(None)

    axes = tuple(range(-weights.ndim, 0))
    with np.errstate(divide="ignore"):
        total = logsumexp(log_values, b=weights, axis=axes)
        edge = logsumexp(log_values, b=weights * frame, axis=axes)
    return edge - total


def wasserstein1(samples: np.ndarray, axes, density: np.ndarray) -> float:
    """W1 distance between samples and a density tabulated on a tensor grid.
    In 2-D this is the largest of the per-axis marginal distances.
    """
    samples = np.asarray(samples, dtype=float).reshape(len(samples), -1)
    weights = trapezoid_weights(axes) * np.clip(density, 0.0, None)
    distances = []
    for axis_index, axis in enumerate(axes):
        other_axes = tuple(i for i in range(len(axes)) if i != axis_index)
        marginal = weights.sum(axis=other_axes) if other_axes else weights
        distances.append(wasserstein_distance(samples[:, axis_index], axis, v_weights=marginal))
    return float(max(distances))


def sample_grid_density(axes, density: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draws n points from a density tabulated on a tensor grid.
    In 1-D the piecewise-linear CDF is inverted; in 2-D a cell is drawn with probability equal to its
    trapezoid mass and the point is uniform inside the cell.
    """
    density = np.clip(density, 0.0, None)
    if len(axes) == 1:
        x = axes[0]
        cell_mass = 0.5 * (density[1:] + density[:-1]) * np.diff(x)
        cdf = np.concatenate([[0.0], np.cumsum(cell_mass)])
        cdf /= cdf[-1]
        u = rng.random(n)
        return np.interp(u, cdf, x).reshape(n, 1)

    x, y = axes
    cell_mass = 0.25 * (density[1:, 1:] + density[:-1, 1:] + density[1:, :-1] + density[:-1, :-1])
    cell_mass = cell_mass * np.outer(np.diff(x), np.diff(y))
    p = (cell_mass / cell_mass.sum()).ravel()
    cells = rng.choice(p.size, size=n, p=p)
    i, j = np.unravel_index(cells, cell_mass.shape)
    u = rng.random((n, 2))
    return np.column_stack([x[i] + u[:, 0] * (x[i + 1] - x[i]), y[j] + u[:, 1] * (y[j + 1] - y[j])])


def resolve_threads(requested=None) -> int:
    """Number of worker threads: explicit request, else hblab.globals.threads, capped by HBL_THREADS"""
    cap = os.environ.get("HBL_THREADS")
    threads = requested or hblab.globals.threads or os.cpu_count() or 1
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise UserException(f"HBL_THREADS must be a positive integer, got {cap!r}")
        if cap < 1:
            raise UserException(f"HBL_THREADS must be a positive integer, got {cap}")
        threads = min(threads, cap)
    return max(1, int(threads))


def suggest_name(user_name: str, candidates) -> str:
    best_ratio = 0
    best_match = None
    for candidate in candidates:
        ratio = fuzz.ratio(user_name, candidate)
        if ratio > best_ratio:
            best_ratio = ratio
            best_match = candidate
    return best_match


def did_you_mean(user_name: str, candidates) -> str:
    suggestion = suggest_name(user_name, candidates)
    return f" Did you mean {suggestion}?" if suggestion else ""
