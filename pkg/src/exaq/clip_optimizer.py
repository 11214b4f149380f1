"""Optimal clipping search, linear sigma->clip models, and the empirical oracle.

The total post-exponent MSE is minimized over the clipping value C by a coarse
log-dense grid (which doubles as a unimodality probe) followed by golden-section
refinement. Solving across a sigma range and least-squares fitting C*(sigma)
gives a two-parameter linear predictor.

The package also ships fixed default predictor coefficients for 2- and 3-bit
quantization (-1.66*sigma - 1.85 and -1.75*sigma - 2.06). These are tuned for
max-subtracted activation rows, whose post-shift mean sits several sigma below
zero; they are intentionally not the mu=0 analytic fit, which lands near
-0.49*sigma - 1.07 for 2-bit and would clip away most of the mass of shifted
rows. `fit_linear_model` reproduces the analytic fit for any mu=0 model
configuration; the defaults are kept as shipped constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .gaussian_mse import GaussianParams, mse_total
from .quantizer import QuantSpec

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


class BoundarySolutionError(RuntimeError):
    """Grid minimum landed on a search boundary; the model is being misused."""


@dataclass(frozen=True)
class ClipSolution:
    c_star: float
    mse_at_min: float
    method: str
    grid_lo: float
    grid_hi: float
    unimodal: bool


@dataclass(frozen=True)
class LinearClipModel:
    """C*(sigma) ~= slope * sigma + intercept, fitted over [sigma_lo, sigma_hi]."""

    bits: int
    slope: float
    intercept: float
    sigma_lo: float
    sigma_hi: float
    residual_max: float

    def __post_init__(self):
        if not self.sigma_lo < self.sigma_hi:
            raise ValueError("need sigma_lo < sigma_hi")


class PredictedClip(NamedTuple):
    clip: float
    in_fitted_range: bool


# Shipped defaults (see module docstring); residual_max is not applicable.
DEFAULT_CLIP_MODELS = {
    2: LinearClipModel(bits=2, slope=-1.66, intercept=-1.85,
                       sigma_lo=0.9, sigma_hi=3.4, residual_max=float("nan")),
    3: LinearClipModel(bits=3, slope=-1.75, intercept=-2.06,
                       sigma_lo=0.9, sigma_hi=3.4, residual_max=float("nan")),
}


def _log_dense_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """n ascending clip candidates in [lo, hi], hi < 0, denser near zero."""
    return -np.exp(np.linspace(math.log(-lo), math.log(-hi), n))


def _is_unimodal(vals: np.ndarray) -> bool:
    """True if first differences change sign exactly once, ignoring float jitter."""
    d = np.diff(vals)
    tol = 1e-12 * max(float(np.max(np.abs(vals))), 1e-300)
    signs = [s for s in np.sign(np.where(np.abs(d) <= tol, 0.0, d)) if s != 0.0]
    changes = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    return changes == 1


def _golden_refine(fn, a, b, c, tol):
    """Golden-section minimization inside the bracket (a, c) containing b."""
    lo, hi = a, c
    x1 = hi - GOLDEN_RATIO * (hi - lo)
    x2 = lo + GOLDEN_RATIO * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN_RATIO * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN_RATIO * (hi - lo)
            f2 = fn(x2)
    x = 0.5 * (lo + hi)
    return x, fn(x)


def solve_optimal_clip(
    g: GaussianParams,
    M: int,
    grid_points: int = 400,
    grid_hi: float = -1e-3,
    refine_tol: float = 1e-4,
) -> ClipSolution:
    """Minimize total MSE over C in [mu - 10 sigma, grid_hi].

    Coarse grid first (log-dense near zero, also used to probe unimodality),
    then golden-section refinement of the best bracket down to refine_tol.
    A minimum on either grid boundary raises BoundarySolutionError.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    grid_lo = g.mu - 10.0 * g.sigma
    if grid_lo >= grid_hi:
        raise ValueError("degenerate search interval")
    grid = _log_dense_grid(grid_lo, grid_hi, grid_points)
    vals = np.array([mse_total(g, c, M).total for c in grid])
    i = int(np.argmin(vals))
    if i == 0 or i == len(grid) - 1:
        raise BoundarySolutionError(
            f"minimum at search boundary C={grid[i]:.6g} for g=({g.mu}, {g.sigma}), M={M}"
        )
    unimodal = _is_unimodal(vals)
    fn = lambda c: mse_total(g, c, M).total
    c_star, f_star = _golden_refine(fn, grid[i - 1], grid[i], grid[i + 1], refine_tol)
    return ClipSolution(
        c_star=float(c_star),
        mse_at_min=float(f_star),
        method="grid+golden",
        grid_lo=float(grid_lo),
        grid_hi=float(grid_hi),
        unimodal=bool(unimodal),
    )


def fit_linear_model(
    M: int,
    sigma_lo: float = 0.9,
    sigma_hi: float = 3.4,
    n_points: int = 26,
    mu: float = 0.0,
    threads: int = 1,
) -> LinearClipModel:
    """Least-squares line through C*(sigma) at n_points equally spaced sigmas.

    The per-sigma solves are independent; threads > 1 runs them concurrently.
    """
    if n_points < 8:
        raise ValueError("n_points must be >= 8")
    if not (0.0 < sigma_lo < sigma_hi):
        raise ValueError("need 0 < sigma_lo < sigma_hi")
    sigmas = np.linspace(sigma_lo, sigma_hi, n_points)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            cs = np.array([sol.c_star for sol in ex.map(
                lambda s: solve_optimal_clip(GaussianParams(mu, float(s)), M), sigmas)])
    else:
        cs = np.array([solve_optimal_clip(GaussianParams(mu, s), M).c_star for s in sigmas])
    design = np.vstack([sigmas, np.ones_like(sigmas)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, cs, rcond=None)
    residual_max = float(np.max(np.abs(cs - design @ np.array([slope, intercept]))))
    return LinearClipModel(
        bits=M,
        slope=float(slope),
        intercept=float(intercept),
        sigma_lo=float(sigma_lo),
        sigma_hi=float(sigma_hi),
        residual_max=residual_max,
    )


def predict_clip(model: LinearClipModel, sigma: float) -> PredictedClip:
    """Evaluate the line; sigma outside the fitted range is permitted but flagged."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    value = model.slope * sigma + model.intercept
    return PredictedClip(clip=float(value),
                         in_fitted_range=bool(model.sigma_lo <= sigma <= model.sigma_hi))


def simulate_empirical_clip(
    g: GaussianParams,
    M: int,
    n_samples: int,
    seed: int,
    c_grid: Sequence[float],
):
    """Codec-level oracle: empirical post-exponent MSE over a grid of clips.

    Draws one batch of Gaussian samples conditioned on x <= 0 (the codec's
    domain; conditioning rescales both error integrals equally, so the argmin
    is that of the analytic model). Every grid C quantizes the same batch
    (common random numbers keep the curve smooth in C). Returns the argmin
    grid point and the full (C, empirical MSE) curve.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    c_grid = np.asarray(list(c_grid), dtype=np.float64)
    if c_grid.size == 0:
        raise ValueError("empty clip grid")
    if np.any(c_grid >= 0):
        raise ValueError("all grid clips must be < 0")
    if np.any(np.diff(c_grid) <= 0):
        raise ValueError("clip grid must be sorted ascending")

    rng = np.random.default_rng(seed)
    samples = np.empty(0, dtype=np.float64)
    while samples.size < n_samples:
        batch = rng.normal(g.mu, g.sigma, size=max(n_samples, 1024))
        samples = np.concatenate([samples, batch[batch <= 0.0]])
    x = samples[:n_samples]
    ex = np.exp(x)

    curve = []
    for C in c_grid:
        spec = QuantSpec.from_clip(M, float(C))
        q = spec.dequantize(spec.quantize(np.minimum(x, 0.0)))
        curve.append((float(C), float(np.mean((np.exp(q) - ex) ** 2))))
    best = min(range(len(curve)), key=lambda k: curve[k][1])
    return curve[best][0], curve
