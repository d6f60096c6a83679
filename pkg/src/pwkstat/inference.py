"""Bootstrap confidence bands and kernel two-sample testing on diagrams.

All Monte-Carlo loops draw from fixed-size blocks, and each block gets its
own substream, so results do not depend on how the blocks are scheduled.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidGram, InvalidSubsampleSize
from .rng import substream
from .vectorization import (
    DiagramGram,
    DiagramKernel,
    KernelSpec,
    WeightSpec,
    diagram_gram,
    evaluate,
    pwk_vector,
)

BLOCK = 256
NULL_METHODS = ("spectral", "permutation")
_SYMMETRY_TOL = 1e-10


def upper_quantile(values, alpha: float) -> float:
    """``inf{c : F(c) >= 1 - alpha}`` for the empirical CDF ``F`` of ``values``."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if len(v) == 0:
        raise InsufficientData("quantile of an empty sample")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    # guard keeps exact integers such as 0.95 * 20 from rounding up
    k = max(math.ceil((1.0 - alpha) * len(v) - 1e-9), 1)
    return float(v[k - 1])


def _blocks(total: int):
    for j, s in enumerate(range(0, total, BLOCK)):
        yield j, min(BLOCK, total - s)


# ---------------------------------------------------------------------------
# Confidence band
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvaluationGrid:
    points: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(p) == 0:
            raise ValueError("evaluation grid must be nonempty")
        if not np.all(np.isfinite(p)):
            raise ValueError("grid points must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(p))))
        elif len(self.labels) != len(p):
            raise ValueError("one label per grid point is required")

    def __len__(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "labels": list(self.labels)}


def index_grid(center, r: float, start: int, stop: int) -> EvaluationGrid:
    """Vertical segment ``{(x1, x2 + r (0.1 i - 1)) : i = start..stop}``."""
    if stop < start:
        raise ValueError(f"empty index range {start}..{stop}")
    x1, x2 = map(float, center)
    i = np.arange(start, stop + 1)
    pts = np.column_stack([np.full(len(i), x1), x2 + r * (0.1 * i - 1.0)])
    return EvaluationGrid(pts, tuple(int(v) for v in i))


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    grid: EvaluationGrid
    center: np.ndarray
    half_width: float
    alpha: float
    b: int
    seed: int
    n: int

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_width

    def contains(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return (self.lo <= v) & (v <= self.hi)

    def disjoint(self, other: "ConfidenceBand") -> np.ndarray:
        """Per grid point, whether the two intervals fail to intersect."""
        if len(self.grid) != len(other.grid) or not np.array_equal(self.grid.points, other.grid.points):
            raise ValueError("bands live on different grids")
        return (self.lo > other.hi) | (other.lo > self.hi)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "b": self.b, "seed": self.seed, "n": self.n,
            "half_width": self.half_width, "grid": self.grid.to_dict(),
            "center": self.center.tolist(), "lo": self.lo.tolist(), "hi": self.hi.tolist(),
        }

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("zx,zy,center,lo,hi\n")
            for (zx, zy), c, lo, hi in zip(self.grid.points, self.center, self.lo, self.hi):
                fh.write(",".join(format(float(v), ".17g") for v in (zx, zy, c, lo, hi)) + "\n")


def sup_statistics(F: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """``eta* = sup_z |sqrt(n) (P*_n f_z - P_n f_z)|`` for each row of resample ``indices``."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    idx = np.asarray(indices)
    boot = F[idx].mean(axis=1)
    return math.sqrt(n) * np.abs(boot - F.mean(axis=0)[None, :]).max(axis=1)


def band_from_values(F, grid: EvaluationGrid, alpha: float = 0.05, b: int = 1000, seed: int = 0) -> ConfidenceBand:
    """Bootstrap band from ``F[i, g] = f_{z_g}(D_i)``."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n < 1:
        raise InsufficientData("bootstrap band needs at least one diagram")
    if b < 1:
        raise ValueError(f"need at least one replicate, got b={b}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    eta = np.empty(b)
    for j, size in _blocks(b):
        idx = substream(seed, "bootstrap", j).integers(0, n, size=(size, n))
        eta[j * BLOCK:j * BLOCK + size] = sup_statistics(F, idx)
    xi = upper_quantile(eta, alpha)
    return ConfidenceBand(grid, F.mean(axis=0), xi / math.sqrt(n), alpha, int(b), int(seed), n)


def bootstrap_band(diagrams: Sequence, k: KernelSpec, w: WeightSpec, grid: EvaluationGrid,
                   alpha: float = 0.05, b: int = 1000, seed: int = 0) -> ConfidenceBand:
    """Uniform band for ``z -> E[V(D)](z)`` over ``grid``."""
    if len(diagrams) == 0:
        raise InsufficientData("bootstrap band needs at least one diagram")
    F = np.stack([evaluate(pwk_vector(d, k, w), grid.points) for d in diagrams])
    return band_from_values(F, grid, alpha, b, seed)


# ---------------------------------------------------------------------------
# MMD and null distributions
# ---------------------------------------------------------------------------

def _matrix(gram) -> np.ndarray:
    M = gram.matrix if isinstance(gram, DiagramGram) else np.asarray(gram, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidGram(f"Gram matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidGram("Gram matrix has non-finite entries")
    scale = max(1.0, float(np.abs(M).max())) if M.size else 1.0
    if not np.allclose(M, M.T, rtol=0.0, atol=_SYMMETRY_TOL * scale):
        raise InvalidGram("Gram matrix is not symmetric")
    return M


def _check_counts(M: np.ndarray, n_x: int, n_y: int) -> None:
    if n_x < 2 or n_y < 2:
        raise InsufficientData(f"each sample needs at least two elements, got {n_x} and {n_y}")
    if n_x + n_y != len(M):
        raise InvalidGram(f"Gram has size {len(M)} but n_x + n_y = {n_x + n_y}")


def _mmd_blocks(Kxx: np.ndarray, Kyy: np.ndarray, Kxy: np.ndarray) -> np.ndarray:
    """Vectorised MMD_u^2 over a leading batch axis."""
    m, n = Kxx.shape[-1], Kyy.shape[-1]
    sxx = Kxx.sum(axis=(-2, -1)) - np.trace(Kxx, axis1=-2, axis2=-1)
    syy = Kyy.sum(axis=(-2, -1)) - np.trace(Kyy, axis1=-2, axis2=-1)
    return sxx / (m * (m - 1)) + syy / (n * (n - 1)) - 2.0 * Kxy.sum(axis=(-2, -1)) / (m * n)


def mmd_u(gram, n_x: int, n_y: int) -> float:
    """Unbiased squared MMD; the first ``n_x`` rows of ``gram`` are the first sample."""
    M = _matrix(gram)
    _check_counts(M, n_x, n_y)
    return float(_mmd_blocks(M[:n_x, :n_x], M[n_x:, n_x:], M[:n_x, n_x:]))


def effective_size(n_x: int, n_y: int) -> float:
    """Scale of the test statistic; equals ``n`` when both samples have size ``n``."""
    return 2.0 * n_x * n_y / (n_x + n_y)


def centered_eigenvalues(gram) -> np.ndarray:
    """Eigenvalues of ``H K H`` with tiny ones truncated to zero."""
    M = _matrix(gram)
    N = len(M)
    H = np.eye(N) - 1.0 / N
    mu = np.linalg.eigvalsh(H @ M @ H)
    top = float(np.abs(mu).max()) if N else 0.0
    mu[np.abs(mu) < 1e-12 * top] = 0.0
    mu[mu < 0] = 0.0
    return mu


def spectral_null_quantile(gram, alpha: float, draws: int = 10_000, seed: int = 0) -> float:
    """Upper-``alpha`` quantile of ``sum_i lambda_i (z_i^2 - 2)``, ``z_i ~ N(0, 2)``.

    ``lambda_i = mu_i / N`` from the eigenvalues ``mu_i`` of the doubly
    centred aggregate Gram matrix of size ``N``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    mu = centered_eigenvalues(gram)
    lam = mu[mu > 0] / len(mu)
    if len(lam) == 0:
        return 0.0
    out = np.empty(draws)
    for j, size in _blocks(draws):
        z = substream(seed, "spectral", j).normal(0.0, math.sqrt(2.0), size=(size, len(lam)))
        out[j * BLOCK:j * BLOCK + size] = (z ** 2 - 2.0) @ lam
    return upper_quantile(out, alpha)


def _permutation_statistics(M: np.ndarray, n_x: int, n_y: int, permutations: int, seed: int) -> np.ndarray:
    N = n_x + n_y
    scale = effective_size(n_x, n_y)
    out = np.empty(permutations)
    for j, size in _blocks(permutations):
        rng = substream(seed, "permutation", j)
        perm = np.argsort(rng.random((size, N)), axis=1)
        P = M[perm[:, :, None], perm[:, None, :]]
        out[j * BLOCK:j * BLOCK + size] = scale * _mmd_blocks(
            P[:, :n_x, :n_x], P[:, n_x:, n_x:], P[:, :n_x, n_x:])
    return out


def permutation_null_quantile(gram, n_x: int, n_y: int, alpha: float,
                              permutations: int = 1000, seed: int = 0) -> float:
    """Upper-``alpha`` quantile of the scaled statistic over random label permutations."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    M = _matrix(gram)
    _check_counts(M, n_x, n_y)
    return upper_quantile(_permutation_statistics(M, n_x, n_y, permutations, seed), alpha)


def null_quantile(gram, n_x: int, n_y: int, alpha: float, method: str = "spectral",
                  draws: int = 10_000, permutations: int = 1000, seed: int = 0) -> float:
    if method == "spectral":
        _check_counts(_matrix(gram), n_x, n_y)
        return spectral_null_quantile(gram, alpha, draws, seed)
    if method == "permutation":
        return permutation_null_quantile(gram, n_x, n_y, alpha, permutations, seed)
    raise ValueError(f"null method must be one of {NULL_METHODS}, got {method!r}")


# ---------------------------------------------------------------------------
# Error-rate loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoSampleReport:
    statistic: float
    threshold: float
    null_method: str
    decision: str
    rejection_rate: float
    acceptance_rate: float
    alpha: float
    m: int
    N: int
    n_x: int
    n_y: int
    seed: int
    kernel: str = ""
    kernel_params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self.to_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def subsample_statistics(gram, n_x: int, n_y: int, m: int, N: int, seed: int = 0) -> np.ndarray:
    """``m * MMD_u^2`` on ``N`` pairs of size-``m`` subsamples drawn without replacement."""
    M = _matrix(gram)
    _check_counts(M, n_x, n_y)
    if m > min(n_x, n_y):
        raise InvalidSubsampleSize(f"m={m} exceeds the sample sizes n_x={n_x}, n_y={n_y}")
    if m < 2:
        raise InvalidSubsampleSize(f"m must be at least 2, got {m}")
    if N < 1:
        raise ValueError(f"need at least one trial, got N={N}")
    out = np.empty(N)
    for j, size in _blocks(N):
        rng = substream(seed, "trials", j)
        ix = np.argsort(rng.random((size, n_x)), axis=1)[:, :m]
        iy = n_x + np.argsort(rng.random((size, n_y)), axis=1)[:, :m]
        Kxx = M[ix[:, :, None], ix[:, None, :]]
        Kyy = M[iy[:, :, None], iy[:, None, :]]
        Kxy = M[ix[:, :, None], iy[:, None, :]]
        out[j * BLOCK:j * BLOCK + size] = m * _mmd_blocks(Kxx, Kyy, Kxy)
    return out


def error_rate_from_gram(gram, n_x: int, n_y: int, alpha: float, m: int, N: int, seed: int = 0,
                         null_method: str = "spectral", draws: int = 10_000,
                         permutations: int = 1000, threshold: float | None = None) -> TwoSampleReport:
    """Rejection rate ``1 - p_hat`` of the subsampled test against the full-data threshold.

    ``threshold`` overrides the null quantile when given (``+-inf`` allowed).
    """
    M = _matrix(gram)
    _check_counts(M, n_x, n_y)
    if m > min(n_x, n_y):
        raise InvalidSubsampleSize(f"m={m} exceeds the sample sizes n_x={n_x}, n_y={n_y}")
    if threshold is None:
        threshold = null_quantile(M, n_x, n_y, alpha, null_method, draws, permutations,
                                  int(substream(seed, "null").integers(2 ** 63)))
    stats = subsample_statistics(M, n_x, n_y, m, N, seed)
    p_hat = float(np.mean(stats <= threshold))
    statistic = effective_size(n_x, n_y) * mmd_u(M, n_x, n_y)
    kernel, params = ("", {})
    if isinstance(gram, DiagramGram):
        kernel, params = gram.kernel, dict(gram.params)
    return TwoSampleReport(
        statistic=float(statistic), threshold=float(threshold), null_method=null_method,
        decision="reject" if statistic > threshold else "accept",
        rejection_rate=1.0 - p_hat, acceptance_rate=p_hat, alpha=float(alpha),
        m=int(m), N=int(N), n_x=int(n_x), n_y=int(n_y), seed=int(seed),
        kernel=kernel, kernel_params=params,
    )


def error_rate(d_samples: Sequence, e_samples: Sequence, kernel: DiagramKernel | str,
               alpha: float, m: int, N: int, seed: int = 0, **kwargs) -> TwoSampleReport:
    """Fit ``kernel`` on the pooled diagrams, then run the subsampled error loop."""
    n_x, n_y = len(d_samples), len(e_samples)
    if m > min(n_x, n_y):
        raise InvalidSubsampleSize(f"m={m} exceeds the sample sizes n_x={n_x}, n_y={n_y}")
    gram = diagram_gram(list(d_samples) + list(e_samples), kernel)
    return error_rate_from_gram(gram, n_x, n_y, alpha, m, N, seed, **kwargs)
