"""Random point sets: perturbed square lattices, Poisson and Matérn processes."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_point_set
from .rng import substream

NOISE_FAMILIES = ("uniform", "gaussian")
MATERN_VARIANTS = ("none", "typeI", "typeII")


@dataclass(frozen=True)
class LatticeSpec:
    """Square lattice ``{1..m_L}^2`` with i.i.d. noise at each site.

    ``scale`` is the box half-width ``r`` for uniform noise (each site is
    drawn from ``Box(x, r)``) and the standard deviation ``s`` for isotropic
    Gaussian noise.  Both laws share mean and covariance when ``r**2 == 3 s**2``.
    """

    m_L: int
    noise: str = "gaussian"
    scale: float = 0.1

    def __post_init__(self):
        if int(self.m_L) != self.m_L or self.m_L < 1:
            raise ValueError(f"m_L must be a positive integer, got {self.m_L}")
        if self.noise not in NOISE_FAMILIES:
            raise ValueError(f"noise must be one of {NOISE_FAMILIES}, got {self.noise!r}")
        if not self.scale >= 0:
            raise ValueError(f"noise scale must be >= 0, got {self.scale}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MaternSpec:
    """Poisson process of intensity ``lam`` on the unit square, optionally thinned."""

    lam: float
    R: float = 0.0
    variant: str = "none"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"intensity must be > 0, got {self.lam}")
        if not self.R >= 0:
            raise ValueError(f"hard-core radius must be >= 0, got {self.R}")
        if self.variant not in MATERN_VARIANTS:
            raise ValueError(f"variant must be one of {MATERN_VARIANTS}, got {self.variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def lattice_sites(m_L: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(1, m_L + 1), np.arange(1, m_L + 1), indexing="ij")
    return np.column_stack([i.ravel(), j.ravel()]).astype(float)


def perturbed_lattice(spec: LatticeSpec, seed: int) -> np.ndarray:
    """One draw of the perturbed lattice ``{x + e_x : x in L}``."""
    sites = lattice_sites(spec.m_L)
    rng = substream(seed, "lattice")
    if spec.noise == "uniform":
        noise = rng.uniform(-spec.scale, spec.scale, size=sites.shape)
    else:
        noise = rng.normal(0.0, spec.scale, size=sites.shape)
    return sites + noise


def poisson_process(lam: float, seed: int) -> np.ndarray:
    """Homogeneous Poisson process on ``[0, 1]^2``; may return zero points."""
    if not lam > 0:
        raise ValueError(f"intensity must be > 0, got {lam}")
    rng = substream(seed, "poisson")
    n = rng.poisson(lam)
    return rng.uniform(0.0, 1.0, size=(n, 2))


def _close_pairs(points: np.ndarray, R: float) -> np.ndarray:
    if len(points) < 2:
        return np.zeros((0, 2), dtype=np.intp)
    return cKDTree(points).query_pairs(R, output_type="ndarray")


def matern_thin(points, R: float, variant: str, seed: int) -> np.ndarray:
    """Hard-core thinning of ``points`` (rows in generation order).

    Type I keeps a point iff every other point is farther than ``R``.
    Type II draws marks ``w_i ~ Unif(0, 1)`` in row order and keeps a point
    iff its mark strictly exceeds the mark of every other point within
    distance ``<= R``.  ``variant='none'`` returns the input unchanged.
    """
    pts = as_point_set(points)
    if not R >= 0:
        raise ValueError(f"hard-core radius must be >= 0, got {R}")
    if variant not in MATERN_VARIANTS:
        raise ValueError(f"variant must be one of {MATERN_VARIANTS}, got {variant!r}")
    if variant == "none" or len(pts) == 0:
        return pts
    pairs = _close_pairs(pts, R)
    keep = np.ones(len(pts), dtype=bool)
    if variant == "typeI":
        keep[pairs.ravel()] = False
        return pts[keep]
    marks = substream(seed, "matern-marks").uniform(size=len(pts))
    i, j = pairs[:, 0], pairs[:, 1]
    keep[i[marks[i] <= marks[j]]] = False
    keep[j[marks[j] <= marks[i]]] = False
    return pts[keep]


def matern_process(spec: MaternSpec, seed: int) -> np.ndarray:
    """Poisson draw followed by the configured thinning, same seed for both."""
    return matern_thin(poisson_process(spec.lam, seed), spec.R, spec.variant, seed)


def sample(spec: LatticeSpec | MaternSpec, seed: int) -> np.ndarray:
    if isinstance(spec, LatticeSpec):
        return perturbed_lattice(spec, seed)
    return matern_process(spec, seed)
