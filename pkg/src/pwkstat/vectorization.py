"""Embeddings of persistence diagrams and kernels between diagrams.

The persistence weighted kernel (PWK) vector of a diagram ``D`` is the RKHS
element ``V(D) = sum_{x in D} w(x) k(., x)``.  RKHS elements are kept as
finite kernel expansions; every inner product is evaluated through the
kernel trick, never on a function grid.

Competitor representations (persistence landscape, persistence scale-space
kernel, its universal variant and the sliced Wasserstein kernel) share the
``diagram_gram`` entry point so the inference layer can treat them alike.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist, pdist

from .errors import IncompatibleExpansion, InsufficientData
from .geometry import PersistenceDiagram

WEIGHT_FAMILIES = ("w0", "w1", "warc")
DEFAULT_P_ARC = 5
DEFAULT_DIRECTIONS = 64

# Upper bound on the number of kernel entries materialised at once.
_BLOCK = 4_000_000


def _pairs(d) -> np.ndarray:
    if isinstance(d, PersistenceDiagram):
        return d.pairs
    return np.asarray(d, dtype=float).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Plane kernel and weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``exp(-|x - y|^2 / 2 sigma^2)`` on the plane."""

    sigma: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported plane kernel {self.family!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"bandwidth must be a positive finite number, got {self.sigma}")

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * self.sigma ** 2))

    @property
    def bound(self) -> float:
        """``sup_{x,y} |k(x, y)|``."""
        return 1.0

    @property
    def lipschitz(self) -> float:
        """Constant ``L`` with ``|k(., x) - k(., y)|_H <= L |x - y|_inf``.

        ``|k(., x) - k(., y)|_H^2 = 2 (1 - exp(-r^2 / 2 sigma^2)) <= r^2 / sigma^2``
        and ``r <= sqrt(2) |x - y|_inf`` in the plane.
        """
        return math.sqrt(2.0) / self.sigma


def plane_kernel(x, y, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * spec.sigma ** 2)))


@dataclass(frozen=True)
class WeightSpec:
    """Weight on birth-death pairs; zero on the diagonal for every family.

    ``w0`` is 1 off the diagonal, ``w1`` is the persistence and ``warc`` is
    ``arctan(c_arc * pers ** p_arc)``.
    """

    family: str = "w1"
    c_arc: float = 1.0
    p_arc: int = DEFAULT_P_ARC

    def __post_init__(self):
        if self.family not in WEIGHT_FAMILIES:
            raise ValueError(f"weight family must be one of {WEIGHT_FAMILIES}, got {self.family!r}")
        if self.family == "warc":
            if not self.c_arc > 0:
                raise ValueError(f"c_arc must be > 0, got {self.c_arc}")
            if int(self.p_arc) != self.p_arc or self.p_arc < 1:
                raise ValueError(f"p_arc must be a positive integer, got {self.p_arc}")

    def __call__(self, pairs) -> np.ndarray:
        p = _pairs(pairs)
        pers = p[:, 1] - p[:, 0]
        if self.family == "w0":
            return (pers > 0).astype(float)
        if self.family == "w1":
            return np.maximum(pers, 0.0)
        return np.arctan(self.c_arc * np.maximum(pers, 0.0) ** int(self.p_arc))

    def to_dict(self) -> dict:
        return asdict(self)


def weight(x, spec: WeightSpec) -> float:
    return float(spec(np.asarray(x, dtype=float).reshape(1, 2))[0])


# ---------------------------------------------------------------------------
# RKHS expansions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RkhsExpansion:
    """The function ``sum_i c_i k(., x_i)`` for a fixed plane kernel ``k``."""

    coefficients: np.ndarray
    centers: np.ndarray
    kernel: KernelSpec

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        x = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        if len(c) != len(x):
            raise ValueError("one coefficient per center is required")
        c.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "centers", x)

    def __len__(self) -> int:
        return len(self.coefficients)

    def _check(self, other: "RkhsExpansion") -> None:
        if self.kernel != other.kernel:
            raise IncompatibleExpansion(f"kernels differ: {self.kernel} vs {other.kernel}")

    def __add__(self, other: "RkhsExpansion") -> "RkhsExpansion":
        self._check(other)
        return RkhsExpansion(
            np.concatenate([self.coefficients, other.coefficients]),
            np.concatenate([self.centers, other.centers]),
            self.kernel,
        )

    def __mul__(self, a: float) -> "RkhsExpansion":
        return RkhsExpansion(a * self.coefficients, self.centers, self.kernel)

    __rmul__ = __mul__

    def __neg__(self) -> "RkhsExpansion":
        return self * -1.0

    def __sub__(self, other: "RkhsExpansion") -> "RkhsExpansion":
        return self + (-other)

    def __call__(self, z) -> np.ndarray | float:
        return evaluate(self, z)

    def norm(self) -> float:
        return math.sqrt(max(rkhs_inner(self, self), 0.0))


def zero_expansion(kernel: KernelSpec) -> RkhsExpansion:
    return RkhsExpansion(np.zeros(0), np.zeros((0, 2)), kernel)


def pwk_vector(D, k: KernelSpec, w: WeightSpec) -> RkhsExpansion:
    """PWK vector of ``D``: one term ``w(x) k(., x)`` per diagram point."""
    p = _pairs(D)
    return RkhsExpansion(w(p), p, k)


def _bilinear(X: np.ndarray, a: np.ndarray, Y: np.ndarray, b: np.ndarray, kmat) -> float:
    if len(X) == 0 or len(Y) == 0:
        return 0.0
    rows = max(1, _BLOCK // max(len(Y), 1))
    total = 0.0
    for s in range(0, len(X), rows):
        total += float(a[s:s + rows] @ kmat(X[s:s + rows], Y) @ b)
    return total


def rkhs_inner(u: RkhsExpansion, v: RkhsExpansion) -> float:
    """``<u, v>_H = sum_i sum_j c_i d_j k(x_i, y_j)``."""
    u._check(v)
    return _bilinear(u.centers, u.coefficients, v.centers, v.coefficients, u.kernel.matrix)


def rkhs_distance(u: RkhsExpansion, v: RkhsExpansion) -> float:
    d2 = rkhs_inner(u, u) + rkhs_inner(v, v) - 2.0 * rkhs_inner(u, v)
    return math.sqrt(max(d2, 0.0))


def rkhs_mean(expansions: Sequence[RkhsExpansion]) -> RkhsExpansion:
    """Empirical mean ``n^-1 sum_i u_i``; all terms are kept."""
    if len(expansions) == 0:
        raise InsufficientData("mean of an empty list of expansions")
    k = expansions[0].kernel
    for e in expansions[1:]:
        expansions[0]._check(e)
    n = len(expansions)
    return RkhsExpansion(
        np.concatenate([e.coefficients for e in expansions]) / n,
        np.concatenate([e.centers for e in expansions]),
        k,
    )


def evaluate(u: RkhsExpansion, z) -> np.ndarray | float:
    """Pointwise value(s) ``u(z) = sum_i c_i k(z, x_i)``; ``z`` is a point or an (m, 2) array."""
    zz = np.asarray(z, dtype=float)
    single = zz.ndim == 1
    zz = zz.reshape(-1, 2)
    if len(u) == 0:
        out = np.zeros(len(zz))
    else:
        out = np.empty(len(zz))
        rows = max(1, _BLOCK // len(u))
        for s in range(0, len(zz), rows):
            out[s:s + rows] = u.kernel.matrix(zz[s:s + rows], u.centers) @ u.coefficients
    return float(out[0]) if single else out


def pwk_diagram_kernel(D, E, k: KernelSpec, w: WeightSpec, tau: float) -> float:
    """``exp(-|V(D) - V(E)|_H^2 / 2 tau^2)``; exactly 1 when ``D is E``."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if D is E:
        return 1.0
    d = rkhs_distance(pwk_vector(D, k, w), pwk_vector(E, k, w))
    return math.exp(-d * d / (2.0 * tau ** 2))


# ---------------------------------------------------------------------------
# Gram assembly over many diagrams
# ---------------------------------------------------------------------------

def _stack(diagrams: Sequence, coeff: Callable[[np.ndarray], np.ndarray]):
    pts = [_pairs(d) for d in diagrams]
    sizes = np.array([len(p) for p in pts], dtype=np.intp)
    X = np.concatenate(pts) if sum(sizes) else np.zeros((0, 2))
    c = np.concatenate([coeff(p) for p in pts]) if sum(sizes) else np.zeros(0)
    owner = np.repeat(np.arange(len(pts)), sizes)
    S = sparse.csr_matrix(
        (c, (np.arange(len(X)), owner)), shape=(len(X), len(pts))
    )
    return X, S


def _grouped_gram(diagrams: Sequence, coeff, kmat) -> np.ndarray:
    """Matrix ``G_ij = sum_{x in D_i} sum_{y in D_j} c(x) c(y) kmat(x, y)``."""
    X, S = _stack(diagrams, coeff)
    n = len(diagrams)
    G = np.zeros((n, n))
    if len(X) == 0:
        return G
    rows = max(1, _BLOCK // len(X))
    ST = S.T.tocsr()
    for s in range(0, len(X), rows):
        block = kmat(X[s:s + rows], X)
        right = np.asarray((S.T @ block.T).T)   # (rows, n): sum over columns per diagram
        G += ST[:, s:s + rows] @ right
    return 0.5 * (G + G.T)


def pwk_inner_matrix(diagrams: Sequence, k: KernelSpec, w: WeightSpec) -> np.ndarray:
    """Matrix of ``<V(D_i), V(D_j)>_H``."""
    return _grouped_gram(diagrams, w, k.matrix)


def _distances_from_inner(G: np.ndarray) -> np.ndarray:
    d = np.diag(G)
    return np.sqrt(np.maximum(d[:, None] + d[None, :] - 2.0 * G, 0.0))


def _median_offdiag(M: np.ndarray) -> float:
    iu = np.triu_indices(len(M), 1)
    if len(iu[0]) == 0:
        raise InsufficientData("median over pairs needs at least two diagrams")
    return float(np.median(M[iu]))


def _gaussian_of_distances(dist: np.ndarray, tau: float) -> np.ndarray:
    K = np.exp(-dist ** 2 / (2.0 * tau ** 2))
    np.fill_diagonal(K, 1.0)
    return K


@dataclass(frozen=True)
class MedianParams:
    sigma: float
    c_arc: float
    tau: float


def median_sigma(diagrams: Sequence) -> float:
    """Median over diagrams of the median pairwise point distance inside each."""
    per = [float(np.median(pdist(_pairs(d)))) for d in diagrams if len(_pairs(d)) >= 2]
    if not per:
        raise InsufficientData("no diagram has two or more points for the bandwidth heuristic")
    return float(np.median(per))


def median_c_arc(diagrams: Sequence, p_arc: int = DEFAULT_P_ARC) -> float:
    """``(median over diagrams of median persistence) ** -p_arc``."""
    per = [float(np.median(p[:, 1] - p[:, 0])) for p in map(_pairs, diagrams) if len(p)]
    if not per:
        raise InsufficientData("all diagrams are empty")
    med = float(np.median(per))
    if not med > 0:
        raise InsufficientData("median persistence is zero")
    return med ** (-int(p_arc))


def median_heuristics(diagrams: Sequence, weight_family: str = "w1", p_arc: int = DEFAULT_P_ARC) -> MedianParams:
    """Bandwidth ``sigma``, arctangent scale ``C`` and outer scale ``tau``.

    ``tau`` is the median pairwise RKHS distance between PWK vectors built
    with the already fixed ``sigma`` and ``C``.
    """
    sigma = median_sigma(diagrams)
    try:
        c = median_c_arc(diagrams, p_arc)
    except InsufficientData:
        if weight_family == "warc":
            raise
        c = 1.0
    k = KernelSpec(sigma)
    w = WeightSpec(weight_family, c_arc=c, p_arc=p_arc)
    tau = _median_offdiag(_distances_from_inner(pwk_inner_matrix(diagrams, k, w)))
    if not tau > 0:
        raise InsufficientData("all PWK vectors coincide; tau heuristic is degenerate")
    return MedianParams(sigma, c, tau)


# ---------------------------------------------------------------------------
# Persistence landscape
# ---------------------------------------------------------------------------

def landscape(D, level: int, t) -> np.ndarray | float:
    """``level``-th largest of ``max(min(t - b, d - t), 0)`` over the pairs of ``D``."""
    if int(level) != level or level < 1:
        raise ValueError(f"landscape level must be a positive integer, got {level}")
    p = _pairs(D)
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = tt.reshape(-1)
    if level > len(p):
        out = np.zeros(len(tt))
    else:
        tents = np.maximum(np.minimum(tt[None, :] - p[:, :1], p[:, 1:] - tt[None, :]), 0.0)
        out = -np.partition(-tents, level - 1, axis=0)[level - 1]
    return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class LandscapeProfile:
    """Exact landscape: per level, breakpoints and values of a piecewise-linear function."""

    levels: tuple


def landscape_profile(D) -> LandscapeProfile:
    p = _pairs(D)
    p = p[p[:, 1] > p[:, 0]]
    if len(p) == 0:
        return LandscapeProfile(())
    b, d = p[:, 0], p[:, 1]
    mid = 0.5 * (b + d)
    # rising side of tent i meets falling side of tent j iff b_j <= b_i <= d_j <= d_i
    valid = (b[None, :] <= b[:, None]) & (b[:, None] <= d[None, :]) & (d[None, :] <= d[:, None])
    cross = 0.5 * (b[:, None] + d[None, :])[valid]
    xs = np.unique(np.concatenate([b, d, mid, cross]))
    tents = np.maximum(np.minimum(xs[None, :] - b[:, None], d[:, None] - xs[None, :]), 0.0)
    tents = -np.sort(-tents, axis=0)
    levels = []
    for row in tents:
        # slopes are exactly -1, 0 or +1 between breakpoints; keep only kinks
        slope = np.rint(np.diff(row) / np.diff(xs))
        kink = np.concatenate([[True], slope[1:] != slope[:-1], [True]])
        nz = row > 0
        support = np.concatenate([[False], nz[:-1]]) | nz | np.concatenate([nz[1:], [False]])
        keep = kink & support
        levels.append((xs[keep], row[keep]))
    return LandscapeProfile(tuple(levels))


def _pl_inner(xa, ya, xb, yb) -> float:
    if len(xa) < 2 or len(xb) < 2:
        return 0.0
    lo = max(xa[0], xb[0])
    hi = min(xa[-1], xb[-1])
    if hi <= lo:
        return 0.0
    xs = np.union1d(xa, xb)
    xs = xs[(xs >= lo) & (xs <= hi)]
    fa = np.interp(xs, xa, ya)
    fb = np.interp(xs, xb, yb)
    h = np.diff(xs)
    # exact integral of the product of two linear pieces
    return float(np.sum(h / 6.0 * (2 * fa[:-1] * fb[:-1] + fa[:-1] * fb[1:] + fa[1:] * fb[:-1] + 2 * fa[1:] * fb[1:])))


def landscape_profile_inner(P: LandscapeProfile, Q: LandscapeProfile) -> float:
    return sum(_pl_inner(xa, ya, xb, yb) for (xa, ya), (xb, yb) in zip(P.levels, Q.levels))


def landscape_kernel(D, E) -> float:
    """L2 inner product of the two landscapes summed over all levels."""
    return landscape_profile_inner(landscape_profile(D), landscape_profile(E))


# ---------------------------------------------------------------------------
# Persistence scale-space kernels
# ---------------------------------------------------------------------------

def _pssk_matrix(t: float):
    def kmat(X, Y):
        Ybar = Y[:, ::-1]
        return (np.exp(-cdist(X, Y, "sqeuclidean") / (8.0 * t))
                - np.exp(-cdist(X, Ybar, "sqeuclidean") / (8.0 * t))) / (8.0 * math.pi * t)
    return kmat


def pssk(D, E, t: float) -> float:
    """Persistence scale-space kernel with mirrored negative heat sources."""
    if not t > 0:
        raise ValueError(f"scale t must be > 0, got {t}")
    a, b = _pairs(D), _pairs(E)
    if len(a) == 0 or len(b) == 0:
        return 0.0
    return float(_pssk_matrix(t)(a, b).sum())


def pssk_matrix(diagrams: Sequence, t: float) -> np.ndarray:
    return _grouped_gram(diagrams, lambda p: np.ones(len(p)), _pssk_matrix(t))


def upssk(D, E, t: float, tau: float) -> float:
    """``exp(-|Phi_t(D) - Phi_t(E)|^2_{L2} / 2 tau^2)``."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if D is E:
        return 1.0
    d2 = pssk(D, D, t) + pssk(E, E, t) - 2.0 * pssk(D, E, t)
    return math.exp(-max(d2, 0.0) / (2.0 * tau ** 2))


# ---------------------------------------------------------------------------
# Sliced Wasserstein
# ---------------------------------------------------------------------------

def sw_directions(directions: int) -> np.ndarray:
    """Unit vectors at angles ``pi (m + 1/2) / M`` on ``[0, pi)``."""
    if int(directions) != directions or directions < 1:
        raise ValueError(f"directions must be a positive integer, got {directions}")
    theta = math.pi * (np.arange(directions) + 0.5) / directions
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _sw_projections(D, U: np.ndarray):
    p = _pairs(D)
    mid = 0.5 * (p[:, 0] + p[:, 1])
    diag = np.column_stack([mid, mid])
    return p @ U.T, diag @ U.T


def _sw_from_projections(pd_, dd, pe, de) -> float:
    A = np.sort(np.concatenate([pd_, de]), axis=0)
    B = np.sort(np.concatenate([pe, dd]), axis=0)
    if len(A) == 0:
        return 0.0
    return float(np.abs(A - B).sum(axis=0).mean())


def sliced_wasserstein(D, E, directions: int = DEFAULT_DIRECTIONS) -> float:
    """Sliced Wasserstein distance with diagonal-projection augmentation.

    The circle integral is replaced by the average over ``directions``
    midpoint angles on ``[0, pi)``; each slice is an exact 1-D optimal
    transport between sorted projections.
    """
    if D is E:
        return 0.0
    U = sw_directions(directions)
    return _sw_from_projections(*_sw_projections(D, U), *_sw_projections(E, U))


def sliced_wasserstein_matrix(diagrams: Sequence, directions: int = DEFAULT_DIRECTIONS) -> np.ndarray:
    U = sw_directions(directions)
    proj = [_sw_projections(d, U) for d in diagrams]
    n = len(diagrams)
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            M[i, j] = M[j, i] = _sw_from_projections(*proj[i], *proj[j])
    return M


def sw_kernel(D, E, tau: float, directions: int = DEFAULT_DIRECTIONS) -> float:
    """``exp(-SW(D, E) / 2 tau^2)``."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if D is E:
        return 1.0
    return math.exp(-sliced_wasserstein(D, E, directions) / (2.0 * tau ** 2))


# ---------------------------------------------------------------------------
# Diagram-level Gram matrices
# ---------------------------------------------------------------------------

KERNEL_NAMES = ("pwk-w0", "pwk-w1", "pwk-warc", "landscape", "pssk", "upssk", "sw")


@dataclass(frozen=True)
class DiagramKernel:
    """A diagram kernel whose parameters are fitted by median heuristics.

    ``bandwidth_multiplier`` rescales ``sigma`` (PWK) or ``t`` (PSSK family)
    after the heuristic; ``reestimate_tau`` decides whether ``tau`` is then
    recomputed with the rescaled bandwidth or kept from the unscaled one.
    """

    name: str
    p_arc: int = DEFAULT_P_ARC
    directions: int = DEFAULT_DIRECTIONS
    bandwidth_multiplier: float = 1.0
    reestimate_tau: bool = True

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise ValueError(f"unknown diagram kernel {self.name!r}; choose from {KERNEL_NAMES}")
        if not self.bandwidth_multiplier > 0:
            raise ValueError("bandwidth_multiplier must be > 0")

    @property
    def weight_family(self) -> str | None:
        return self.name.split("-", 1)[1] if self.name.startswith("pwk-") else None


@dataclass(frozen=True, eq=False)
class DiagramGram:
    """Symmetric matrix of diagram-kernel values plus the fitted parameters."""

    matrix: np.ndarray
    kernel: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    def __len__(self) -> int:
        return len(self.matrix)

    def submatrix(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return self.matrix[np.ix_(idx, idx)]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min()) if len(self) else 0.0

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w") as fh:
            for row in self.matrix:
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        with open(json_path, "w") as fh:
            json.dump({"kernel": self.kernel, "params": self.params, "size": len(self)},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, csv_path, json_path) -> "DiagramGram":
        M = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        with open(json_path) as fh:
            meta = json.load(fh)
        return cls(M, meta["kernel"], meta.get("params", {}))


def diagram_gram(diagrams: Sequence, kernel: DiagramKernel | str) -> DiagramGram:
    """Fit ``kernel``'s parameters on ``diagrams`` and return their Gram matrix."""
    if isinstance(kernel, str):
        kernel = DiagramKernel(kernel)
    diagrams = list(diagrams)
    mult = kernel.bandwidth_multiplier
    name = kernel.name
    params: dict = {}

    if name == "landscape":
        profiles = [landscape_profile(d) for d in diagrams]
        n = len(profiles)
        M = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                M[i, j] = M[j, i] = landscape_profile_inner(profiles[i], profiles[j])
        return DiagramGram(M, name, params)

    if name == "sw":
        SW = sliced_wasserstein_matrix(diagrams, kernel.directions)
        tau = _median_offdiag(SW)
        if not tau > 0:
            raise InsufficientData("all sliced Wasserstein distances vanish")
        M = np.exp(-SW / (2.0 * tau ** 2))
        np.fill_diagonal(M, 1.0)
        return DiagramGram(M, name, {"tau": tau, "directions": kernel.directions})

    sigma0 = median_sigma(diagrams)

    if name in ("pssk", "upssk"):
        t0 = sigma0 ** 2 / 2.0
        t = mult * t0
        P = pssk_matrix(diagrams, t)
        params = {"sigma": sigma0, "t": t, "bandwidth_multiplier": mult}
        if name == "pssk":
            return DiagramGram(P, name, params)
        dist = _distances_from_inner(P)
        tau_src = dist if (kernel.reestimate_tau or mult == 1.0) else _distances_from_inner(pssk_matrix(diagrams, t0))
        tau = _median_offdiag(tau_src)
        if not tau > 0:
            raise InsufficientData("all scale-space embeddings coincide")
        params["tau"] = tau
        return DiagramGram(_gaussian_of_distances(dist, tau), name, params)

    family = kernel.weight_family
    if family == "warc":
        c = median_c_arc(diagrams, kernel.p_arc)
    else:
        c = 1.0
    w = WeightSpec(family, c_arc=c, p_arc=kernel.p_arc)
    k = KernelSpec(mult * sigma0)
    dist = _distances_from_inner(pwk_inner_matrix(diagrams, k, w))
    if kernel.reestimate_tau or mult == 1.0:
        tau = _median_offdiag(dist)
    else:
        tau = _median_offdiag(_distances_from_inner(pwk_inner_matrix(diagrams, KernelSpec(sigma0), w)))
    if not tau > 0:
        raise InsufficientData("all PWK vectors coincide; tau heuristic is degenerate")
    params = {"sigma": k.sigma, "sigma_heuristic": sigma0, "c_arc": c, "p_arc": kernel.p_arc,
              "tau": tau, "weight": family, "bandwidth_multiplier": mult}
    return DiagramGram(_gaussian_of_distances(dist, tau), name, params)
