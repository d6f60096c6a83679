"""Ball-model persistence of planar point sets.

In the plane the alpha complex (Delaunay simplices filtered by the radius at
which their dual Voronoi cell intersection first meets the union of balls)
has exactly the homotopy type of the union of balls ``B(X; a)`` at every
radius ``a``.  Its persistence diagrams therefore coincide with those of the
Čech filtration, at a fraction of the size.

Filtration values are ball *radii*, so two points at distance ``d`` merge at
``d / 2`` and the unit square carries the one-dimensional pair
``(1/2, sqrt(2)/2)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import cdist

from .errors import EmptyInput, UnsupportedDimension

# Pairs with death - birth below this (relative to the death value) are
# regarded as lying on the diagonal.  They arise only from round-off between
# algebraically equal circumradii, and every weight function vanishes there.
PERSISTENCE_EPS = 1e-12


def as_point_set(points) -> np.ndarray:
    """Validate ``points`` as an ``(n, 2)`` float array of finite coordinates."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of planar points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Triangulation and filtration
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Triangulation:
    """Delaunay triangulation of deduplicated points.

    ``points`` are stored in lexicographic order; this canonical order is what
    resolves cocircular ties, so the result does not depend on how the input
    was ordered.
    """

    points: np.ndarray
    edges: np.ndarray          # (E, 2) vertex indices, i < j
    triangles: np.ndarray      # (T, 3) vertex indices
    triangle_edges: np.ndarray  # (T, 3) edge indices, side k opposite vertex k


@dataclass(frozen=True, eq=False)
class FilteredComplex:
    """Alpha complex with radius-valued filtration (vertices all at 0)."""

    points: np.ndarray
    edges: np.ndarray
    edge_values: np.ndarray
    triangles: np.ndarray
    triangle_values: np.ndarray
    triangle_edges: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    def is_monotone(self) -> bool:
        """True if every face enters no later than each of its cofaces."""
        if np.any(self.edge_values < 0):
            return False
        if len(self.triangles) == 0:
            return True
        face_vals = self.edge_values[self.triangle_edges]
        return bool(np.all(face_vals <= self.triangle_values[:, None]))


def _collinear(points: np.ndarray) -> bool:
    if len(points) < 3:
        return True
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return bool(s[1] <= 1e-12 * max(s[0], 1e-300))


def _edges_from_triangles(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # side k of a triangle is the edge opposite vertex k
    sides = np.stack(
        [triangles[:, [1, 2]], triangles[:, [0, 2]], triangles[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    sides.sort(axis=1)
    edges, inverse = np.unique(sides, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def delaunay(points) -> Triangulation:
    """Delaunay triangulation of ``points`` after merging exact duplicates.

    All-collinear inputs (including one or two points) yield the path through
    the sorted points and no triangles.
    """
    pts = as_point_set(points)
    if len(pts) == 0:
        raise EmptyInput("cannot triangulate an empty point set")
    pts = np.unique(pts, axis=0)  # lexicographic order, exact duplicates merged

    if _collinear(pts):
        n = len(pts)
        edges = np.column_stack([np.arange(n - 1), np.arange(1, n)]).astype(np.intp)
        empty = np.zeros((0, 3), dtype=np.intp)
        return Triangulation(_frozen(pts), _frozen(edges.reshape(-1, 2)), _frozen(empty), _frozen(empty))

    try:
        tri = Delaunay(pts)
        if len(tri.coplanar):
            raise QhullError("points dropped from triangulation")
    except QhullError:
        # near-degenerate input; joggling keeps every vertex in the output
        tri = Delaunay(pts, qhull_options="QJ Qbb")
    triangles = np.sort(tri.simplices.astype(np.intp), axis=1)
    triangles = triangles[np.lexsort(triangles.T[::-1])]
    edges, tri_edges = _edges_from_triangles(triangles)
    return Triangulation(_frozen(pts), _frozen(edges), _frozen(triangles), _frozen(tri_edges))


def circumradius(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Circumradii of the triangles with vertex arrays ``a, b, c`` of shape (T, 2)."""
    la = np.linalg.norm(b - c, axis=-1)
    lb = np.linalg.norm(a - c, axis=-1)
    lc = np.linalg.norm(a - b, axis=-1)
    u, v = b - a, c - a
    twice_area = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
    with np.errstate(divide="ignore"):
        return la * lb * lc / (2.0 * twice_area)


def alpha_filtration(points) -> FilteredComplex:
    """Alpha complex of ``points`` with ball-radius filtration values.

    Triangles enter at their circumradius.  An edge enters at half its length
    if it is Gabriel (no other point strictly inside its diametral disk) and
    otherwise at the smallest value among its incident triangles.
    """
    tri = delaunay(points)
    pts = tri.points
    edges = tri.edges
    half_len = 0.5 * np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)
    if len(tri.triangles) == 0:
        return FilteredComplex(pts, edges, _frozen(half_len), tri.triangles,
                               _frozen(np.zeros(0)), tri.triangle_edges)

    T = tri.triangles
    tv = circumradius(pts[T[:, 0]], pts[T[:, 1]], pts[T[:, 2]])

    edge_vals = half_len.copy()
    attached = np.zeros(len(edges), dtype=bool)
    min_tri = np.full(len(edges), np.inf)
    for k in range(3):
        e = tri.triangle_edges[:, k]
        opposite = pts[T[:, k]]
        p, q = pts[edges[e, 0]], pts[edges[e, 1]]
        # opposite vertex strictly inside the diametral disk of the edge
        encroached = np.einsum("ij,ij->i", p - opposite, q - opposite) < 0
        np.logical_or.at(attached, e, encroached)
        np.minimum.at(min_tri, e, tv)
    edge_vals[attached] = min_tri[attached]
    return FilteredComplex(pts, edges, _frozen(edge_vals), T, _frozen(tv), tri.triangle_edges)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """Finite multiset of (birth, death) pairs in a fixed homology degree."""

    pairs: np.ndarray
    dim: int = 1

    def __post_init__(self):
        arr = np.asarray(self.pairs, dtype=float).reshape(-1, 2)
        if np.any(arr[:, 0] > arr[:, 1]):
            raise ValueError("every pair must satisfy birth <= death")
        if not np.all(np.isfinite(arr)):
            raise ValueError("diagram pairs must be finite")
        object.__setattr__(self, "pairs", _frozen(arr.copy()))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def births(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def deaths(self) -> np.ndarray:
        return self.pairs[:, 1]

    @property
    def persistence(self) -> np.ndarray:
        return self.pairs[:, 1] - self.pairs[:, 0]

    def sorted_pairs(self) -> np.ndarray:
        return self.pairs[np.lexsort((self.pairs[:, 1], self.pairs[:, 0]))]

    def __repr__(self) -> str:
        return f"PersistenceDiagram(dim={self.dim}, n={len(self)})"


@dataclass(frozen=True, eq=False)
class EssentialClasses:
    """Births of classes that never die, kept out of the diagram proper."""

    births: np.ndarray
    dim: int = 0

    def __len__(self) -> int:
        return len(self.births)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, i: int, j: int) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return False
        self.parent[max(ri, rj)] = min(ri, rj)
        return True


def _keep(birth: float, death: float) -> bool:
    return death - birth > PERSISTENCE_EPS * max(1.0, abs(death))


def _reduce(cx: FilteredComplex):
    """Z/2 reduction of the filtered complex; returns pairs and essentials for q = 0, 1."""
    ev, tv = cx.edge_values, cx.triangle_values
    edge_order = np.lexsort((np.arange(len(ev)), ev))
    rank = np.empty(len(ev), dtype=np.intp)
    rank[edge_order] = np.arange(len(ev))

    uf = _UnionFind(cx.n_vertices)
    pairs0 = []
    positive = []
    E = cx.edges
    for e in edge_order:
        if uf.union(int(E[e, 0]), int(E[e, 1])):
            if _keep(0.0, ev[e]):
                pairs0.append((0.0, float(ev[e])))
        else:
            positive.append(int(e))
    n_components = cx.n_vertices - (len(ev) - len(positive))

    pairs1 = []
    killed = set()
    pivots: dict[int, set] = {}
    tri_order = np.lexsort((np.arange(len(tv)), tv))
    tri_ranks = rank[cx.triangle_edges]
    for t in tri_order:
        col = set(int(r) for r in tri_ranks[t])
        while col:
            low = max(col)
            other = pivots.get(low)
            if other is None:
                pivots[low] = col
                e = int(edge_order[low])
                killed.add(e)
                if _keep(ev[e], tv[t]):
                    pairs1.append((float(ev[e]), float(tv[t])))
                break
            col = col ^ other
    ess1 = [float(ev[e]) for e in positive if e not in killed]
    return (
        np.array(pairs0, dtype=float).reshape(-1, 2),
        np.zeros(n_components),
        np.array(pairs1, dtype=float).reshape(-1, 2),
        np.array(sorted(ess1), dtype=float),
    )


def persistence(cx: FilteredComplex, q: int) -> tuple[PersistenceDiagram, EssentialClasses]:
    """Persistence diagram in degree ``q`` plus its essential classes."""
    if q not in (0, 1):
        raise UnsupportedDimension(f"only degrees 0 and 1 are supported, got {q}")
    p0, e0, p1, e1 = _reduce(cx)
    if q == 0:
        return PersistenceDiagram(p0, 0), EssentialClasses(_frozen(e0), 0)
    return PersistenceDiagram(p1, 1), EssentialClasses(_frozen(e1), 1)


def diagram(points, q: int = 1) -> PersistenceDiagram:
    """Finite persistence diagram of the ball-model filtration of ``points``.

    An empty point set has empty diagrams in every degree.
    """
    if q not in (0, 1):
        raise UnsupportedDimension(f"only degrees 0 and 1 are supported, got {q}")
    pts = as_point_set(points)
    if len(pts) == 0:
        return PersistenceDiagram(np.zeros((0, 2)), q)
    return persistence(alpha_filtration(pts), q)[0]


def diagrams(points) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Both finite diagrams (q = 0, q = 1) from a single reduction."""
    pts = as_point_set(points)
    if len(pts) == 0:
        return PersistenceDiagram(np.zeros((0, 2)), 0), PersistenceDiagram(np.zeros((0, 2)), 1)
    p0, _, p1, _ = _reduce(alpha_filtration(pts))
    return PersistenceDiagram(p0, 0), PersistenceDiagram(p1, 1)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def _pairs(d) -> np.ndarray:
    if isinstance(d, PersistenceDiagram):
        return d.pairs
    return np.asarray(d, dtype=float).reshape(-1, 2)


def _perfect_matching_exists(cost: np.ndarray, diag_d: np.ndarray, diag_e: np.ndarray, delta: float) -> bool:
    n, m = cost.shape
    size = n + m
    # rows: D points then diagonal slots for E; columns: E points then diagonal slots for D
    rows, cols = np.nonzero(cost <= delta)
    parts_r = [rows]
    parts_c = [cols]
    ok_d = np.nonzero(diag_d <= delta)[0]
    parts_r.append(ok_d)
    parts_c.append(m + ok_d)
    ok_e = np.nonzero(diag_e <= delta)[0]
    parts_r.append(n + ok_e)
    parts_c.append(ok_e)
    if n and m:
        dr, dc = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        parts_r.append(n + dr.ravel())
        parts_c.append(m + dc.ravel())
    r = np.concatenate(parts_r)
    c = np.concatenate(parts_c)
    graph = csr_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(size, size))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def bottleneck_distance(D, E) -> float:
    """Bottleneck (W-infinity) distance allowing matches to the diagonal.

    The optimum is one of the pairwise sup-norm distances or a half
    persistence, so the search runs over that finite candidate set and each
    probe is a bipartite perfect-matching test.
    """
    a, b = _pairs(D), _pairs(E)
    diag_d = 0.5 * (a[:, 1] - a[:, 0])
    diag_e = 0.5 * (b[:, 1] - b[:, 0])
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0:
        return float(diag_e.max())
    if len(b) == 0:
        return float(diag_d.max())
    cost = np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2)
    candidates = np.unique(np.concatenate([cost.ravel(), diag_d, diag_e, [0.0]]))
    lo, hi = 0, len(candidates) - 1
    # the largest candidate is always feasible (everything to the diagonal)
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching_exists(cost, diag_d, diag_e, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def hausdorff_distance(X, Y) -> float:
    """Euclidean Hausdorff distance between two nonempty finite point sets."""
    x, y = as_point_set(X), as_point_set(Y)
    if len(x) == 0 or len(y) == 0:
        raise EmptyInput("Hausdorff distance needs two nonempty point sets")
    d = cdist(x, y)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_points_csv(path, points) -> None:
    """One ``x,y`` line per point, no header."""
    pts = as_point_set(points)
    with open(path, "w", newline="") as fh:
        for x, y in pts:
            fh.write(f"{_fmt(x)},{_fmt(y)}\n")


def read_points_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not "".join(rec).strip():
                continue
            if len(rec) != 2:
                raise ValueError(f"{path}: expected 'x,y' per line, got {rec!r}")
            rows.append((float(rec[0]), float(rec[1])))
    return as_point_set(np.array(rows, dtype=float).reshape(-1, 2))


def write_diagrams_csv(path, dgms: Iterable[PersistenceDiagram]) -> None:
    """Rows ``dim,birth,death`` with 17 significant digits, header included."""
    with open(path, "w", newline="") as fh:
        fh.write("dim,birth,death\n")
        for d in dgms:
            for b, de in d.pairs:
                fh.write(f"{d.dim},{_fmt(b)},{_fmt(de)}\n")


def read_diagrams_csv(path, dims: Iterable[int] = ()) -> dict[int, PersistenceDiagram]:
    """Diagrams keyed by degree; every degree in ``dims`` is present, possibly empty."""
    by_dim: dict[int, list] = {q: [] for q in dims}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["dim", "birth", "death"]:
            raise ValueError(f"{path}: expected header dim,birth,death")
        for row in reader:
            by_dim.setdefault(int(row["dim"]), []).append((float(row["birth"]), float(row["death"])))
    return {q: PersistenceDiagram(np.array(v).reshape(-1, 2), q) for q, v in sorted(by_dim.items())}
