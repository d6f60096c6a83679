import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwkstat.errors import EmptyInput, UnsupportedDimension
from pwkstat.geometry import (
    PersistenceDiagram,
    alpha_filtration,
    bottleneck_distance,
    delaunay,
    diagram,
    diagrams,
    hausdorff_distance,
    persistence,
    read_diagrams_csv,
    read_points_csv,
    write_diagrams_csv,
    write_points_csv,
)
from oracles import bottleneck_bruteforce, cech_persistence, random_diagram

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def lattice(m):
    i, j = np.meshgrid(np.arange(1, m + 1), np.arange(1, m + 1))
    return np.column_stack([i.ravel(), j.ravel()]).astype(float)


class TestDelaunay:
    def test_triangle(self):
        tri = delaunay([[0, 0], [1, 0], [0, 1]])
        assert len(tri.triangles) == 1 and len(tri.edges) == 3

    def test_square(self):
        tri = delaunay(SQUARE)
        assert len(tri.triangles) == 2 and len(tri.edges) == 5

    def test_collinear(self):
        tri = delaunay([[0, 0], [1, 1], [2, 2]])
        assert len(tri.triangles) == 0 and len(tri.edges) == 2

    def test_duplicates_merged(self):
        tri = delaunay([[0, 0], [1, 0], [0, 1], [1, 0]])
        assert len(tri.points) == 3

    def test_empty(self):
        with pytest.raises(EmptyInput):
            delaunay(np.zeros((0, 2)))

    def test_single_point(self):
        tri = delaunay([[0.3, 0.4]])
        assert len(tri.edges) == 0 and len(tri.triangles) == 0


class TestAlphaFiltration:
    def test_two_points(self):
        cx = alpha_filtration([[0, 0], [3, 4]])
        assert cx.edge_values.tolist() == [2.5]

    def test_square_values(self):
        cx = alpha_filtration(SQUARE)
        vals = np.sort(cx.edge_values)
        np.testing.assert_allclose(vals[:4], 0.5, atol=1e-12)
        np.testing.assert_allclose(vals[4], math.sqrt(2) / 2, atol=1e-12)
        np.testing.assert_allclose(cx.triangle_values, math.sqrt(2) / 2, atol=1e-12)

    def test_equilateral(self):
        cx = alpha_filtration([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
        np.testing.assert_allclose(cx.edge_values, 0.5, atol=1e-12)
        np.testing.assert_allclose(cx.triangle_values, 1 / math.sqrt(3), atol=1e-12)

    def test_obtuse_edge_not_gabriel(self):
        # the long side's diametral disk contains the apex
        cx = alpha_filtration([[0, 0], [2, 0], [1, 0.2]])
        long_edge = [k for k, (i, j) in enumerate(cx.edges)
                     if np.allclose(np.abs(cx.points[i] - cx.points[j]), [2, 0])][0]
        assert cx.edge_values[long_edge] == pytest.approx(cx.triangle_values[0])
        assert cx.triangle_values[0] > 1.0

    @pytest.mark.parametrize("seed", range(20))
    def test_monotone(self, seed):
        pts = np.random.default_rng(seed).uniform(size=(40, 2))
        assert alpha_filtration(pts).is_monotone()


class TestPersistence:
    def test_two_points_degree0(self):
        d, ess = persistence(alpha_filtration([[0, 0], [2, 0]]), 0)
        np.testing.assert_allclose(d.pairs, [[0.0, 1.0]])
        assert ess.births.tolist() == [0.0]

    def test_square_degree1(self):
        d = diagram(SQUARE, 1)
        np.testing.assert_allclose(d.pairs, [[0.5, math.sqrt(2) / 2]], atol=1e-9)

    def test_single_point(self):
        assert len(diagram([[0.0, 0.0]], 1)) == 0

    def test_empty_set(self):
        assert len(diagram(np.zeros((0, 2)), 1)) == 0

    def test_unsupported_degree(self):
        with pytest.raises(UnsupportedDimension):
            persistence(alpha_filtration(SQUARE), 2)
        with pytest.raises(UnsupportedDimension):
            diagram(SQUARE, 2)

    def test_lattice(self):
        d = diagram(lattice(5), 1)
        assert len(d) == 16
        np.testing.assert_allclose(d.births, 0.5, atol=1e-9)
        np.testing.assert_allclose(d.deaths, math.sqrt(2) / 2, atol=1e-9)

    def test_essential_component(self):
        _, ess = persistence(alpha_filtration(np.random.default_rng(1).uniform(size=(15, 2))), 0)
        assert len(ess) == 1

    def test_degree0_count(self):
        pts = np.random.default_rng(3).uniform(size=(25, 2))
        assert len(diagram(pts, 0)) == 24

    def test_both_degrees_agree(self):
        pts = np.random.default_rng(4).uniform(size=(30, 2))
        d0, d1 = diagrams(pts)
        np.testing.assert_array_equal(d0.sorted_pairs(), diagram(pts, 0).sorted_pairs())
        np.testing.assert_array_equal(d1.sorted_pairs(), diagram(pts, 1).sorted_pairs())

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(size=(30, 2))
        for q in (0, 1):
            a = diagram(pts, q).sorted_pairs()
            b = diagram(pts[rng.permutation(30)], q).sorted_pairs()
            np.testing.assert_array_equal(a, b)

    def test_cocircular_ties_do_not_matter(self):
        # translated and reordered copies of a square lattice share the diagram
        base = diagram(lattice(4), 1).sorted_pairs()
        moved = lattice(4)[::-1] + 10.0
        np.testing.assert_allclose(diagram(moved, 1).sorted_pairs(), base, atol=1e-9)

    def test_diagram_rejects_bad_pairs(self):
        with pytest.raises(ValueError):
            PersistenceDiagram([[1.0, 0.5]])
        with pytest.raises(ValueError):
            PersistenceDiagram([[0.0, np.inf]])

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_cech_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        pts = rng.uniform(size=(int(rng.integers(1, 9)), 2))
        ref = cech_persistence(pts)
        for q in (0, 1):
            np.testing.assert_allclose(diagram(pts, q).sorted_pairs(), ref[q], atol=1e-9)


class TestBottleneck:
    def test_identity(self):
        D = random_diagram(np.random.default_rng(0), 5)
        assert bottleneck_distance(D, D) == 0.0

    def test_to_empty(self):
        assert bottleneck_distance([[0, 2]], np.zeros((0, 2))) == 1.0

    def test_both_empty(self):
        assert bottleneck_distance(np.zeros((0, 2)), np.zeros((0, 2))) == 0.0

    def test_shift(self):
        assert bottleneck_distance([[0, 2]], [[0.5, 2.5]]) == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        D = random_diagram(rng, int(rng.integers(0, 6)))
        E = random_diagram(rng, int(rng.integers(0, 6)))
        assert bottleneck_distance(D, E) == pytest.approx(bottleneck_bruteforce(D, E), abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        A, B, C = (random_diagram(rng, int(rng.integers(0, 8))) for _ in range(3))
        assert bottleneck_distance(A, B) == bottleneck_distance(B, A)
        assert bottleneck_distance(A, C) <= bottleneck_distance(A, B) + bottleneck_distance(B, C) + 1e-9

    def test_multiplicity(self):
        assert bottleneck_distance([[0, 1], [0, 1]], [[0, 1]]) == pytest.approx(0.5)


class TestHausdorff:
    def test_identity(self):
        X = np.random.default_rng(0).uniform(size=(5, 2))
        assert hausdorff_distance(X, X) == 0.0

    def test_single(self):
        assert hausdorff_distance([[0, 0]], [[3, 4]]) == 5.0

    def test_directed(self):
        assert hausdorff_distance([[0, 0], [1, 0]], [[0, 0]]) == 1.0

    def test_empty(self):
        with pytest.raises(EmptyInput):
            hausdorff_distance(np.zeros((0, 2)), [[0, 0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.05))
def test_stability_under_perturbation(seed, eps):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(20, 2))
    Y = X + rng.uniform(-eps, eps, size=X.shape)
    dh = hausdorff_distance(X, Y)
    for q in (0, 1):
        assert bottleneck_distance(diagram(X, q), diagram(Y, q)) <= dh + 1e-9


class TestCsv:
    def test_points_round_trip(self, tmp_path):
        X = np.random.default_rng(0).uniform(size=(7, 2))
        path = tmp_path / "pts.csv"
        write_points_csv(path, X)
        np.testing.assert_array_equal(read_points_csv(path), X)
        assert path.read_text().splitlines()[0].count(",") == 1

    def test_diagrams_round_trip(self, tmp_path):
        X = np.random.default_rng(1).uniform(size=(30, 2))
        d0, d1 = diagrams(X)
        path = tmp_path / "dg.csv"
        write_diagrams_csv(path, [d0, d1])
        back = read_diagrams_csv(path)
        np.testing.assert_array_equal(back[0].pairs, d0.pairs)
        np.testing.assert_array_equal(back[1].pairs, d1.pairs)
        assert path.read_text().startswith("dim,birth,death\n")

    def test_empty_diagram_round_trip(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_diagrams_csv(path, [diagram([[0.0, 0.0]], 1)])
        back = read_diagrams_csv(path, dims=(1,))
        assert len(back[1]) == 0
