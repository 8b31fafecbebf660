import numpy as np
import pytest

from finsler_lab.app.errors import DomainError
from finsler_lab.app.quadrature import sphere_area, sphere_quadrature
from finsler_lab.app.volumes import euclidean_ball_volume, euclidean_ball_volume_closed


class TestSphereQuadrature:
    """Nodes and weights on S^{n-1}."""

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_total_weight_is_sphere_area(self, n):
        q = sphere_quadrature(n, 16)
        assert q.integrate(np.ones(len(q))) == pytest.approx(sphere_area(n), rel=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_nodes_on_unit_sphere(self, n):
        q = sphere_quadrature(n, 12)
        np.testing.assert_allclose(np.linalg.norm(q.nodes, axis=1), 1.0, atol=1e-14)

    def test_second_moments(self):
        q = sphere_quadrature(3, 16)
        second = np.einsum("k,ki,kj->ij", q.weights, q.nodes, q.nodes)
        np.testing.assert_allclose(second, np.eye(3) * 4.0 * np.pi / 3.0, atol=1e-12)

    def test_halved(self):
        q = sphere_quadrature(2, 64)
        assert q.halved().resolution == 32
        assert sphere_quadrature(2, 4).halved().resolution == 4

    def test_invalid_arguments(self):
        with pytest.raises(DomainError):
            sphere_quadrature(1)
        with pytest.raises(DomainError):
            sphere_quadrature(2, 2)


class TestEuclideanBall:
    """Vol(B^n(1)) by the sine-power recursion."""

    def test_low_dimensions(self):
        assert euclidean_ball_volume(2) == pytest.approx(np.pi, rel=1e-14)
        assert euclidean_ball_volume(3) == pytest.approx(4.0 * np.pi / 3.0, rel=1e-14)
        assert euclidean_ball_volume(4) == pytest.approx(np.pi ** 2 / 2.0, rel=1e-14)

    @pytest.mark.parametrize("n", range(2, 9))
    def test_recursion_matches_closed_form(self, n):
        assert euclidean_ball_volume(n) == pytest.approx(euclidean_ball_volume_closed(n), rel=1e-12)

    def test_dimension_one_rejected(self):
        with pytest.raises(DomainError):
            euclidean_ball_volume(1)
