import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gcpkit import geomkit as gk
from gcpkit.evalkit import frame_violation

S2 = 1 / np.sqrt(2)


def test_centralize_symmetric_pair():
    X0, c = gk.centralize([[1, 1, 1], [-1, -1, -1]])
    np.testing.assert_array_equal(X0, [[1, 1, 1], [-1, -1, -1]])
    np.testing.assert_array_equal(c, 0.0)


def test_centralize_hand_value():
    X0, c = gk.centralize([[2, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(X0, [[1, 0, 0], [-1, 0, 0]])
    np.testing.assert_array_equal(c, [1, 0, 0])


def test_centralize_single_point():
    X0, c = gk.centralize([[3.0, -1.0, 2.0]])
    np.testing.assert_array_equal(X0, [[0, 0, 0]])
    np.testing.assert_array_equal(c, [3, -1, 2])


def test_decentralize_examples():
    np.testing.assert_array_equal(gk.decentralize(np.zeros((2, 3)), [1, 2, 3]), [[1, 2, 3], [1, 2, 3]])
    np.testing.assert_array_equal(gk.decentralize([[1, 0, 0]], [0, 1, 0]), [[1, 1, 0]])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.just(3)), elements=st.floats(-100, 100)))
def test_centralize_round_trip_and_idempotence(X):
    X0, c = gk.centralize(X)
    assert np.abs(X0.mean(axis=0)).max() < 1e-12 * max(1.0, np.abs(X).max())
    np.testing.assert_allclose(gk.decentralize(X0, c), X, atol=1e-12 * max(1.0, np.abs(X).max()))
    X00, c0 = gk.centralize(X0)
    np.testing.assert_allclose(X00, X0, atol=1e-12 * max(1.0, np.abs(X).max()))


def test_centralize_batch_matches_per_graph(rng):
    X = rng.normal(size=(7, 3))
    batch = np.array([0, 0, 0, 1, 1, 1, 1])
    X0, cents = gk.centralize_batch(X, batch, 2)
    a, ca = gk.centralize(X[:3])
    b, cb = gk.centralize(X[3:])
    np.testing.assert_allclose(X0, np.vstack([a, b]), atol=1e-15)
    np.testing.assert_allclose(cents, [ca, cb], atol=1e-15)


def test_localize_hand_value():
    F = gk.localize(np.array([[1.0, 0, 0], [0, 1.0, 0]]), np.array([[0, 1]]))[0]
    np.testing.assert_allclose(F[0], [S2, -S2, 0], atol=1e-15)
    np.testing.assert_allclose(F[1], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(F[2], [-S2, -S2, 0], atol=1e-15)


def test_localize_rotation_equivariance(rng):
    X0, _ = gk.centralize(rng.normal(size=(10, 3)))
    E = gk.full_graph(10)
    for _ in range(20):
        Q = gk.random_rotation(rng)
        F = gk.localize(X0, E)
        FQ = gk.localize(X0 @ Q.T, E)
        np.testing.assert_allclose(FQ, F @ Q.T, atol=1e-9)


def test_localize_reflection_sign_pattern(rng):
    X0, _ = gk.centralize(rng.normal(size=(6, 3)))
    E = gk.full_graph(6)
    F = gk.localize(X0, E)
    Fr = gk.localize(-X0, E)
    np.testing.assert_allclose(Fr[:, 0], -F[:, 0], atol=1e-12)
    np.testing.assert_allclose(Fr[:, 1], F[:, 1], atol=1e-12)
    np.testing.assert_allclose(Fr[:, 2], -F[:, 2], atol=1e-12)
    # still right-handed
    np.testing.assert_allclose(np.linalg.det(Fr), 1.0, atol=1e-12)


def test_localize_degenerate_fallback():
    # cross product vanishes: parallel positions, or one endpoint at the origin
    X = np.array([[1.0, 0, 0], [2.0, 0, 0], [0, 0, 3.0], [0, 0, 0]])
    F = gk.localize(X, np.array([[0, 1], [2, 3]]))
    np.testing.assert_allclose(F[0], [[-1, 0, 0], [0, 0, 1], [0, 1, 0]], atol=1e-15)
    # a along z: reference axis switches to +x
    np.testing.assert_allclose(F[1], [[0, 0, 1], [1, 0, 0], [0, 1, 0]], atol=1e-15)
    assert frame_violation(F) < 1e-10


def test_localize_coincident_points_stay_orthonormal():
    F = gk.localize(np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]]), np.array([[0, 1]]))
    assert frame_violation(F) < 1e-10


def test_frame_invariants_on_many_random_edges(rng):
    X = rng.normal(size=(2000, 3))
    E = rng.integers(0, 2000, size=(1000, 2))
    E = E[E[:, 0] != E[:, 1]]
    F = gk.localize(X, E)
    norms = np.linalg.norm(F, axis=2)
    assert np.abs(norms - 1).max() < 1e-10
    assert max(np.abs(np.sum(F[:, 0] * F[:, 1], 1)).max(), np.abs(np.sum(F[:, 0] * F[:, 2], 1)).max(),
               np.abs(np.sum(F[:, 1] * F[:, 2], 1)).max()) < 1e-10
    assert np.abs(np.linalg.det(F) - 1).max() < 1e-10


def test_scalarize_canonical():
    np.testing.assert_array_equal(gk.scalarize(np.array([[1.0, 0, 0]]), np.eye(3)), [1, 0, 0])


def test_scalarize_nine_values():
    assert gk.scalarize(np.eye(3), np.eye(3)).shape == (9,)


def test_scalarize_joint_rotation_invariance(rng):
    X0, _ = gk.centralize(rng.normal(size=(5, 3)))
    E = gk.full_graph(5)
    V = rng.normal(size=(len(E), 3, 3))
    for _ in range(10):
        Q = gk.random_rotation(rng)
        a = gk.scalarize(V, gk.localize(X0, E))
        b = gk.scalarize(V @ Q.T, gk.localize(X0 @ Q.T, E))
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_scalarize_changes_under_reflection(rng):
    X0, _ = gk.centralize(rng.normal(size=(5, 3)))
    E = gk.full_graph(5)
    V = rng.normal(size=(len(E), 3, 3))
    a = gk.scalarize(V, gk.localize(X0, E))
    b = gk.scalarize(-V, gk.localize(-X0, E))
    assert np.abs(a - b).max() > 1e-3


def test_knn_collinear():
    X = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
    E = gk.knn_graph(X, 1)
    assert {tuple(e) for e in E} == {(0, 1), (1, 0), (2, 1)}


def test_knn_complete_when_k_is_n_minus_one(rng):
    X = rng.normal(size=(6, 3))
    assert {tuple(e) for e in gk.knn_graph(X, 5)} == {tuple(e) for e in gk.full_graph(6)}


def test_knn_ties_prefer_smaller_index():
    X = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0]])
    assert [tuple(e) for e in gk.knn_graph(X, 1)][0] == (0, 1)


def test_knn_permutation_consistency(rng):
    X = rng.normal(size=(12, 3))
    perm = rng.permutation(12)
    E = {tuple(e) for e in gk.knn_graph(X, 3)}
    Ep = gk.knn_graph(X[perm], 3)
    assert {(perm[i], perm[j]) for i, j in Ep} == E


@pytest.mark.parametrize("k", [0, 4, 5])
def test_knn_bad_k(k):
    with pytest.raises(gk.ParameterError):
        gk.knn_graph(np.zeros((4, 3)), k)


def test_rbf_endpoints_and_shape():
    assert gk.rbf_encode(0.0, 16, 20.0)[0] == 1.0
    assert gk.rbf_encode(20.0, 16, 20.0)[-1] == 1.0
    assert gk.rbf_encode(np.linspace(0, 5, 30), 16, 20.0).shape == (30, 16)


def test_rbf_width_is_center_spacing():
    spacing = 20.0 / 15
    assert gk.rbf_encode(spacing, 16, 20.0)[0] == pytest.approx(np.exp(-0.5))


def test_rbf_needs_two_centers():
    with pytest.raises(gk.ParameterError):
        gk.rbf_encode(1.0, 1, 20.0)


def test_random_transforms(rng):
    Q = gk.random_rotation(7)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    assert np.linalg.det(Q) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(Q, gk.random_rotation(7))
    Q2 = gk.random_rotation(8)
    assert np.linalg.det(Q @ Q2) == pytest.approx(1.0, abs=1e-12)
    R = gk.random_reflection(rng)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(-1.0, abs=1e-12)
    assert gk.random_translation(10.0, rng).shape == (3,)


def test_orientation_vectors():
    X = np.array([[0.0, 0, 0], [2.0, 0, 0], [2.0, 3.0, 0]])
    O = gk.orientation_vectors(X)
    np.testing.assert_allclose(O[0], [[1, 0, 0], [0, 0, 0]])
    np.testing.assert_allclose(O[1], [[0, 1, 0], [-1, 0, 0]])
    np.testing.assert_allclose(O[2], [[0, 0, 0], [0, -1, 0]])


def test_geograph_rejects_self_loops():
    with pytest.raises(gk.ParameterError):
        gk.GeoGraph(np.zeros((2, 3)), [[0, 0]], h=np.zeros((2, 1)), chi=np.zeros((2, 1, 3)),
                    e=np.zeros((1, 1)), xi=np.zeros((1, 1, 3)))


def test_geograph_rejects_out_of_range():
    with pytest.raises(gk.ParameterError):
        gk.GeoGraph(np.zeros((2, 3)), [[0, 2]], h=np.zeros((2, 1)), chi=np.zeros((2, 1, 3)),
                    e=np.zeros((1, 1)), xi=np.zeros((1, 1, 3)))
