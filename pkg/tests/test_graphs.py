import numpy as np
import pytest

from dmssca.graphs import (
    GraphValidationError,
    build_graph,
    build_mixing_matrix,
    consensus_contract_check,
    load_edge_list,
    mixing_from_matrix,
    spectral_gap,
)

ALL_KINDS = ("complete", "ring", "path", "star", "balanced-binary-tree")


def test_named_topologies():
    assert build_graph("complete", 3).edges == frozenset({(0, 1), (0, 2), (1, 2)})
    assert build_graph("ring", 4).edges == frozenset({(0, 1), (1, 2), (2, 3), (0, 3)})
    assert build_graph("path", 3).edges == frozenset({(0, 1), (1, 2)})
    assert build_graph("star", 4).edges == frozenset({(0, 1), (0, 2), (0, 3)})
    assert build_graph("balanced-binary-tree", 5).edges == frozenset(
        {(0, 1), (0, 2), (1, 3), (1, 4)}
    )


def test_graph_rejects_disconnected_and_bad_edges():
    with pytest.raises(GraphValidationError, match="disconnected"):
        build_graph("custom", 4, [(0, 1), (2, 3)])
    with pytest.raises(GraphValidationError, match="self-loop"):
        build_graph("custom", 2, [(0, 0), (0, 1)])
    with pytest.raises(GraphValidationError, match="out of range"):
        build_graph("custom", 2, [(0, 5)])
    with pytest.raises(GraphValidationError, match="unknown topology"):
        build_graph("moebius", 4)


def test_disconnected_error_names_missing_component():
    try:
        build_graph("custom", 5, [(0, 1), (2, 3), (3, 4)])
    except GraphValidationError as exc:
        assert "[2, 3, 4]" in str(exc)
    else:
        pytest.fail("expected a validation error")


def test_edge_list_file_roundtrip(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("4\n0 1\n1 2\n2 3\n")
    g = load_edge_list(f)
    assert g.n == 4 and g.edges == build_graph("path", 4).edges
    f.write_text("3\n0 1\n")
    with pytest.raises(GraphValidationError):
        load_edge_list(f)


def _oracle_gap(w):
    # independent route: full spectrum of W, drop one copy of the top eigenvalue
    eigs = np.sort(np.linalg.eigvalsh(w))
    return float(np.max(np.abs(eigs[:-1]))) if len(eigs) > 1 else 0.0


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("n", range(2, 17))
def test_metropolis_matrices_are_valid(kind, n):
    g = build_graph(kind, n)
    w = build_mixing_matrix(g, "metropolis")
    assert np.array_equal(w.w, w.w.T)
    assert np.max(np.abs(w.w.sum(axis=0) - 1.0)) <= 1e-12
    assert np.max(np.abs(w.w.sum(axis=1) - 1.0)) <= 1e-12
    assert np.all(np.diag(w.w) > 0)
    allowed = g.adjacency() + np.eye(n)
    assert not np.any((allowed == 0) & (w.w != 0))
    assert w.lambda_w < 1.0
    assert abs(w.lambda_w - _oracle_gap(w.w)) <= 1e-10


@pytest.mark.parametrize("s", [0.3, 0.5, 1.0])
@pytest.mark.parametrize("n", range(2, 17))
def test_lazy_uniform_matrices_are_valid(n, s):
    w = build_mixing_matrix(build_graph("complete", n), "lazy-uniform", laziness=s)
    assert np.array_equal(w.w, w.w.T)
    assert np.max(np.abs(w.w.sum(axis=0) - 1.0)) <= 1e-12
    assert w.lambda_w < 1.0
    assert abs(w.lambda_w - (1.0 - s)) <= 1e-12  # spectrum is {1, 1-s, ...}


def test_reference_spectral_gaps():
    # ring-4 metropolis: circulant spectrum 1/3 + (2/3) cos(pi k / 2)
    w4 = build_mixing_matrix(build_graph("ring", 4), "metropolis")
    assert np.allclose(w4.w[0], [1 / 3, 1 / 3, 0, 1 / 3])
    assert abs(w4.lambda_w - 1 / 3) <= 1e-10
    # complete-3, lazy s=0.5: diagonal 2/3, off-diagonal 1/6
    w3 = build_mixing_matrix(build_graph("complete", 3), "lazy-uniform", laziness=0.5)
    assert np.allclose(w3.w, np.array([[2, 0.5, 0.5], [0.5, 2, 0.5], [0.5, 0.5, 2]]) / 3)
    assert abs(w3.lambda_w - 0.5) <= 1e-10


def test_lazy_uniform_requires_complete_graph():
    with pytest.raises(GraphValidationError, match="complete"):
        build_mixing_matrix(build_graph("ring", 4), "lazy-uniform", laziness=0.5)


def test_spectral_gap_degenerate_cases():
    n = 5
    assert spectral_gap(np.ones((n, n)) / n) == pytest.approx(0.0, abs=1e-14)
    assert spectral_gap(np.eye(n)) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(GraphValidationError, match="symmetric"):
        spectral_gap(np.array([[0.9, 0.1], [0.2, 0.8]]))


def test_custom_matrix_wrapper_validates():
    w = mixing_from_matrix(np.eye(3))
    assert w.lambda_w == pytest.approx(1.0)
    with pytest.raises(GraphValidationError, match="doubly stochastic"):
        mixing_from_matrix(np.array([[0.5, 0.4], [0.4, 0.5]]))


def test_consensus_contract_check():
    w = build_mixing_matrix(build_graph("ring", 4), "metropolis")
    consensual = np.tile(np.array([2.0, -1.0]), 4)
    assert consensus_contract_check(w, consensual)
    j = mixing_from_matrix(np.ones((4, 4)) / 4)
    rng = np.random.default_rng(0)
    assert consensus_contract_check(j, rng.standard_normal(8))
    with pytest.raises(ValueError, match="blocks"):
        consensus_contract_check(w, np.zeros(7))


def test_consensus_contract_property_1000_samples():
    w = build_mixing_matrix(build_graph("ring", 4), "metropolis")
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        d = rng.integers(1, 5)
        x = rng.standard_normal(4 * d) * rng.uniform(0.1, 50)
        assert consensus_contract_check(w, x)
