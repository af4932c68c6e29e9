import numpy as np
import pytest

from pwlcvx.bench import double_integrator_structure
from pwlcvx.errors import ValidationError
from pwlcvx.spectra import eigen_structure, perturb, sample_q

DT = 0.25


def bench_a():
    i3 = np.eye(3)
    return np.block([[i3, DT * i3], [0 * i3, i3]])


def sorted_eigs(a):
    return np.sort_complex(np.linalg.eigvals(a))


def test_diagonal():
    s = eigen_structure(np.diag([1.0, 2.0]))
    assert s.d == 2
    assert sorted(b[1] for b in s.blocks) == [1, 1]
    np.testing.assert_allclose(sorted(np.real(s.distinct_eigenvalues)), [1.0, 2.0])
    order = np.argsort(np.real(s.distinct_eigenvalues))
    q = np.empty(2)
    q[order] = [0.1, -0.1]
    np.testing.assert_allclose(perturb(s, q), np.diag([1.1, 1.9]), atol=1e-12)


def test_jordan_block():
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    s = eigen_structure(a)
    assert s.d == 1 and [b[1] for b in s.blocks] == [2]
    np.testing.assert_allclose(perturb(s, [0.05]), [[1.05, 1.0], [0.0, 1.05]], atol=1e-10)


def test_bench_structure_matches_rank_oracle():
    a = bench_a()
    # independent oracle: geometric multiplicity from rank(A - I)
    assert 6 - np.linalg.matrix_rank(a - np.eye(6)) == 3
    assert np.linalg.matrix_rank((a - np.eye(6)) @ (a - np.eye(6))) == 0
    s = eigen_structure(a)
    assert s.d == 1
    assert sorted(b[1] for b in s.blocks) == [2, 2, 2]
    np.testing.assert_allclose(s.distinct_eigenvalues[0], 1.0, atol=1e-9)


@pytest.mark.parametrize("make", [lambda: eigen_structure(bench_a()), lambda: double_integrator_structure(DT)])
def test_zero_shift_reconstructs(make):
    s = make()
    np.testing.assert_allclose(perturb(s, np.zeros(s.d)), bench_a(), atol=1e-12)


def test_spectrum_shift_by_independent_eigensolver():
    rng = np.random.default_rng(3)
    # mixed structure: a 2x2 Jordan block at 0.5, simple 0.9, a complex pair
    j = np.zeros((5, 5))
    j[:2, :2] = [[0.5, 1.0], [0.0, 0.5]]
    j[2, 2] = 0.9
    j[3:, 3:] = [[0.2, 0.7], [-0.7, 0.2]]
    p = rng.normal(size=(5, 5))
    a = p @ j @ np.linalg.inv(p)
    s = eigen_structure(a)
    assert s.d == 3
    q = sample_q(s.d, 1e-3, seed=11).q
    at = perturb(s, q)
    expected = []
    for (lam, size), c in zip(s.blocks, s.block_cluster):
        expected += [lam + q[s.cluster_q[c]]] * size
    err = np.abs(sorted_eigs(at) - np.sort_complex(np.array(expected)))
    # a defective eigenvalue is only resolved to about sqrt(machine eps)
    assert np.max(err) <= 1e-7


def test_bench_spectrum_shift():
    s = double_integrator_structure(DT)
    q = sample_q(s.d, 1e-6, 0).q
    at = perturb(s, q)
    np.testing.assert_allclose(sorted_eigs(at), 1 + q[0], atol=1e-7)


def test_perturbation_size_bound():
    for s in (eigen_structure(bench_a()), double_integrator_structure(DT)):
        for eps in (1e-2, 1e-4, 1e-6):
            q = sample_q(s.d, eps, 1).q
            diff = np.linalg.norm(perturb(s, q) - bench_a(), 2)
            assert diff <= np.linalg.cond(s.p) * np.max(np.abs(q)) * 1.0 + 1e-15


def test_conjugate_pair_stays_real():
    theta = 0.3
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    s = eigen_structure(rot)
    assert s.d == 1
    at = perturb(s, [0.01])
    assert at.dtype == float
    np.testing.assert_allclose(sorted_eigs(at).real, np.cos(theta) + 0.01, atol=1e-12)
    np.testing.assert_allclose(np.abs(sorted_eigs(at).imag), np.sin(theta), atol=1e-12)
    np.testing.assert_allclose(s.reconstruct([0.01]).imag, 0, atol=1e-12)


def test_sample_q_contract():
    a = sample_q(3, 1e-6, 7).q
    np.testing.assert_array_equal(a, sample_q(3, 1e-6, 7).q)
    assert np.all(np.abs(a) <= 1e-6)
    np.testing.assert_array_equal(sample_q(4, 0.0, 1).q, 0)
    with pytest.raises(ValidationError):
        sample_q(3, -1.0, 0)


def test_sample_q_moments():
    eps, n = 1e-6, 10**4
    q = sample_q(n, eps, 0).q
    assert abs(q.mean()) <= 3 * eps / np.sqrt(12 * n)
    assert q.var() == pytest.approx(eps**2 / 3, rel=0.05)


def test_perturb_checks_length():
    with pytest.raises(ValidationError):
        perturb(eigen_structure(np.diag([1.0, 2.0])), [0.1])
