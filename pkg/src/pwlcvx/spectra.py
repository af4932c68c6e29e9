"""Jordan structure of the discrete dynamics and eigenvalue perturbation.

The perturbed matrix keeps the Jordan blocks of ``A`` and shifts every
distinct eigenvalue by its own random offset. Numerically, eigenvalues
are clustered within a tolerance and block sizes are read off the rank
drops of ``(A - lambda I)^k``. A complex-conjugate pair of clusters shares
one offset so the perturbed matrix stays real.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedError, ValidationError


@dataclass(frozen=True)
class EigenStructure:
    """Similarity ``A = P J P^-1`` with ``J`` described by its blocks.

    ``blocks`` lists ``(eigenvalue, size)`` in column order of ``p``;
    ``block_cluster`` gives the index into ``distinct_eigenvalues`` of each
    block, and ``cluster_q`` maps each cluster to its entry of ``q``.
    """

    p: np.ndarray
    blocks: List[Tuple[complex, int]]
    block_cluster: List[int]
    distinct_eigenvalues: List[complex]
    cluster_q: List[int]

    def __post_init__(self):
        n = sum(size for _, size in self.blocks)
        if self.p.shape != (n, n):
            raise ValidationError("block sizes must sum to the dimension of P")
        if len(self.block_cluster) != len(self.blocks):
            raise ValidationError("every block needs a cluster index")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def d(self) -> int:
        """Number of independent perturbation entries."""
        return max(self.cluster_q) + 1 if self.cluster_q else 0

    def jordan_matrix(self, q=None) -> np.ndarray:
        """``J`` (or ``J~`` when ``q`` is given) as a dense complex matrix."""
        j = np.zeros((self.n, self.n), dtype=complex)
        pos = 0
        for (lam, size), c in zip(self.blocks, self.block_cluster):
            shift = 0.0 if q is None else q[self.cluster_q[c]]
            for k in range(size):
                j[pos + k, pos + k] = lam + shift
                if k + 1 < size:
                    j[pos + k, pos + k + 1] = 1.0
            pos += size
        return j

    def reconstruct(self, q=None) -> np.ndarray:
        return self.p @ self.jordan_matrix(q) @ np.linalg.inv(self.p)


@dataclass(frozen=True)
class PerturbationSpec:
    q: np.ndarray
    eps_a: float
    seed: int

    def __post_init__(self):
        if np.any(np.abs(self.q) > self.eps_a):
            raise ValidationError("every |q_i| must be at most eps_a")


def _null_space(m: np.ndarray, tol: float) -> np.ndarray:
    if m.shape[0] == 0:
        return np.eye(m.shape[1], dtype=m.dtype)
    u, s, vh = np.linalg.svd(m)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj().T


def _cluster(eigs: np.ndarray, tol: float) -> List[np.ndarray]:
    """Group eigenvalues whose chain of pairwise gaps stays below ``tol``."""
    remaining = list(range(len(eigs)))
    groups = []
    while remaining:
        group = [remaining.pop(0)]
        grew = True
        while grew:
            grew = False
            for k in list(remaining):
                if min(abs(eigs[k] - eigs[g]) for g in group) <= tol:
                    group.append(k)
                    remaining.remove(k)
                    grew = True
        groups.append(eigs[group])
    return groups


def _jordan_chains(a: np.ndarray, lam: complex, mult: int, tol: float):
    """Jordan chains of ``a`` for eigenvalue ``lam`` with algebraic multiplicity ``mult``.

    Returns ``(columns, sizes)``; each chain is ordered so that
    ``A p_1 = lam p_1`` and ``A p_k = lam p_k + p_{k-1}``.
    """
    n = a.shape[0]
    real = abs(np.imag(lam)) <= tol
    dtype = float if real else complex
    m = a - (np.real(lam) if real else lam) * np.eye(n)
    m = m.astype(dtype)

    kernels = [np.zeros((n, 0), dtype=dtype)]
    power = np.eye(n, dtype=dtype)
    for _ in range(mult):
        power = m @ power
        kernels.append(_null_space(power, tol))
        if kernels[-1].shape[1] >= mult:
            break
    dims = [k.shape[1] for k in kernels]
    if dims[-1] != mult:
        raise IllConditionedError(
            f"generalized eigenspace of {lam:.6g} has dimension {dims[-1]}, expected {mult}; "
            "supply the eigenstructure explicitly"
        )
    top = len(dims) - 1
    # chains reaching level k: dims[k] - dims[k-1]; exactly of length k: that minus next level
    reach = [0] + [dims[k] - dims[k - 1] for k in range(1, top + 1)] + [0]

    chains: List[List[np.ndarray]] = []
    for level in range(top, 0, -1):
        n_new = reach[level] - reach[level + 1]
        if n_new <= 0:
            continue
        existing = [c[level - 1] for c in chains if len(c) >= level]
        span = np.hstack([kernels[level - 1]] + [e[:, None] for e in existing]) if (
            kernels[level - 1].shape[1] or existing
        ) else np.zeros((n, 0), dtype=dtype)
        cand = kernels[level]
        if span.shape[1]:
            q_span, _ = np.linalg.qr(span)
            cand_perp = cand - q_span @ (q_span.conj().T @ cand)
        else:
            cand_perp = cand
        u, s, vh = np.linalg.svd(cand_perp, full_matrices=False)
        if s.size < n_new or s[n_new - 1] <= tol:
            raise IllConditionedError(
                f"could not extract Jordan chains for {lam:.6g}; supply the eigenstructure explicitly"
            )
        for k in range(n_new):
            v = cand @ vh[k].conj()
            v = v / np.linalg.norm(v)
            # chain[j] holds the vector at level (level - j), i.e. M^j v
            chain = [v]
            for _ in range(level - 1):
                chain.append(m @ chain[-1])
            chains.append(chain[::-1])
    # reorder each chain bottom-up: p_1 = M^(k-1) v, ..., p_k = v
    cols, sizes = [], []
    for chain in chains:
        cols.extend(chain)
        sizes.append(len(chain))
    return np.column_stack(cols), sizes


def eigen_structure(a, cluster_tol: float = 1e-6) -> EigenStructure:
    """Numerical Jordan structure of a real square matrix.

    Eigenvalues within ``cluster_tol`` (relative to ``max(1, ||A||)``) are
    merged into one distinct eigenvalue.  Raises
    :class:`IllConditionedError` if ``P J P^-1`` misses ``A`` by more than
    ``1e-6 ||A||``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(1.0, np.linalg.norm(a, 2))
    tol = cluster_tol * scale

    eigs = sla.eigvals(a)
    groups = _cluster(eigs, tol)

    clusters = []
    for g in groups:
        lam = complex(np.mean(g))
        if abs(lam.imag) <= tol:
            lam = complex(lam.real, 0.0)
        clusters.append((lam, len(g)))
    # upper-half-plane and real clusters first, conjugates after their partner
    clusters.sort(key=lambda c: (c[0].imag < -tol, c[0].real, abs(c[0].imag)))

    distinct: List[complex] = []
    cluster_q: List[int] = []
    blocks: List[Tuple[complex, int]] = []
    block_cluster: List[int] = []
    cols = []
    chains_by_cluster = {}
    n_q = 0
    for lam, mult in clusters:
        idx = len(distinct)
        partner = None
        if lam.imag < -tol:
            for j, other in enumerate(distinct):
                if abs(other - np.conj(lam)) <= tol * 10 and j in chains_by_cluster:
                    partner = j
                    break
        if partner is not None:
            p_cols, sizes = chains_by_cluster[partner]
            p_cols = p_cols.conj()
            lam = complex(np.conj(distinct[partner]))
            cluster_q.append(cluster_q[partner])
        else:
            p_cols, sizes = _jordan_chains(a, lam, mult, tol)
            cluster_q.append(n_q)
            n_q += 1
        distinct.append(lam)
        chains_by_cluster[idx] = (p_cols, sizes)
        cols.append(p_cols)
        for s in sizes:
            blocks.append((lam, s))
            block_cluster.append(idx)

    p = np.hstack(cols).astype(complex)
    structure = EigenStructure(
        p=p,
        blocks=blocks,
        block_cluster=block_cluster,
        distinct_eigenvalues=distinct,
        cluster_q=cluster_q,
    )
    resid = np.linalg.norm(structure.reconstruct() - a, 2)
    if resid > 1e-6 * scale:
        raise IllConditionedError(
            f"ill-conditioned eigenstructure: reconstruction residual {resid:.3e}; "
            "supply the eigenstructure explicitly"
        )
    return structure


def perturb(structure: EigenStructure, q) -> np.ndarray:
    """``P J~ P^-1`` with every cluster's eigenvalue shifted by its ``q`` entry."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (structure.d,):
        raise ValidationError(f"q must have length {structure.d}, got {q.shape[0]}")
    a_tilde = structure.reconstruct(q)
    scale = max(1.0, np.linalg.norm(structure.reconstruct(), 2))
    imag = np.max(np.abs(a_tilde.imag)) if a_tilde.size else 0.0
    if imag > 1e-9 * scale:
        raise ValidationError(f"realness violated: imaginary residual {imag:.3e}")
    return np.ascontiguousarray(a_tilde.real)


def sample_q(d: int, eps_a: float, seed: int) -> PerturbationSpec:
    """Draw ``q_i ~ Unif[-eps_a, eps_a]`` i.i.d., deterministic in ``seed``."""
    if eps_a < 0:
        raise ValidationError("eps_a must be nonnegative")
    rng = np.random.default_rng(seed)
    q = rng.uniform(-eps_a, eps_a, size=d) if eps_a > 0 else np.zeros(d)
    return PerturbationSpec(q=q, eps_a=float(eps_a), seed=int(seed))
