"""Dense Hermitian linear algebra and entropy functionals for small dimensions.

Conventions used throughout the package:

* natural logarithms everywhere, entropies in nats;
* energies in units of k_B*T (so the thermal state is ``expm(-H)/Z``);
* density operators are complex128 ndarrays with trace 1 and spectrum >= 0
  up to the tolerances below.

Relative entropy on disjoint support returns ``math.inf`` as an explicit
sentinel rather than raising, so callers can branch on it.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-10
EIGENVALUE_FLOOR = -1e-10
SUPPORT_EIGENVALUE_TOL = 1e-15
SUPPORT_WEIGHT_TOL = 1e-12
DEFAULT_TENSOR_CAP = 4096


def as_operator(op) -> np.ndarray:
    """Coerce to a square complex128 matrix without validating symmetry."""
    a = np.asarray(op, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    return a


def check_hermitian(op, atol: float = HERMITICITY_ATOL) -> np.ndarray:
    a = as_operator(op)
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > atol:
        raise ValidationError(f"matrix is not Hermitian: max |A - A^dag| = {dev:.3e} > {atol:.1e}")
    return a


def check_density(op, atol_trace: float = TRACE_ATOL) -> np.ndarray:
    """Validate a density operator (Hermitian, unit trace, spectrum >= floor)."""
    a = check_hermitian(op)
    tr = complex(np.trace(a))
    if abs(tr - 1.0) > atol_trace:
        raise ValidationError(f"density operator trace {tr:.12g} deviates from 1 beyond {atol_trace:.1e}")
    evals = np.linalg.eigvalsh(a)
    if evals[0] < EIGENVALUE_FLOOR:
        raise ValidationError(f"density operator has eigenvalue {evals[0]:.3e} < {EIGENVALUE_FLOOR:.1e}")
    return a


def projector(vec) -> np.ndarray:
    """|v><v| for a (not necessarily normalized) state vector."""
    v = np.asarray(vec, dtype=np.complex128).reshape(-1)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition with eigenvalues sorted descending.

    ``eigenvectors[:, n]`` is the unit eigenvector for ``eigenvalues[n]``,
    phase-fixed so its first non-negligible component is real positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def vector(self, n: int) -> np.ndarray:
        return self.eigenvectors[:, n]


def _canonical_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its first component of magnitude > 1e-8 is real positive."""
    out = vectors.copy()
    for n in range(out.shape[1]):
        col = out[:, n]
        idx = np.argmax(np.abs(col) > 1e-8)
        pivot = col[idx]
        if abs(pivot) > 0:
            out[:, n] = col * (abs(pivot) / pivot)
    return out


def _sort_descending(evals: np.ndarray, evecs: np.ndarray) -> Spectrum:
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = _canonical_phase(evecs[:, order])
    # break exact ties deterministically by lexicographic vector comparison
    n = len(evals)
    i = 0
    while i < n - 1:
        j = i + 1
        while j < n and abs(evals[j] - evals[i]) <= 1e-14:
            j += 1
        if j - i > 1:
            block = evecs[:, i:j]
            keys = [tuple(np.round(block[:, k].view(np.float64), 10)) for k in range(j - i)]
            perm = sorted(range(j - i), key=lambda k: keys[k])
            evecs[:, i:j] = block[:, perm]
        i = j
    return Spectrum(eigenvalues=evals, eigenvectors=evecs)


_eig_cache: dict = {}


def eig(op) -> Spectrum:
    """Eigendecomposition of a Hermitian operator, deterministic ordering.

    Diagonal matrices short-circuit to the standard basis so that, e.g.,
    dephased targets never pick up eigh jitter in their eigenvectors.
    """
    a = check_hermitian(op)
    cache_dir = os.environ.get("QPE_CACHE_DIR")
    key = None
    if cache_dir:
        key = hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()
        hit = _eig_cache.get(key)
        if hit is not None:
            return hit
    d = a.shape[0]
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    if not np.any(off):
        spec = _sort_descending(np.real(np.diag(a)).copy(), np.eye(d, dtype=np.complex128))
    else:
        evals, evecs = np.linalg.eigh(a)
        spec = _sort_descending(evals, evecs)
    if key is not None:
        _eig_cache[key] = spec
    return spec


def _entropy_from_eigenvalues(evals: np.ndarray) -> float:
    lam = np.asarray(evals, dtype=np.float64)
    if lam.min() < EIGENVALUE_FLOOR:
        raise ValidationError(f"eigenvalue {lam.min():.3e} below validation floor")
    lam = np.clip(lam, 0.0, None)
    pos = lam[lam > 0]
    return float(-(pos * np.log(pos)).sum())


def vn_entropy(rho) -> float:
    """Von Neumann entropy -Tr(rho ln rho) in nats."""
    a = check_density(rho)
    return _entropy_from_eigenvalues(np.linalg.eigvalsh(a))


def rel_entropy(rho, tau) -> float:
    """Quantum relative entropy D[rho||tau] = Tr(rho ln rho) - Tr(rho ln tau).

    Returns ``math.inf`` when rho has weight outside the support of tau.
    """
    a = check_density(rho)
    b = check_density(tau)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    spec = eig(b)
    weights = np.real(np.einsum("in,ij,jn->n", spec.eigenvectors.conj(), a, spec.eigenvectors))
    weights = np.clip(weights, 0.0, None)
    lam = np.clip(spec.eigenvalues, 0.0, None)
    dead = lam <= SUPPORT_EIGENVALUE_TOL
    if np.any(weights[dead] > SUPPORT_WEIGHT_TOL):
        return float("inf")
    live = ~dead
    cross = float(weights[live] @ np.log(lam[live]))
    return -vn_entropy(a) - cross


def dephase(rho, basis) -> np.ndarray:
    """Remove off-diagonal terms of rho in the given orthonormal basis.

    ``basis`` is a Spectrum or a (d, d) array whose columns are the basis
    vectors. Trace is preserved exactly.
    """
    a = check_density(rho)
    vecs = basis.eigenvectors if isinstance(basis, Spectrum) else np.asarray(basis, dtype=np.complex128)
    if vecs.shape != a.shape:
        raise ValidationError(f"basis shape {vecs.shape} does not match operator shape {a.shape}")
    diag = np.real(np.einsum("in,ij,jn->n", vecs.conj(), a, vecs))
    return (vecs * diag) @ vecs.conj().T


def tensor(ops, cap: int = DEFAULT_TENSOR_CAP) -> np.ndarray:
    """Kronecker product of a sequence of operators, left to right."""
    mats = [as_operator(op) for op in ops]
    if not mats:
        raise ValidationError("tensor() needs at least one operator")
    total = 1
    for m in mats:
        total *= m.shape[0]
    if total > cap:
        raise ValidationError(f"tensor product dimension {total} exceeds cap {cap}")
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def partial_trace(rho, dims, keep) -> np.ndarray:
    """Reduced operator on the subsystems listed in ``keep`` (0-based, ordered)."""
    a = as_operator(rho)
    dims = list(dims)
    n = len(dims)
    if a.shape[0] != int(np.prod(dims)):
        raise ValidationError("dims do not multiply to the operator dimension")
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    t = a.reshape(dims + dims)
    for i in reversed(traced):
        t = np.trace(t, axis1=i, axis2=i + t.ndim // 2)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(d_keep, d_keep)


def partition_function(hamiltonian) -> float:
    h = check_hermitian(hamiltonian)
    return float(np.sum(np.exp(-np.linalg.eigvalsh(h))))


def equilibrium_free_energy(hamiltonian) -> float:
    """F = -ln Tr exp(-H), with H in k_B*T units."""
    return -float(np.log(partition_function(hamiltonian)))


def gibbs_state(hamiltonian) -> np.ndarray:
    """Thermal state exp(-H)/Z for H in k_B*T units."""
    h = check_hermitian(hamiltonian)
    spec = eig(h)
    w = np.exp(-spec.eigenvalues)
    w = w / w.sum()
    return (spec.eigenvectors * w) @ spec.eigenvectors.conj().T


@dataclass(frozen=True)
class QubitBasis:
    """The standard two-level system used by the builtin sources."""

    ket0: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0], dtype=np.complex128))
    ket1: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0], dtype=np.complex128))


def qubit_hamiltonian(energy_gap: float = 1.0, ground_energy: float = 0.0) -> np.ndarray:
    return np.diag([ground_energy, ground_energy + energy_gap]).astype(np.complex128)


def overlap_state(r: float) -> np.ndarray:
    """Pure qubit state sqrt(r)|0> + sqrt(1-r)|1> as a density operator."""
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"overlap parameter r={r} outside [0, 1]")
    return projector(np.array([np.sqrt(r), np.sqrt(1.0 - r)], dtype=np.complex128))
