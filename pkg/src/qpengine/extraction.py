"""Ideal work-extraction protocols and the four target-selection policies.

An ideal protocol tuned to a target state rho* extracts one of at most d
distinct work values per run, one value per eigenvalue of rho*:

    w_n = <lambda_n|H|lambda_n> + ln(lambda_n) - F     (k_B*T units)

with outcome probabilities given by the input state's diagonal weights in
the rho* eigenbasis. Zero eigenvalues make the corresponding branch
divergent (-inf); a finite bath budget of N interactions regularizes that
branch to the Gibbs weight of its energy level divided by N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import belief as belief_mod
from . import qmath
from .errors import ValidationError, WorkMatchError
from .source import HmmSource

WORK_MATCH_RTOL = 1e-9
LAMBDA_FLOOR = 1e-15

POLICY_KINDS = ("memory_quantum", "memory_classical", "memoryless", "overcommit")


@dataclass(frozen=True)
class WorkOutcome:
    """One distinguishable work value: possibly several merged eigenbranches."""

    value: float                  # -inf for the divergent branch
    eig_indices: tuple[int, ...]
    divergent: bool = False


@dataclass(frozen=True)
class IdealProtocol:
    """Spectral data of a target state with precomputed work values."""

    target: np.ndarray
    spectrum: qmath.Spectrum
    hamiltonian: np.ndarray
    eq_free_energy: float
    outcomes: tuple[WorkOutcome, ...]
    temperature: float = 1.0

    def __post_init__(self):
        self.target.setflags(write=False)
        self.hamiltonian.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    @property
    def work_values(self) -> np.ndarray:
        return np.array([o.value for o in self.outcomes])

    @property
    def has_divergent(self) -> bool:
        return any(o.divergent for o in self.outcomes)

    def match_work(self, w: float) -> int:
        """Nearest-outcome index for an observed work value, within tolerance."""
        values = self.work_values
        if math.isinf(w):
            for i, o in enumerate(self.outcomes):
                if o.divergent:
                    return i
            raise WorkMatchError("observed -inf work but the protocol has no divergent branch")
        finite = np.where(np.isfinite(values))[0]
        if len(finite) == 0:
            raise WorkMatchError("protocol has no finite work values")
        best = finite[int(np.argmin(np.abs(values[finite] - w)))]
        if abs(values[best] - w) > WORK_MATCH_RTOL * max(1.0, abs(w)):
            raise WorkMatchError(
                f"work value {w!r} matches no protocol outcome "
                f"(closest {values[best]!r}, tolerance {WORK_MATCH_RTOL:.0e})"
            )
        return int(best)

    def eigen_weights(self, sigma: np.ndarray) -> np.ndarray:
        """Diagonal of sigma in the target eigenbasis."""
        v = self.spectrum.eigenvectors
        w = np.real(np.einsum("in,ij,jn->n", v.conj(), sigma, v))
        return np.clip(w, 0.0, None)

    def outcome_distribution(self, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(work values, probabilities) for the given input state."""
        diag = self.eigen_weights(sigma)
        probs = np.array([diag[list(o.eig_indices)].sum() for o in self.outcomes])
        total = probs.sum()
        if not 0.0 < total:
            raise ValidationError("input state produced a null outcome distribution")
        return self.work_values, probs / total

    def regularized_work_values(self, n_interactions: int) -> np.ndarray:
        """Work values with divergent branches floored by a finite bath budget.

        A branch whose target eigenvalue vanishes gets the effective
        eigenvalue g_n / N, where g_n is the Gibbs weight of the energy level
        the branch maps onto; finite branches are unchanged.
        """
        if n_interactions < 1:
            raise ValidationError(f"bath interaction count must be >= 1, got {n_interactions}")
        energies = np.sort(np.linalg.eigvalsh(self.hamiltonian))
        gibbs = np.exp(-energies)
        gibbs = gibbs / gibbs.sum()
        values = self.work_values.copy()
        for i, o in enumerate(self.outcomes):
            if o.divergent:
                n = o.eig_indices[0]
                h_n = float(np.real(
                    self.spectrum.vector(n).conj() @ self.hamiltonian @ self.spectrum.vector(n)
                ))
                values[i] = h_n + math.log(gibbs[n] / n_interactions) - self.eq_free_energy
        return values


def build_protocol(rho_star: np.ndarray, hamiltonian: np.ndarray, temperature: float = 1.0) -> IdealProtocol:
    """Construct the ideal protocol for a target state.

    Outcomes whose work values sit closer than twice the matching tolerance
    are merged; eigenvalues at or below the floor become the divergent
    branch instead of silently producing float('-inf') via log.
    """
    rho = qmath.check_density(rho_star)
    h = qmath.check_hermitian(hamiltonian)
    if rho.shape != h.shape:
        raise ValidationError(f"target dim {rho.shape[0]} does not match Hamiltonian dim {h.shape[0]}")
    spec = qmath.eig(rho)
    free_energy = qmath.equilibrium_free_energy(h)
    raw: list[tuple[float, int, bool]] = []
    for n in range(spec.dim):
        lam = spec.eigenvalues[n]
        vec = spec.vector(n)
        mean_h = float(np.real(vec.conj() @ h @ vec))
        if lam <= LAMBDA_FLOOR:
            raw.append((-math.inf, n, True))
        else:
            raw.append((mean_h + math.log(lam) - free_energy, n, False))
    outcomes: list[WorkOutcome] = []
    finite = sorted((r for r in raw if not r[2]), key=lambda r: -r[0])
    for value, n, _ in finite:
        if outcomes and not outcomes[-1].divergent:
            prev = outcomes[-1].value
            if abs(prev - value) < 2.0 * WORK_MATCH_RTOL * max(1.0, abs(prev)):
                merged = outcomes[-1]
                outcomes[-1] = WorkOutcome(value=merged.value, eig_indices=merged.eig_indices + (n,))
                continue
        outcomes.append(WorkOutcome(value=value, eig_indices=(n,)))
    divergent = tuple(n for _, n, flag in raw if flag)
    if divergent:
        outcomes.append(WorkOutcome(value=-math.inf, eig_indices=divergent, divergent=True))
    return IdealProtocol(
        target=rho,
        spectrum=spec,
        hamiltonian=h,
        eq_free_energy=free_energy,
        outcomes=tuple(outcomes),
        temperature=temperature,
    )


def work_distribution(protocol: IdealProtocol, sigma: np.ndarray) -> dict[float, float]:
    """Map work value -> probability for the given input state."""
    sigma = qmath.check_density(sigma)
    if sigma.shape != protocol.target.shape:
        raise ValidationError("input state dimension does not match the protocol")
    values, probs = protocol.outcome_distribution(sigma)
    return dict(zip(values, probs))


def expected_work(protocol: IdealProtocol, sigma: np.ndarray, regularization_n: int | None = None) -> float:
    """Probability-weighted mean work for the given input state.

    With ``regularization_n=None`` any weight on a divergent branch makes the
    result -inf; passing a finite bath budget N evaluates the floored values
    instead.
    """
    sigma = qmath.check_density(sigma)
    values, probs = protocol.outcome_distribution(sigma)
    if regularization_n is not None:
        values = protocol.regularized_work_values(regularization_n)
    total = 0.0
    for v, p in zip(values, probs):
        if p == 0.0:
            continue
        if math.isinf(v):
            return -math.inf
        total += p * v
    return total


@dataclass(frozen=True)
class StrategyPolicy:
    """How the engine picks the protocol target from its current belief.

    kind:
      * ``memory_quantum``   - target the expected next state
      * ``memory_classical`` - target its energy-dephased version
      * ``memoryless``       - target the time-averaged state, never update
      * ``overcommit``       - target the single most probable output
    """

    kind: str
    regularization_n: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")

    @property
    def updates_memory(self) -> bool:
        return self.kind != "memoryless"


def policy(kind: str, regularization_n: int | None = None) -> StrategyPolicy:
    return StrategyPolicy(kind=kind, regularization_n=regularization_n)


def select_target(pol: StrategyPolicy, eta: np.ndarray, src: HmmSource) -> np.ndarray:
    """Target state for one extraction step under the given policy.

    Overcommitment ties break toward the lowest symbol index.
    """
    if pol.kind == "memory_quantum":
        return belief_mod.expected_state(eta, src)
    if pol.kind == "memory_classical":
        xi = belief_mod.expected_state(eta, src)
        return qmath.dephase(xi, qmath.eig(src.hamiltonian))
    if pol.kind == "memoryless":
        pi = _stationary_cached(src)
        return belief_mod.expected_state(pi, src)
    probs = belief_mod.emission_probs(np.asarray(eta, dtype=np.float64), src)
    return src.outputs[int(np.argmax(probs))].copy()


_stationary_cache: dict[int, np.ndarray] = {}


def _stationary_cached(src: HmmSource) -> np.ndarray:
    from .source import default_initial_belief

    key = id(src)
    if key not in _stationary_cache:
        _stationary_cache[key] = default_initial_belief(src)
    return _stationary_cache[key]
