"""Belief states over latent sources and their observation-conditioned updates.

A belief is a probability row vector over the latent states of a source.
Conditioning on any measurement outcome of the current output maps beliefs
to beliefs: the posterior mixes the per-symbol propagated vectors
``eta T^(x)`` weighted by the outcome likelihood given each symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ImpossibleObservationError, ValidationError
from .source import HmmSource

if TYPE_CHECKING:  # pragma: no cover
    from .extraction import IdealProtocol

BELIEF_CLIP = 1e-12
BELIEF_SUM_ATOL = 1e-10
OBSERVATION_PROB_FLOOR = 1e-14


def as_belief(vec) -> np.ndarray:
    """Validate and normalize a belief vector; clips roundoff negatives."""
    b = np.asarray(vec, dtype=np.float64).reshape(-1)
    if b.min() < -BELIEF_CLIP:
        raise ValidationError(f"belief component {b.min():.3e} below -{BELIEF_CLIP:.0e}")
    b = np.clip(b, 0.0, None)
    total = b.sum()
    if abs(total - 1.0) > BELIEF_SUM_ATOL:
        raise ValidationError(f"belief sums to {total:.12g}, expected 1 within {BELIEF_SUM_ATOL:.0e}")
    return b / total


@dataclass(frozen=True)
class PovmLikelihood:
    """Outcome likelihood table Pr(o | emitted symbol x).

    ``table[o, x]`` holds the probability of outcome index ``o`` given that
    the current output was prepared as ``outputs[x]``; each column sums to 1.
    ``outcomes`` carries the outcome labels (e.g. work values).
    """

    outcomes: tuple
    table: np.ndarray

    def __post_init__(self):
        t = self.table
        if t.ndim != 2 or t.shape[0] != len(self.outcomes):
            raise ValidationError(f"likelihood table shape {t.shape} does not match {len(self.outcomes)} outcomes")
        if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
            raise ValidationError("likelihood entries must lie in [0, 1]")
        col = t.sum(axis=0)
        if np.any(np.abs(col - 1.0) > BELIEF_SUM_ATOL):
            raise ValidationError(f"likelihood columns must sum to 1, got {col}")

    def index_of(self, outcome) -> int:
        for i, o in enumerate(self.outcomes):
            if o == outcome:
                return i
        raise ValidationError(f"unknown outcome {outcome!r}")


def emission_probs(eta: np.ndarray, src: HmmSource) -> np.ndarray:
    """Next-symbol distribution P(x) = eta T^(x) 1."""
    return np.array([float(eta @ t.sum(axis=1)) for t in src.transitions])


def expected_state(eta: np.ndarray, src: HmmSource) -> np.ndarray:
    """Belief-weighted mixture of the possible next outputs."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (src.n_states,):
        raise ValidationError(f"belief has {eta.shape[0]} components for a {src.n_states}-state source")
    probs = emission_probs(eta, src)
    out = np.zeros((src.dim, src.dim), dtype=np.complex128)
    for x, p in enumerate(probs):
        if p != 0.0:
            out += p * src.outputs[x]
    return out


def update_povm(eta: np.ndarray, outcome, lik: PovmLikelihood, src: HmmSource) -> np.ndarray:
    """Bayes update of the belief after observing a measurement outcome.

    ``outcome`` may be an outcome label or an integer index into
    ``lik.outcomes``.
    """
    eta = as_belief(eta)
    o = outcome if isinstance(outcome, (int, np.integer)) else lik.index_of(outcome)
    num = np.zeros_like(eta)
    for x in range(src.n_symbols):
        w = lik.table[o, x]
        if w != 0.0:
            num += w * (eta @ src.transitions[x])
    z = num.sum()
    if z <= OBSERVATION_PROB_FLOOR:
        raise ImpossibleObservationError(lik.outcomes[o], z)
    return as_belief(num / z)


def protocol_likelihood(protocol: "IdealProtocol", src: HmmSource) -> PovmLikelihood:
    """Work-outcome likelihoods induced by an ideal extraction protocol.

    Pr(w | x) sums |<lambda_n|outputs[x]|lambda_n>|-weights over the
    eigenindices merged into each work outcome.
    """
    vecs = protocol.spectrum.eigenvectors
    table = np.zeros((len(protocol.outcomes), src.n_symbols))
    for x in range(src.n_symbols):
        diag = np.real(np.einsum("in,ij,jn->n", vecs.conj(), src.outputs[x], vecs))
        for o, outcome in enumerate(protocol.outcomes):
            table[o, x] = float(np.clip(diag[list(outcome.eig_indices)].sum(), 0.0, 1.0))
    return PovmLikelihood(outcomes=tuple(o.value for o in protocol.outcomes), table=table)


def update_work(eta: np.ndarray, w: float, protocol: "IdealProtocol", src: HmmSource) -> np.ndarray:
    """Belief update conditioned on an observed extracted-work value.

    The observed value is matched to the protocol's work outcomes by nearest
    neighbor within the protocol's matching tolerance; the update then runs
    through the generic POVM path with the induced likelihood table.
    """
    o = protocol.match_work(w)
    return update_povm(eta, o, protocol_likelihood(protocol, src), src)


def transition_probs(eta: np.ndarray, protocol: "IdealProtocol", src: HmmSource) -> dict[float, float]:
    """Work-outcome distribution from the current belief.

    Equals the protocol's outcome distribution evaluated on the expected
    state of the belief.
    """
    xi = expected_state(as_belief(eta), src)
    values, probs = protocol.outcome_distribution(xi)
    return dict(zip(values, probs))
