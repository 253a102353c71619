"""Finite-state hidden Markov sources with quantum outputs.

A source is specified by labeled substochastic matrices ``T[x]`` whose
(s, s') entry is the joint probability of moving s -> s' while emitting
the quantum state ``outputs[x]``, together with the common single-output
Hamiltonian. Symbol statistics are classical; only the emitted states are
quantum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import qmath
from .errors import ComputationError, ValidationError

ROW_SUM_ATOL = 1e-12
STATIONARY_TOL = 1e-12
DENSE_STATIONARY_MAX_STATES = 8


@dataclass(frozen=True, eq=False)
class HmmSource:
    """Immutable hidden Markov source of quantum states."""

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    transitions: tuple[np.ndarray, ...]     # one |S|x|S| matrix per symbol
    outputs: tuple[np.ndarray, ...]         # one d x d density operator per symbol
    hamiltonian: np.ndarray
    initial_belief: np.ndarray | None = None
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for m in (*self.transitions, *self.outputs, self.hamiltonian):
            m.setflags(write=False)
        if self.initial_belief is not None:
            self.initial_belief.setflags(write=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_symbols(self) -> int:
        return len(self.alphabet)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def transition(self, x: int) -> np.ndarray:
        return self.transitions[x]

    def output(self, x: int) -> np.ndarray:
        return self.outputs[x]

    def total_transition(self) -> np.ndarray:
        """Row-stochastic matrix summed over symbols."""
        return np.sum(self.transitions, axis=0)

    def gibbs_state(self) -> np.ndarray:
        return qmath.gibbs_state(self.hamiltonian)


@dataclass(frozen=True)
class Realization:
    """One sampled trajectory of latent states and emitted symbols."""

    seed: int
    latent_path: np.ndarray
    symbol_path: np.ndarray

    @property
    def length(self) -> int:
        return len(self.symbol_path)


@dataclass
class ValidationReport:
    ok: bool = True
    issues: list[str] = field(default_factory=list)

    def fail(self, message: str) -> None:
        self.ok = False
        self.issues.append(message)

    def __str__(self) -> str:
        return "valid" if self.ok else "invalid:\n  " + "\n  ".join(self.issues)


def validate(src: HmmSource) -> ValidationReport:
    """Check every structural invariant; returns a report, never raises."""
    report = ValidationReport()
    n, m = src.n_states, src.n_symbols
    if len(src.transitions) != m:
        report.fail(f"{len(src.transitions)} transition matrices for {m} symbols")
        return report
    for x, t in enumerate(src.transitions):
        if t.shape != (n, n):
            report.fail(f"transition matrix for symbol {src.alphabet[x]!r} has shape {t.shape}, expected {(n, n)}")
            return report
        if np.any(t < 0) or np.any(t > 1):
            bad = np.unravel_index(int(np.argmin(t)), t.shape)
            report.fail(
                f"transition entry T[{src.alphabet[x]!r}][{src.states[bad[0]]!r},{src.states[bad[1]]!r}]"
                f" = {t[bad]:.6g} outside [0, 1]"
            )
    total = src.total_transition()
    row_sums = total.sum(axis=1)
    for s, rs in enumerate(row_sums):
        if abs(rs - 1.0) > ROW_SUM_ATOL:
            report.fail(f"row {src.states[s]!r} sums to {rs:.12g}, expected 1 within {ROW_SUM_ATOL:.1e}")
    d = src.dim
    for x, out in enumerate(src.outputs):
        if out.shape != (d, d):
            report.fail(f"output for symbol {src.alphabet[x]!r} has dim {out.shape[0]}, Hamiltonian has dim {d}")
            continue
        try:
            qmath.check_density(out)
        except ValidationError as exc:
            report.fail(f"output for symbol {src.alphabet[x]!r}: {exc}")
    try:
        qmath.check_hermitian(src.hamiltonian)
    except ValidationError as exc:
        report.fail(f"hamiltonian: {exc}")
    if report.ok:
        n_comp, _ = connected_components(csr_matrix(total > 0), directed=True, connection="strong")
        if n_comp != 1:
            report.fail(f"transition graph has {n_comp} strongly connected components; expected a single recurrent class")
    if report.ok and src.initial_belief is not None:
        b = src.initial_belief
        if b.shape != (n,) or np.any(b < -1e-12) or abs(b.sum() - 1.0) > 1e-10:
            report.fail("initial_belief is not a probability vector over the latent states")
    return report


def require_valid(src: HmmSource) -> HmmSource:
    report = validate(src)
    if not report.ok:
        raise ValidationError(str(report))
    return src


def stationary(src: HmmSource) -> np.ndarray:
    """Stationary belief pi solving pi = pi * sum_x T^(x).

    Dense left-eigenvector solve for small state spaces, power iteration
    above; either way the fixed point is verified to 1e-12 in L1.
    """
    cached = src._cache.get("stationary")
    if cached is not None:
        return cached
    total = src.total_transition()
    n = src.n_states
    if n == 1:
        return np.array([1.0])
    if n <= DENSE_STATIONARY_MAX_STATES:
        evals, evecs = np.linalg.eig(total.T)
        idx = int(np.argmin(np.abs(evals - 1.0)))
        pi = np.real(evecs[:, idx])
        pi = np.clip(pi if pi.sum() > 0 else -pi, 0.0, None)
        pi = pi / pi.sum()
    else:
        pi = np.full(n, 1.0 / n)
    for _ in range(100_000):
        nxt = pi @ total
        nxt = nxt / nxt.sum()
        if np.abs(nxt - pi).sum() < 1e-15:
            pi = nxt
            break
        pi = nxt
    residual = float(np.abs(pi @ total - pi).sum())
    if residual > STATIONARY_TOL:
        raise ComputationError(f"stationary distribution did not converge: residual {residual:.3e}")
    pi.setflags(write=False)
    src._cache["stationary"] = pi
    return pi


def default_initial_belief(src: HmmSource) -> np.ndarray:
    if src.initial_belief is not None:
        return np.asarray(src.initial_belief, dtype=np.float64)
    return stationary(src)


def sample(src: HmmSource, length: int, seed: int, initial: np.ndarray | None = None) -> Realization:
    """Draw one latent/symbol trajectory; reproducible for a given seed."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    init = default_initial_belief(src) if initial is None else np.asarray(initial, dtype=np.float64)
    n, m = src.n_states, src.n_symbols
    # per-state cumulative over flattened (symbol, next-state) pairs
    joint = np.stack([np.stack([src.transitions[x][s] for x in range(m)]).reshape(-1) for s in range(n)])
    cum = np.cumsum(joint, axis=1)
    cum /= cum[:, -1:]
    u = rng.random(length + 1)
    s = int(np.searchsorted(np.cumsum(init) / init.sum(), u[0], side="right"))
    latent = np.empty(length, dtype=np.int64)
    symbols = np.empty(length, dtype=np.int64)
    for t in range(length):
        flat = int(np.searchsorted(cum[s], u[t + 1], side="right"))
        flat = min(flat, n * m - 1)
        symbols[t] = flat // n
        s = flat % n
        latent[t] = s
    return Realization(seed=seed, latent_path=latent, symbol_path=symbols)


def joint_state(src: HmmSource, length: int, cap: int = qmath.DEFAULT_TENSOR_CAP) -> np.ndarray:
    """Length-L marginal of the output pattern, started from the stationary belief.

    Computed by an operator-valued forward filter over latent states, so the
    cost is |S|^2 |X| kron-accumulations per site instead of |X|^L terms.
    """
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    if src.dim ** length > cap:
        raise ValidationError(f"joint state dimension {src.dim ** length} exceeds cap {cap}")
    pi = stationary(src)
    filt = [np.array([[p]], dtype=np.complex128) for p in pi]
    for _ in range(length):
        nxt = [np.zeros((filt[0].shape[0] * src.dim,) * 2, dtype=np.complex128) for _ in range(src.n_states)]
        for x in range(src.n_symbols):
            t = src.transitions[x]
            for s in range(src.n_states):
                block = np.kron(filt[s], src.outputs[x])
                for s2 in range(src.n_states):
                    if t[s, s2] > 0:
                        nxt[s2] += t[s, s2] * block
        filt = nxt
    return np.sum(filt, axis=0)


def builtin_perturbed_coin(p: float, r: float, energy_gap: float = 1.0) -> HmmSource:
    """Two-state coin that flips with probability p per step.

    Arriving in state k emits output k: the ground state for symbol 0, the
    overlap state sqrt(r)|0> + sqrt(1-r)|1> for symbol 1.
    """
    if not 0.0 < p < 1.0:
        raise ValidationError(f"switching probability p={p} outside (0, 1)")
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"overlap parameter r={r} outside [0, 1]")
    t0 = np.array([[1.0 - p, 0.0], [p, 0.0]])
    t1 = np.array([[0.0, p], [0.0, 1.0 - p]])
    return HmmSource(
        states=("s0", "s1"),
        alphabet=("0", "1"),
        transitions=(t0, t1),
        outputs=(qmath.projector([1.0, 0.0]), qmath.overlap_state(r)),
        hamiltonian=qmath.qubit_hamiltonian(energy_gap),
        name=f"perturbed_coin(p={p:g}, r={r:g})",
    )


def builtin_golden_mean(g: float = 0.5, r: float = 0.5, energy_gap: float = 1.0) -> HmmSource:
    """Golden-mean-style source: symbol 0 never repeats.

    Illustrative asset with a higher Markov order than the coin. The symbol-1
    output is mixed, weighted so the time-averaged state equals the coin's
    (|0><0| + |psi_r><psi_r|)/2 for every g, which keeps memoryless work
    extraction identical across the two families.
    """
    if not 0.0 < g < 1.0:
        raise ValidationError(f"break probability g={g} outside (0, 1)")
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"overlap parameter r={r} outside [0, 1]")
    t0 = np.array([[0.0, g], [0.0, 0.0]])
    t1 = np.array([[1.0 - g, 0.0], [1.0, 0.0]])
    mu = (1.0 - g) / 2.0
    sigma1 = mu * qmath.projector([1.0, 0.0]) + (1.0 - mu) * qmath.overlap_state(r)
    return HmmSource(
        states=("run", "break"),
        alphabet=("0", "1"),
        transitions=(t0, t1),
        outputs=(qmath.projector([1.0, 0.0]), sigma1),
        hamiltonian=qmath.qubit_hamiltonian(energy_gap),
        name=f"golden_mean(g={g:g}, r={r:g})",
    )


SOURCE_FAMILIES = {
    "perturbed_coin": builtin_perturbed_coin,
    "golden_mean": lambda p, r, energy_gap=1.0: builtin_golden_mean(p, r, energy_gap),
}


def _complex_matrix_from_json(raw, where: str) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: not a numeric array ({exc})") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{where}: expected a square matrix of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def _complex_matrix_to_json(mat: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in mat]


def loads_model(text: str, name: str = "model") -> HmmSource:
    """Parse the JSON model document, raising with field-level diagnostics."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{name}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    for key in ("states", "alphabet", "transitions", "outputs", "hamiltonian"):
        if key not in doc:
            raise ValidationError(f"{name}: missing required field {key!r}")
    states = tuple(str(s) for s in doc["states"])
    alphabet = tuple(str(x) for x in doc["alphabet"])
    if doc.get("energy_unit", "kBT") != "kBT":
        raise ValidationError(f"{name}: energy_unit must be 'kBT', got {doc['energy_unit']!r}")
    transitions = []
    for x in alphabet:
        if x not in doc["transitions"]:
            raise ValidationError(f"{name}: transitions missing symbol {x!r}")
        t = np.asarray(doc["transitions"][x], dtype=np.float64)
        if t.shape != (len(states), len(states)):
            raise ValidationError(f"{name}: transitions[{x!r}] has shape {t.shape}, expected {(len(states), len(states))}")
        transitions.append(t)
    outputs = []
    for x in alphabet:
        if x not in doc["outputs"]:
            raise ValidationError(f"{name}: outputs missing symbol {x!r}")
        outputs.append(_complex_matrix_from_json(doc["outputs"][x], f"{name}: outputs[{x!r}]"))
    hamiltonian = _complex_matrix_from_json(doc["hamiltonian"], f"{name}: hamiltonian")
    initial = None
    if "initial_belief" in doc and doc["initial_belief"] is not None:
        initial = np.asarray(doc["initial_belief"], dtype=np.float64)
    src = HmmSource(
        states=states,
        alphabet=alphabet,
        transitions=tuple(transitions),
        outputs=tuple(outputs),
        hamiltonian=hamiltonian,
        initial_belief=initial,
        name=str(doc.get("name", name)),
    )
    report = validate(src)
    if not report.ok:
        raise ValidationError(f"{name}: {report}")
    return src


def load_model(path) -> HmmSource:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_model(fh.read(), name=str(path))


def dumps_model(src: HmmSource, indent: int = 2) -> str:
    doc = {
        "name": src.name,
        "states": list(src.states),
        "alphabet": list(src.alphabet),
        "transitions": {x: [list(map(float, row)) for row in src.transitions[i]] for i, x in enumerate(src.alphabet)},
        "outputs": {x: _complex_matrix_to_json(src.outputs[i]) for i, x in enumerate(src.alphabet)},
        "hamiltonian": _complex_matrix_to_json(src.hamiltonian),
        "energy_unit": "kBT",
    }
    if src.initial_belief is not None:
        doc["initial_belief"] = [float(v) for v in src.initial_belief]
    return json.dumps(doc, indent=indent)


def save_model(src: HmmSource, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(src) + "\n")
