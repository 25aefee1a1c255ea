"""Dense 2^n state-vector reference for cross-checking the sparse engine.

Deliberately written as a straightforward full-vector implementation (numpy
fancy indexing, no sparsity tricks) so it shares no code path with the
package.  Branch semantics mirror the sparse engine: (+1, -1) order,
branches below 1e-14 probability omitted, post-states renormalized.
"""

from __future__ import annotations

import numpy as np

PROB_EPS = 1e-14


def _parity(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        out ^= out >> shift
    return out & 1


class DenseState:
    def __init__(self, n: int, vec: np.ndarray | None = None):
        if n > 14:
            raise ValueError("dense reference capped at 14 qubits")
        self.n = n
        if vec is None:
            vec = np.zeros(2**n, dtype=complex)
            vec[0] = 1.0
        self.vec = np.asarray(vec, dtype=complex)
        self.idx = np.arange(2**n)

    def copy(self) -> "DenseState":
        return DenseState(self.n, self.vec.copy())

    @classmethod
    def from_sparse(cls, sparse) -> "DenseState":
        vec = np.zeros(2**sparse.n_qubits, dtype=complex)
        for k, a in sparse.items():
            vec[k] = a
        return cls(sparse.n_qubits, vec)

    def max_diff_from_sparse(self, sparse) -> float:
        other = self.from_sparse(sparse)
        return float(np.max(np.abs(self.vec - other.vec)))

    # -- gates ---------------------------------------------------------------

    def x(self, q: int) -> "DenseState":
        return DenseState(self.n, self.vec[self.idx ^ (1 << q)])

    def z(self, q: int) -> "DenseState":
        sign = np.where((self.idx >> q) & 1, -1.0, 1.0)
        return DenseState(self.n, self.vec * sign)

    def phase(self, phi: float, q: int) -> "DenseState":
        factor = np.where((self.idx >> q) & 1, np.exp(1j * phi), 1.0)
        return DenseState(self.n, self.vec * factor)

    def h(self, q: int) -> "DenseState":
        bit = 1 << q
        lo = self.vec[self.idx & ~bit]
        hi = self.vec[self.idx | bit]
        sign = np.where(self.idx & bit, -1.0, 1.0)
        return DenseState(self.n, (lo + sign * hi) / np.sqrt(2.0))

    def cnot(self, c: int, t: int) -> "DenseState":
        src = self.idx ^ (((self.idx >> c) & 1) << t)
        return DenseState(self.n, self.vec[src])

    def cz(self, a: int, b: int) -> "DenseState":
        both = ((self.idx >> a) & 1) & ((self.idx >> b) & 1)
        return DenseState(self.n, self.vec * np.where(both, -1.0, 1.0))

    # -- measurement ----------------------------------------------------------

    def measure_pauli_string(self, string) -> list[tuple[int, float, "DenseState"]]:
        xmask = 0
        zmask = 0
        for q, letter in string:
            if letter.upper() == "X":
                xmask |= 1 << q
            else:
                zmask |= 1 << q
        src = self.idx ^ xmask
        signs = np.where(_parity(src & zmask), -1.0, 1.0)
        pv = signs * self.vec[src]
        branches = []
        for eig in (1, -1):
            post = 0.5 * (self.vec + eig * pv)
            prob = float(np.sum(np.abs(post) ** 2))
            if prob > PROB_EPS:
                branches.append((eig, prob, DenseState(self.n, post / np.sqrt(prob))))
        return branches


def apply_named_gate(state: DenseState, gate: str, qubits, phi: float | None = None) -> DenseState:
    name = gate.upper()
    qs = [qubits] if isinstance(qubits, int) else list(qubits)
    if name == "X":
        return state.x(qs[0])
    if name == "Z":
        return state.z(qs[0])
    if name == "H":
        return state.h(qs[0])
    if name == "PHASE":
        return state.phase(phi, qs[0])
    if name == "CNOT":
        return state.cnot(qs[0], qs[1])
    if name == "CZ":
        return state.cz(qs[0], qs[1])
    raise ValueError(gate)
