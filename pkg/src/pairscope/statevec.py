"""Sparse state-vector engine over named qubit registers.

States are maps from computational-basis keys (ints; bit i of the key is
qubit i) to complex amplitudes.  The protocol at useful sizes (M=7, K=3 is 78
qubits) is far beyond dense simulation, but single-photon states occupy O(K)
basis strings, so a dict-backed representation is the enabling choice.

Operations are persistent: every gate or measurement returns a new
``SparseState``; nothing mutates in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError, EnumerationOverflowError, LayoutError

PRUNE_EPS = 1e-15  # amplitudes below this are dropped after every operation
PROB_EPS = 1e-14  # measurement branches below this probability are omitted
_SQRT_HALF = 1.0 / math.sqrt(2.0)

PHOTONIC_SITES = ("A", "B")
MEMORY_SITES = ("A", "B")
ANCILLA_SIDES = ("C", "D")


@dataclass(frozen=True)
class RegisterLayout:
    """Index map for photonic, memory, and ancilla qubits.

    Photonic qubits: (site, temporal mode j=1..M, spatial mode i=0..K-1).
    Memory qubits: (site, bit index k=1..mbar, spatial mode i), where
    mbar = ceil(log2(M+1)) bits binary-encode the arrival time.
    Ancilla qubits: one (C, D) pair per (k, i), pre-shared between the sites.
    """

    M: int
    K: int
    mbar: int = field(init=False)
    n_photonic: int = field(init=False)
    n_memory: int = field(init=False)
    n_ancilla: int = field(init=False)
    n_qubits: int = field(init=False)

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ConfigError(f"need M >= 1 and K >= 1, got M={self.M}, K={self.K}")
        mbar = self.M.bit_length()
        ns = object.__setattr__
        ns(self, "mbar", mbar)
        ns(self, "n_photonic", 2 * self.M * self.K)
        ns(self, "n_memory", 2 * mbar * self.K)
        ns(self, "n_ancilla", 2 * mbar * self.K)
        ns(self, "n_qubits", 2 * self.M * self.K + 4 * mbar * self.K)

    def photonic(self, site: str, j: int, i: int) -> int:
        if site not in PHOTONIC_SITES:
            raise LayoutError(f"photonic site must be A or B, got {site!r}")
        if not (1 <= j <= self.M) or not (0 <= i < self.K):
            raise LayoutError(f"photonic index (j={j}, i={i}) outside M={self.M}, K={self.K}")
        base = 0 if site == "A" else self.M * self.K
        return base + (j - 1) * self.K + i

    def memory(self, site: str, k: int, i: int) -> int:
        if site not in MEMORY_SITES:
            raise LayoutError(f"memory site must be A or B, got {site!r}")
        if not (1 <= k <= self.mbar) or not (0 <= i < self.K):
            raise LayoutError(f"memory index (k={k}, i={i}) outside mbar={self.mbar}, K={self.K}")
        base = self.n_photonic + (0 if site == "A" else self.mbar * self.K)
        return base + (k - 1) * self.K + i

    def ancilla(self, side: str, k: int, i: int) -> int:
        if side not in ANCILLA_SIDES:
            raise LayoutError(f"ancilla side must be C or D, got {side!r}")
        if not (1 <= k <= self.mbar) or not (0 <= i < self.K):
            raise LayoutError(f"ancilla index (k={k}, i={i}) outside mbar={self.mbar}, K={self.K}")
        base = self.n_photonic + self.n_memory + (0 if side == "C" else self.mbar * self.K)
        return base + (k - 1) * self.K + i

    def memory_mask(self) -> int:
        width = self.n_memory
        return ((1 << width) - 1) << self.n_photonic

    def ancilla_mask(self) -> int:
        width = self.n_ancilla
        return ((1 << width) - 1) << (self.n_photonic + self.n_memory)

    def qubit_name(self, idx: int) -> str:
        if not (0 <= idx < self.n_qubits):
            raise LayoutError(f"qubit index {idx} outside layout of {self.n_qubits}")
        if idx < self.n_photonic:
            site = "A" if idx < self.M * self.K else "B"
            rel = idx % (self.M * self.K)
            return f"ph[{site},j={rel // self.K + 1},i={rel % self.K}]"
        idx2 = idx - self.n_photonic
        if idx2 < self.n_memory:
            site = "A" if idx2 < self.mbar * self.K else "B"
            rel = idx2 % (self.mbar * self.K)
            return f"mem[{site},k={rel // self.K + 1},i={rel % self.K}]"
        idx3 = idx2 - self.n_memory
        side = "C" if idx3 < self.mbar * self.K else "D"
        rel = idx3 % (self.mbar * self.K)
        return f"anc[{side},k={rel // self.K + 1},i={rel % self.K}]"


def time_bit(j: int, k: int) -> int:
    """k-th binary digit of temporal mode j; k=1 is the least significant."""
    return (j >> (k - 1)) & 1


def key_to_bitstring(key: int, n_qubits: int) -> str:
    """Qubit 0 is the first character."""
    return "".join("1" if (key >> i) & 1 else "0" for i in range(n_qubits))


def bitstring_to_key(bits: str) -> int:
    key = 0
    for i, ch in enumerate(bits):
        if ch == "1":
            key |= 1 << i
        elif ch != "0":
            raise LayoutError(f"bitstring may contain only 0/1, got {bits!r}")
    return key


class SparseState:
    """Immutable sparse complex amplitude map over n qubits."""

    __slots__ = ("n_qubits", "amps")

    def __init__(self, n_qubits: int, amps: dict[int, complex]):
        self.n_qubits = n_qubits
        self.amps = amps

    # -- constructors -------------------------------------------------------

    @classmethod
    def basis_state(cls, n_qubits: int, bits: int | str = 0) -> "SparseState":
        if isinstance(bits, str):
            if len(bits) != n_qubits:
                raise LayoutError(f"bitstring length {len(bits)} != layout width {n_qubits}")
            key = bitstring_to_key(bits)
        else:
            key = int(bits)
            if key < 0 or key >> n_qubits:
                raise LayoutError(f"basis key {key} outside {n_qubits} qubits")
        return cls(n_qubits, {key: 1.0 + 0.0j})

    @classmethod
    def from_amplitudes(cls, n_qubits: int, amps: dict[int, complex], normalize: bool = False) -> "SparseState":
        clean = {int(k): complex(a) for k, a in amps.items() if abs(a) > PRUNE_EPS}
        for k in clean:
            if k < 0 or k >> n_qubits:
                raise LayoutError(f"basis key {k} outside {n_qubits} qubits")
        norm = math.sqrt(sum(abs(a) ** 2 for a in clean.values()))
        if norm == 0.0:
            raise ConfigError("state must have nonzero norm")
        if normalize:
            clean = {k: a / norm for k, a in clean.items()}
        elif abs(norm - 1.0) > 1e-10:
            raise ConfigError(f"amplitudes not normalized (norm {norm!r}); pass normalize=True")
        return cls(n_qubits, clean)

    # -- inspection ---------------------------------------------------------

    @property
    def num_entries(self) -> int:
        return len(self.amps)

    def norm_sq(self) -> float:
        return sum(abs(a) ** 2 for a in self.amps.values())

    def amplitude(self, bits: int | str) -> complex:
        key = bitstring_to_key(bits) if isinstance(bits, str) else int(bits)
        return self.amps.get(key, 0.0 + 0.0j)

    def items(self):
        return self.amps.items()

    def to_json_entries(self) -> list[dict]:
        """Debug dump: list of {bitstring, re, im}, sorted by key."""
        return [
            {"bitstring": key_to_bitstring(k, self.n_qubits), "re": a.real, "im": a.imag}
            for k, a in sorted(self.amps.items())
        ]

    def max_amplitude_diff(self, other: "SparseState") -> float:
        keys = set(self.amps) | set(other.amps)
        return max(
            (abs(self.amps.get(k, 0.0) - other.amps.get(k, 0.0)) for k in keys),
            default=0.0,
        )

    # -- gates --------------------------------------------------------------

    def _check_targets(self, *qubits: int):
        seen = set()
        for q in qubits:
            if not (0 <= q < self.n_qubits):
                raise LayoutError(f"qubit {q} outside state of {self.n_qubits}")
            if q in seen:
                raise LayoutError(f"duplicate gate target {q}")
            seen.add(q)

    def x(self, q: int) -> "SparseState":
        self._check_targets(q)
        bit = 1 << q
        return SparseState(self.n_qubits, {k ^ bit: a for k, a in self.amps.items()})

    def z(self, q: int) -> "SparseState":
        self._check_targets(q)
        bit = 1 << q
        return SparseState(self.n_qubits, {k: (-a if k & bit else a) for k, a in self.amps.items()})

    def phase(self, phi: float, q: int) -> "SparseState":
        self._check_targets(q)
        bit = 1 << q
        ph = complex(math.cos(phi), math.sin(phi))
        return SparseState(self.n_qubits, {k: (a * ph if k & bit else a) for k, a in self.amps.items()})

    def h(self, q: int) -> "SparseState":
        self._check_targets(q)
        bit = 1 << q
        out: dict[int, complex] = {}
        for k, a in self.amps.items():
            lo = k & ~bit
            hi = k | bit
            contrib = a * _SQRT_HALF
            out[lo] = out.get(lo, 0.0) + contrib
            out[hi] = out.get(hi, 0.0) + (-contrib if k & bit else contrib)
        return SparseState(self.n_qubits, {k: a for k, a in out.items() if abs(a) > PRUNE_EPS})

    def cnot(self, control: int, target: int) -> "SparseState":
        self._check_targets(control, target)
        cbit, tbit = 1 << control, 1 << target
        return SparseState(self.n_qubits, {(k ^ tbit if k & cbit else k): a for k, a in self.amps.items()})

    def cz(self, a_q: int, b_q: int) -> "SparseState":
        self._check_targets(a_q, b_q)
        abit, bbit = 1 << a_q, 1 << b_q
        return SparseState(
            self.n_qubits,
            {k: (-a if (k & abit) and (k & bbit) else a) for k, a in self.amps.items()},
        )


def init_basis_state(layout: RegisterLayout, bits: int | str = 0) -> SparseState:
    """Single-entry state over the layout's qubits."""
    return SparseState.basis_state(layout.n_qubits, bits)


_GATES_1Q = {"X": SparseState.x, "Z": SparseState.z, "H": SparseState.h}
_GATES_2Q = {"CNOT": SparseState.cnot, "CZ": SparseState.cz}


def apply_gate(state: SparseState, gate: str, qubits, phi: float | None = None) -> SparseState:
    """Dispatch wrapper: gate in {X, H, Z, PHASE, CNOT, CZ}."""
    name = gate.upper()
    qs = [qubits] if isinstance(qubits, int) else list(qubits)
    if name == "PHASE":
        if phi is None:
            raise ConfigError("PHASE gate needs an angle")
        (q,) = qs
        return state.phase(phi, q)
    if name in _GATES_1Q:
        (q,) = qs
        return _GATES_1Q[name](state, q)
    if name in _GATES_2Q:
        a, b = qs
        return _GATES_2Q[name](state, a, b)
    raise ConfigError(f"unknown gate {gate!r}")


@dataclass(frozen=True)
class Branch:
    """Measurement outcome(s), Born probability, renormalized post-state."""

    outcome: int | tuple[int, ...]
    probability: float
    state: SparseState


def measure_pauli_string(state: SparseState, string) -> list[Branch]:
    """Joint +/-1 eigenvalue measurement of a product of X and Z factors.

    ``string`` is a sequence of (qubit, "X"|"Z") on distinct qubits.  Returns
    the nonzero-probability Branches in fixed (+1, -1) order.
    """
    pairs = list(string)
    if not pairs:
        raise ConfigError("pauli string must not be empty")
    xmask = 0
    zmask = 0
    seen = set()
    for q, letter in pairs:
        if not (0 <= q < state.n_qubits):
            raise LayoutError(f"qubit {q} outside state of {state.n_qubits}")
        if q in seen:
            raise LayoutError(f"duplicate qubit {q} in pauli string")
        seen.add(q)
        up = letter.upper()
        if up == "X":
            xmask |= 1 << q
        elif up == "Z":
            zmask |= 1 << q
        else:
            raise ConfigError(f"pauli letter must be X or Z, got {letter!r}")

    # P|b> = (-1)^{popcount(b & zmask)} |b ^ xmask>
    flipped: dict[int, complex] = {}
    for k, a in state.amps.items():
        sign = -1.0 if (k & zmask).bit_count() & 1 else 1.0
        kk = k ^ xmask
        flipped[kk] = flipped.get(kk, 0.0) + sign * a

    support = set(state.amps) | set(flipped)
    branches = []
    for eig in (1, -1):
        post: dict[int, complex] = {}
        prob = 0.0
        for k in support:
            amp = 0.5 * (state.amps.get(k, 0.0) + eig * flipped.get(k, 0.0))
            if abs(amp) > PRUNE_EPS:
                post[k] = amp
                prob += abs(amp) ** 2
        if prob > PROB_EPS:
            scale = 1.0 / math.sqrt(prob)
            branches.append(
                Branch(outcome=eig, probability=prob, state=SparseState(state.n_qubits, {k: a * scale for k, a in post.items()}))
            )
    return branches


def measure_qubit_x(state: SparseState, q: int) -> list[Branch]:
    """Single-qubit X-basis measurement."""
    return measure_pauli_string(state, [(q, "X")])


def sample_pauli_measurement(state: SparseState, string, rng) -> Branch:
    """Born-sample one branch of a Pauli-string measurement.

    Same semantics as choosing among measure_pauli_string branches by
    probability, but only the sampled post-state dict is built.
    """
    pairs = list(string)
    if not pairs:
        raise ConfigError("pauli string must not be empty")
    xmask = 0
    zmask = 0
    seen = set()
    for q, letter in pairs:
        if not (0 <= q < state.n_qubits):
            raise LayoutError(f"qubit {q} outside state of {state.n_qubits}")
        if q in seen:
            raise LayoutError(f"duplicate qubit {q} in pauli string")
        seen.add(q)
        if letter.upper() == "X":
            xmask |= 1 << q
        else:
            zmask |= 1 << q

    amps = state.amps
    flipped: dict[int, complex] = {}
    for k, a in amps.items():
        sign = -1.0 if (k & zmask).bit_count() & 1 else 1.0
        kk = k ^ xmask
        flipped[kk] = flipped.get(kk, 0.0) + sign * a

    # p_+/- = (1 +/- <v|P|v>) / 2 for a normalized state and Hermitian P
    expect = 0.0
    for k, w in flipped.items():
        a = amps.get(k)
        if a is not None:
            expect += (a.conjugate() * w).real
    norm_sq = sum((a * a.conjugate()).real for a in amps.values())
    p_plus = 0.5 * (norm_sq + expect)
    p_minus = 0.5 * (norm_sq - expect)

    total = p_plus + p_minus
    eig = 1 if rng.random() * total < p_plus else -1
    prob = p_plus if eig == 1 else p_minus
    if prob <= PROB_EPS:
        eig = -eig
        prob = p_plus if eig == 1 else p_minus
    scale = 0.5 / math.sqrt(prob)
    post: dict[int, complex] = {}
    for k, w in flipped.items():
        amp = (amps.get(k, 0.0) + eig * w) * scale
        if abs(amp) > PRUNE_EPS:
            post[k] = amp
    for k, a in amps.items():
        if k not in flipped:
            amp = a * scale
            if abs(amp) > PRUNE_EPS:
                post[k] = amp
    return Branch(outcome=eig, probability=prob / total, state=SparseState(state.n_qubits, post))


def enumerate_branches(state: SparseState, plan, cap: int = 2**20) -> list[Branch]:
    """Depth-first expansion of every nonzero-probability outcome sequence.

    ``plan`` is an ordered list of pauli strings.  Leaf outcomes are tuples of
    +/-1 in plan order; probabilities are joint.
    """
    plan = list(plan)
    leaves: list[Branch] = []

    def walk(st: SparseState, idx: int, prob: float, outcomes: tuple[int, ...]):
        if idx == len(plan):
            leaves.append(Branch(outcome=outcomes, probability=prob, state=st))
            if len(leaves) > cap:
                raise EnumerationOverflowError(f"more than {cap} branches")
            return
        for br in measure_pauli_string(st, plan[idx]):
            walk(br.state, idx + 1, prob * br.probability, outcomes + (br.outcome,))

    walk(state, 0, 1.0, ())
    return leaves


def sample_branch(branches: list[Branch], rng) -> Branch:
    """Born-rule choice among sibling branches (probabilities renormalized)."""
    if not branches:
        raise ConfigError("no branches to sample")
    total = sum(b.probability for b in branches)
    u = rng.random() * total
    acc = 0.0
    for b in branches:
        acc += b.probability
        if u <= acc:
            return b
    return branches[-1]
