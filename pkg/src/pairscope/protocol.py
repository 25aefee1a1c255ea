"""The entanglement-assisted measurement pipeline, stage by stage.

A detected photon in temporal mode m and spatial mode q, superposed across
sites A and B, is processed as:

  inject   -> 2K-entry photonic superposition with site phases exp(-+ i beta x)
  encode   -> CNOTs write the binary digits of m into the memory register of
              the excited spatial mode at each site
  measure  -> photonic qubits read out in the single-rail X basis; the product
              of the two site results for pair (m, q) is the sign f in front
              of the site-A memory component
  decode   -> one pre-shared phi+ pair per memory-qubit pair; a CZ on each
              side flips phi+ to phi- exactly when that memory pair holds the
              excitation, so the X-parity flip pattern reveals (m, q) and
              collapses the spatial superposition with probability eta_q^2
  zeta     -> X parities across the N_m flipped memory-qubit pairs; an even
              count of odd parities means the symmetric combination, and the
              reported sign is flipped when f = -1

Each run consumes exactly mbar*K Bell pairs.  Sampling follows this literal
stage order; exact enumeration interleaves the per-pair decode operations
(they commute, acting on disjoint qubits), which keeps the branch tree
polynomial in K and mbar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    ConfigError,
    DecodeIntegrityError,
    EnumerationOverflowError,
    StagePreconditionError,
    StaleAncillaError,
)
from .fisher import OutcomeDistribution, outcome_index
from .modes import ApertureConfig, ModeBasis, OverlapTable, Scene, overlaps
from .statevec import (
    Branch,
    RegisterLayout,
    SparseState,
    enumerate_branches,
    measure_pauli_string,
    sample_branch,
    sample_pauli_measurement,
    time_bit,
)

MEASURE_PARITY = "parity"
MEASURE_INDIVIDUAL = "individual"

_STAGES = (
    "inject",
    "encode",
    "measure_photons",
    "prepare_bell_ancillas",
    "decode_cz",
    "read_flip_pattern",
    "zeta_measure",
)


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one protocol run needs; immutable after construction.

    ``epsilon`` is the mean photon number per temporal mode (weak source);
    runs are conditioned on one detected photon unless sampled through
    ``sample_block``.  Binary time encoding is least-significant-bit first
    (bit k=1 of m drives memory qubit k).
    """

    aperture: ApertureConfig
    basis: ModeBasis
    scene: Scene
    M: int = 1
    epsilon: float = 0.01
    measure_mode: str = MEASURE_PARITY
    _table: OverlapTable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"temporal mode count must be >= 1, got {self.M}")
        if not (0.0 < self.epsilon <= 0.1):
            raise ConfigError(f"epsilon must be in (0, 0.1], got {self.epsilon}")
        if self.measure_mode not in (MEASURE_PARITY, MEASURE_INDIVIDUAL):
            raise ConfigError(f"unknown measure mode {self.measure_mode!r}")
        object.__setattr__(self, "_table", overlaps(self.basis, self.scene))

    @property
    def K(self) -> int:
        return self.basis.K

    @property
    def layout(self) -> RegisterLayout:
        return RegisterLayout(M=self.M, K=self.K)

    @property
    def table(self) -> OverlapTable:
        return self._table


@dataclass(frozen=True)
class XResultTable:
    """Per-(m, q) photonic X results at sites A and B.

    In parity mode only the product of a pair's signs is physical; the
    per-site entries are stored in a fixed gauge (site-A sign +1).
    """

    outcomes: dict[tuple[int, int], tuple[int, int]]
    individual: bool = True


def f_sign(table: XResultTable, m: int, q: int) -> int:
    """+1 for equal site results at pair (m, q), -1 for opposite."""
    if (m, q) not in table.outcomes:
        raise ConfigError(f"no X results recorded for pair (m={m}, q={q})")
    a, b = table.outcomes[(m, q)]
    return a * b


@dataclass(frozen=True)
class PhotonRecord:
    """Decoded (m, q), corrected sign, flip count, and the photonic parity f."""

    m: int
    q: int
    sign: int
    N_m: int
    f: int

    def __post_init__(self):
        if self.m < 1 or self.q < 0:
            raise ConfigError(f"bad record indices m={self.m}, q={self.q}")
        if self.sign not in (1, -1) or self.f not in (1, -1):
            raise ConfigError(f"signs must be +/-1, got sign={self.sign}, f={self.f}")
        if self.N_m != self.m.bit_count():
            raise ConfigError(f"N_m={self.N_m} != popcount({self.m})")


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def inject_photon(layout: RegisterLayout, config: ProtocolConfig, s: int, m: int) -> SparseState:
    """Photon from source s in temporal mode m, superposed over sites and modes."""
    if not (0 <= s < config.scene.n_sources):
        raise ConfigError(f"source index {s} outside scene of {config.scene.n_sources}")
    if not (1 <= m <= layout.M):
        raise ConfigError(f"temporal mode {m} outside 1..{layout.M}")
    x_s = config.scene.sources[s][0]
    eta = config.table.eta[s]
    phase = config.aperture.beta * x_s
    amp_a = complex(math.cos(phase), -math.sin(phase)) / math.sqrt(2.0)
    amp_b = complex(math.cos(phase), math.sin(phase)) / math.sqrt(2.0)
    amps: dict[int, complex] = {}
    for q in range(layout.K):
        amps[1 << layout.photonic("A", m, q)] = amp_a * eta[q]
        amps[1 << layout.photonic("B", m, q)] = amp_b * eta[q]
    return SparseState(layout.n_qubits, amps)


def encode(state: SparseState, layout: RegisterLayout) -> SparseState:
    """Write the binary time-bin digits into the memory registers at both sites."""
    mem_mask = layout.memory_mask()
    if any(k & mem_mask for k in state.amps):
        raise StagePreconditionError("memory register not in vacuum before encode")
    for site in ("A", "B"):
        for i in range(layout.K):
            for j in range(1, layout.M + 1):
                for k in range(1, layout.mbar + 1):
                    if time_bit(j, k):
                        state = state.cnot(layout.photonic(site, j, i), layout.memory(site, k, i))
    return state


def _retire_x_eigenstate(state: SparseState, q: int, outcome: int) -> SparseState:
    """Return a measured-out qubit sitting in |+> or |-> to |0>.

    The qubit is a common product factor after its X measurement, so H plus a
    classically-controlled X is an exact uncompute, keeping the map sparse.
    """
    state = state.h(q)
    if outcome == -1:
        state = state.x(q)
    if any(k & (1 << q) for k in state.amps):
        raise DecodeIntegrityError(f"qubit {q} was not a clean |+/-> factor after measurement")
    return state


def _retire_bell_pair(state: SparseState, c: int, d: int, outcome: int) -> SparseState:
    """Return a parity-measured phi+ / phi- ancilla pair to |00>."""
    state = state.cnot(c, d).h(c)
    if outcome == -1:
        state = state.x(c)
    if any(k & ((1 << c) | (1 << d)) for k in state.amps):
        raise DecodeIntegrityError(f"pair ({c}, {d}) was not a clean Bell factor after measurement")
    return state


def measure_photons(
    state: SparseState,
    layout: RegisterLayout,
    m: int,
    rng,
    mode: str = MEASURE_PARITY,
) -> tuple[XResultTable, SparseState]:
    """X-basis readout of the 2K support photonic qubits of temporal mode m.

    Photonic qubits of other temporal modes are in a product |0> state; their
    X outcomes are independent fair coins carrying no signal, so they are
    treated as trivially measured and skipped.  In individual mode the
    measured qubits are retired to |0>, leaving the 2K-entry memory state
    with the parity sign f in front of each site-A component; in parity mode
    the pair retains its post-measurement two-entry factor (it is still
    correlated with the undetermined spatial mode).
    """
    outcomes: dict[tuple[int, int], tuple[int, int]] = {}
    if mode == MEASURE_INDIVIDUAL:
        for q in range(layout.K):
            signs = []
            for site in ("A", "B"):
                qubit = layout.photonic(site, m, q)
                br = sample_pauli_measurement(state, [(qubit, "X")], rng)
                signs.append(br.outcome)
                state = _retire_x_eigenstate(br.state, qubit, br.outcome)
            outcomes[(m, q)] = (signs[0], signs[1])
    elif mode == MEASURE_PARITY:
        for q in range(layout.K):
            string = [(layout.photonic("A", m, q), "X"), (layout.photonic("B", m, q), "X")]
            br = sample_pauli_measurement(state, string, rng)
            state = br.state
            outcomes[(m, q)] = (1, br.outcome)
    else:
        raise ConfigError(f"unknown measure mode {mode!r}")
    return XResultTable(outcomes=outcomes, individual=(mode == MEASURE_INDIVIDUAL)), state


def prepare_bell_ancillas(state: SparseState, layout: RegisterLayout) -> SparseState:
    """Put every (C, D) ancilla pair into phi+ = (|00> + |11>)/sqrt(2)."""
    anc_mask = layout.ancilla_mask()
    if any(k & anc_mask for k in state.amps):
        raise StagePreconditionError("ancilla register not in vacuum before Bell preparation")
    for k in range(1, layout.mbar + 1):
        for i in range(layout.K):
            c = layout.ancilla("C", k, i)
            state = state.h(c).cnot(c, layout.ancilla("D", k, i))
    return state


def decode_cz(state: SparseState, layout: RegisterLayout) -> SparseState:
    """CZ each memory qubit against its local half of the matching Bell pair."""
    for k in range(1, layout.mbar + 1):
        for i in range(layout.K):
            state = state.cz(layout.memory("A", k, i), layout.ancilla("C", k, i))
            state = state.cz(layout.memory("B", k, i), layout.ancilla("D", k, i))
    return state


def _decode_flip_set(flips: list[tuple[int, int]], layout: RegisterLayout) -> tuple[int, int, int]:
    """(m, q, N_m) from the flipped (k, i) set; raises on inconsistency."""
    if not flips:
        raise DecodeIntegrityError("photon heralded but no Bell pair flipped")
    modes = {i for _, i in flips}
    if len(modes) > 1:
        raise DecodeIntegrityError(f"flips span spatial modes {sorted(modes)}")
    q = modes.pop()
    m = 0
    for k, _ in flips:
        m |= 1 << (k - 1)
    if not (1 <= m <= layout.M):
        raise DecodeIntegrityError(f"decoded temporal mode {m} outside 1..{layout.M}")
    return m, q, len(flips)


def read_flip_pattern(state: SparseState, layout: RegisterLayout, rng) -> tuple[int, int, int, SparseState]:
    """X-parity of every Bell pair; odd parity marks a flip.

    The flip set determines q (the one spatial mode with flips, collapsing the
    superposition with probability eta_q^2) and m (binary decode of the
    flipped k's, least-significant bit first).
    """
    flips: list[tuple[int, int]] = []
    for k in range(1, layout.mbar + 1):
        for i in range(layout.K):
            c = layout.ancilla("C", k, i)
            d = layout.ancilla("D", k, i)
            br = sample_pauli_measurement(state, [(c, "X"), (d, "X")], rng)
            state = _retire_bell_pair(br.state, c, d, br.outcome)
            if br.outcome == -1:
                flips.append((k, i))
    m, q, n_m = _decode_flip_set(flips, layout)
    return m, q, n_m, state


def _check_zeta_support(state: SparseState, layout: RegisterLayout, m: int, q: int) -> None:
    expected_a = 0
    expected_b = 0
    for k in range(1, layout.mbar + 1):
        if time_bit(m, k):
            expected_a |= 1 << layout.memory("A", k, q)
            expected_b |= 1 << layout.memory("B", k, q)
    mem_mask = layout.memory_mask()
    for key in state.amps:
        mem = key & mem_mask
        if mem not in (expected_a, expected_b):
            raise StagePreconditionError(
                f"memory support not collapsed to pair (m={m}, q={q})"
            )


def zeta_measure(
    state: SparseState, layout: RegisterLayout, m: int, q: int, f: int, rng
) -> tuple[int, SparseState]:
    """Symmetric/antisymmetric readout of the erstwhile photon.

    Measures the N_m X parities across the flipped memory-qubit pairs; an even
    number of odd parities reports +, odd reports -, and the result is flipped
    when f = -1.
    """
    if f not in (1, -1):
        raise ConfigError(f"f must be +/-1, got {f}")
    _check_zeta_support(state, layout, m, q)
    odd = 0
    for k in range(1, layout.mbar + 1):
        if not time_bit(m, k):
            continue
        string = [(layout.memory("A", k, q), "X"), (layout.memory("B", k, q), "X")]
        br = sample_pauli_measurement(state, string, rng)
        state = br.state
        if br.outcome == -1:
            odd += 1
    zeta = 1 if odd % 2 == 0 else -1
    return zeta * f, state


# --------------------------------------------------------------------------
# full runs
# --------------------------------------------------------------------------


def run_protocol_once(config: ProtocolConfig, rng, trace: dict | None = None) -> PhotonRecord:
    """One conditional-on-detection run: sample source and arrival time, then
    execute the full stage sequence by Born-rule sampling.

    If ``trace`` is supplied it is filled with the sampled source, the
    injected m, per-stage state entry counts, and the ebit ledger.
    """
    layout = config.layout
    u = rng.random()
    s = 0
    acc = 0.0
    for idx, (_, b) in enumerate(config.scene.sources):
        acc += b
        if u < acc:
            s = idx
            break
    else:
        s = config.scene.n_sources - 1
    m = int(rng.integers(1, layout.M + 1))

    entries: dict[str, int] = {}
    state = inject_photon(layout, config, s, m)
    entries["inject"] = state.num_entries
    state = encode(state, layout)
    entries["encode"] = state.num_entries
    table, state = measure_photons(state, layout, m, rng, mode=config.measure_mode)
    entries["measure_photons"] = state.num_entries
    state = prepare_bell_ancillas(state, layout)
    entries["prepare_bell_ancillas"] = state.num_entries

    # Sparsity contract: Bell preparation is the only superposition source
    # after photon readout (mbar*K Hadamards), on top of at most 2K photonic
    # entries times the residual parity-pair factor.
    residual = 2 ** layout.K if config.measure_mode == MEASURE_PARITY else 1
    bound = 2 * layout.K * residual * 2 ** (layout.mbar * layout.K)
    if state.num_entries > bound:
        raise DecodeIntegrityError(
            f"state grew to {state.num_entries} entries, above the {bound} sparsity bound"
        )

    state = decode_cz(state, layout)
    entries["decode_cz"] = state.num_entries
    m_dec, q_dec, n_m, state = read_flip_pattern(state, layout, rng)
    entries["read_flip_pattern"] = state.num_entries
    if m_dec != m:
        raise DecodeIntegrityError(f"decoded temporal mode {m_dec} != injected {m}")
    f = f_sign(table, m_dec, q_dec)
    sign, state = zeta_measure(state, layout, m_dec, q_dec, f, rng)
    entries["zeta_measure"] = state.num_entries

    if trace is not None:
        trace["s"] = s
        trace["m_injected"] = m
        trace["stage_entries"] = entries
        trace["ebits_consumed"] = layout.mbar * layout.K
    return PhotonRecord(m=m_dec, q=q_dec, sign=sign, N_m=n_m, f=f)


def sample_block(config: ProtocolConfig, rng) -> PhotonRecord | None:
    """Unconditional mode: a whole M-bin block, vacuum with probability 1 - M*eps."""
    p_click = config.M * config.epsilon
    if p_click > 0.5:
        raise ConfigError(f"M*epsilon = {p_click} > 0.5; weak-source model invalid")
    if rng.random() >= p_click:
        return None
    return run_protocol_once(config, rng)


@dataclass(frozen=True)
class ProtocolBranch:
    """One leaf of the exact enumeration, with its uncorrected bookkeeping."""

    probability: float
    q: int
    sign: int
    m: int
    N_m: int
    f: int


def enumerate_protocol_branches(
    config: ProtocolConfig,
    s: int,
    m: int,
    branch_cap: int = 2**20,
    _f_mutator=None,
) -> list[ProtocolBranch]:
    """Exact exhaustive branch enumeration of the full pipeline.

    The photon readout uses pairwise X parities (the decision rules consume
    only parities), and each Bell pair is prepared, coupled, and read in turn;
    both choices commute with the literal stage order and keep the tree small.
    ``_f_mutator`` is a fault-injection hook for the validation canary.
    """
    layout = config.layout
    state = encode(inject_photon(layout, config, s, m), layout)

    photon_plan = [
        [(layout.photonic("A", m, q), "X"), (layout.photonic("B", m, q), "X")]
        for q in range(layout.K)
    ]
    pair_list = [(k, i) for k in range(1, layout.mbar + 1) for i in range(layout.K)]
    leaves: list[ProtocolBranch] = []
    visited = [0]

    def spend():
        visited[0] += 1
        if visited[0] > branch_cap:
            raise EnumerationOverflowError(f"protocol enumeration exceeded {branch_cap} branches")

    def decode_walk(st: SparseState, idx: int, prob: float, flips: list[tuple[int, int]], f_by_q):
        if idx == len(pair_list):
            m_dec, q_dec, n_m = _decode_flip_set(flips, layout)
            if m_dec != m:
                raise DecodeIntegrityError(f"decoded temporal mode {m_dec} != injected {m}")
            f = f_by_q[q_dec]
            if _f_mutator is not None:
                f = _f_mutator(f)
            zeta_plan = [
                [(layout.memory("A", k, q_dec), "X"), (layout.memory("B", k, q_dec), "X")]
                for k in range(1, layout.mbar + 1)
                if time_bit(m_dec, k)
            ]
            for zb in enumerate_branches(st, zeta_plan, cap=branch_cap):
                spend()
                odd = sum(1 for o in zb.outcome if o == -1)
                zeta = 1 if odd % 2 == 0 else -1
                leaves.append(
                    ProtocolBranch(
                        probability=prob * zb.probability,
                        q=q_dec,
                        sign=zeta * f,
                        m=m_dec,
                        N_m=n_m,
                        f=f,
                    )
                )
            return
        k, i = pair_list[idx]
        c = layout.ancilla("C", k, i)
        d = layout.ancilla("D", k, i)
        st = st.h(c).cnot(c, d)
        st = st.cz(layout.memory("A", k, i), c).cz(layout.memory("B", k, i), d)
        for br in measure_pauli_string(st, [(c, "X"), (d, "X")]):
            spend()
            decode_walk(
                _retire_bell_pair(br.state, c, d, br.outcome),
                idx + 1,
                prob * br.probability,
                flips + [(k, i)] if br.outcome == -1 else flips,
                f_by_q,
            )

    for pb in enumerate_branches(state, photon_plan, cap=branch_cap):
        spend()
        f_by_q = {q: pb.outcome[q] for q in range(layout.K)}
        decode_walk(pb.state, 0, pb.probability, [], f_by_q)
    return leaves


def enumerate_protocol(
    config: ProtocolConfig, s: int, m: int, branch_cap: int = 2**20, _f_mutator=None
) -> OutcomeDistribution:
    """Exact (q, sign) outcome law for a photon injected from source s at time m."""
    leaves = enumerate_protocol_branches(config, s, m, branch_cap=branch_cap, _f_mutator=_f_mutator)
    probs = [0.0] * (2 * config.K)
    for leaf in leaves:
        probs[outcome_index(leaf.q, leaf.sign)] += leaf.probability
    return OutcomeDistribution(K=config.K, probs=tuple(probs))


def enumerate_scene_distribution(
    config: ProtocolConfig, m: int, branch_cap: int = 2**20, _f_mutator=None
) -> OutcomeDistribution:
    """Brightness-weighted mixture of per-source enumerations."""
    probs = [0.0] * (2 * config.K)
    for s, (_, b) in enumerate(config.scene.sources):
        dist = enumerate_protocol(config, s, m, branch_cap=branch_cap, _f_mutator=_f_mutator)
        probs = [acc + b * p for acc, p in zip(probs, dist.probs)]
    return OutcomeDistribution(K=config.K, probs=tuple(probs))


# --------------------------------------------------------------------------
# logical-qubit interferometry gadgets
# --------------------------------------------------------------------------


def _check_one_excitation(state: SparseState, e: int, f_q: int) -> None:
    e_bit, f_bit = 1 << e, 1 << f_q
    for key in state.amps:
        if bool(key & e_bit) == bool(key & f_bit):
            raise StagePreconditionError(
                f"support outside the one-excitation subspace of qubits ({e}, {f_q})"
            )


def logical_beamsplitter(state: SparseState, e: int, f_q: int) -> SparseState:
    """50-50 beam-splitter action on the one-excitation subspace of (e, f):

        a |10> + b |01>  ->  (a+b)/sqrt(2) |10> + (a-b)/sqrt(2) |01>

    realized as CNOT(f->e), H(f), CNOT(f->e).
    """
    _check_one_excitation(state, e, f_q)
    return state.cnot(f_q, e).h(f_q).cnot(f_q, e)


def _check_fresh_phi_plus(state: SparseState, b1: int, b2: int) -> None:
    m1, m2 = 1 << b1, 1 << b2
    scale = max(abs(a) for a in state.amps.values())
    for key, amp in state.amps.items():
        has1, has2 = bool(key & m1), bool(key & m2)
        if has1 != has2:
            raise StaleAncillaError(f"pair ({b1}, {b2}) holds an odd-weight component")
        if not has1:
            partner = state.amps.get(key | m1 | m2)
            if partner is None or abs(partner - amp) > 1e-9 * scale:
                raise StaleAncillaError(f"pair ({b1}, {b2}) is not a fresh phi+ factor")


def teleported_cnot(
    state: SparseState,
    control: int,
    target: int,
    bell: tuple[int, int],
    outcomes: tuple[int, int] | None = None,
    rng=None,
) -> SparseState:
    """CNOT between distant qubits through a shared phi+ pair.

    The two mid-circuit measurement results steer Pauli corrections, so every
    branch ends in the same state; ``outcomes`` forces a branch (for
    exhaustive checks), ``rng`` samples one, and with neither the first
    branch is taken.  The consumed pair is returned to |00>.  Intended for a
    control and target held at different sites; the circuit itself is
    site-agnostic.
    """
    b1, b2 = bell
    if len({control, target, b1, b2}) != 4:
        raise ConfigError("control, target, and bell qubits must be distinct")
    _check_fresh_phi_plus(state, b1, b2)

    def pick(branches: list[Branch], want: int | None) -> Branch:
        if want is not None:
            for br in branches:
                if br.outcome == want:
                    return br
            raise ConfigError(f"requested outcome {want} has zero probability")
        if rng is not None:
            return sample_branch(branches, rng)
        return branches[0]

    state = state.cnot(control, b1)
    want1, want2 = outcomes if outcomes is not None else (None, None)
    br1 = pick(measure_pauli_string(state, [(b1, "Z")]), want1)
    state = br1.state
    if br1.outcome == -1:  # bit value 1
        state = state.x(b2).x(b1)
    state = state.cnot(b2, target)
    br2 = pick(measure_pauli_string(state, [(b2, "X")]), want2)
    state = br2.state
    if br2.outcome == -1:
        state = state.z(control)
    state = state.h(b2)
    if any(k & (1 << b2) for k in state.amps):
        state = state.x(b2)
    return state


def logical_phase(state: SparseState, qubit: int, phi: float) -> SparseState:
    """Phase shift on one logical mode: |1> component times exp(i phi)."""
    return state.phase(phi, qubit)
