"""Self-check suite behind the ``validate`` command.

Runs the enumerate-vs-analytic oracle matrix, the CZ/Bell flip identities,
the decode exhaustivity check, and the gadget contracts, reporting the worst
deviation per check.  ``fault="flip-f-sign"`` injects a sign bug into the
parity bookkeeping so the oracle matrix must fail (mutation canary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fisher, protocol
from .modes import ApertureConfig, QuadratureSpec, Scene, build_basis
from .seeds import substream
from .statevec import RegisterLayout, SparseState, measure_pauli_string

FAULTS = ("flip-f-sign",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_dev: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{tag}] {self.name}: max deviation {self.max_dev:.3e}{extra}"


def _fault_mutator(fault: str | None):
    if fault is None:
        return None
    if fault == "flip-f-sign":
        return lambda f: -f
    raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")


def _check_qfi_spots(delta: float) -> CheckResult:
    sigma = 2.0 * math.pi / delta
    worst = 0.0
    for r in (0.0, 0.5, 1.0, 2.0, 5.0):
        ap = ApertureConfig.from_ratio(delta, r)
        expected = (4.0 * math.pi**2 / (3.0 * sigma**2)) * (3.0 * r * r + 1.0)
        worst = max(worst, abs(fisher.qfi(ap) - expected))
    return CheckResult("qfi-closed-form", worst == 0.0, worst)


def _check_pairwise_probabilities(delta: float, quad: QuadratureSpec, mutator) -> CheckResult:
    sigma = 2.0 * math.pi / delta
    ap = ApertureConfig.from_ratio(delta, 2.0)
    basis = build_basis(ap, 1, quad=quad)
    worst = 0.0
    for beta_x, expected_plus in ((0.0, 1.0), (math.pi / 3.0, 0.25), (math.pi / 2.0, 0.0)):
        scene = Scene.single(beta_x / ap.beta)
        config = protocol.ProtocolConfig(aperture=ap, basis=basis, scene=scene, M=1)
        dist = protocol.enumerate_protocol(config, s=0, m=1, _f_mutator=mutator)
        worst = max(worst, abs(dist.prob(0, 1) - expected_plus))
    return CheckResult("pairwise-sign-probabilities", worst <= 1e-10, worst)


def _check_enumerate_matrix(delta: float, quad: QuadratureSpec, mutator) -> CheckResult:
    sigma = 2.0 * math.pi / delta
    rng = substream(20210, "validate-thetas")
    worst = 0.0
    for M in (1, 3):
        for K in (1, 2):
            basis = build_basis(ApertureConfig.from_ratio(delta, 0.0), K, quad=quad)
            for r in (0.5, 2.0):
                ap = ApertureConfig.from_ratio(delta, r)
                theta = float(rng.uniform(0.05, 0.5)) * sigma
                scene = Scene.two_point(theta)
                config = protocol.ProtocolConfig(aperture=ap, basis=basis, scene=scene, M=M)
                analytic = fisher.outcome_probs(ap, basis, scene)
                enum = protocol.enumerate_scene_distribution(config, m=M, _f_mutator=mutator)
                worst = max(worst, enum.max_abs_diff(analytic))
    return CheckResult("enumerate-vs-analytic", worst <= 1e-10, worst)


def _check_cz_identities(delta: float) -> CheckResult:
    layout = RegisterLayout(M=3, K=2)
    worst = 0.0
    for k in range(1, layout.mbar + 1):
        for i in range(layout.K):
            mem_a = layout.memory("A", k, i)
            mem_b = layout.memory("B", k, i)
            anc_c = layout.ancilla("C", k, i)
            anc_d = layout.ancilla("D", k, i)
            for mem_bits, flip in (((0, 1), True), ((1, 0), True), ((0, 0), False)):
                key = (mem_bits[0] << mem_a) | (mem_bits[1] << mem_b)
                state = SparseState.basis_state(layout.n_qubits, key)
                state = state.h(anc_c).cnot(anc_c, anc_d)
                state = state.cz(mem_a, anc_c).cz(mem_b, anc_d)
                sign = -1.0 if flip else 1.0
                expected = SparseState.from_amplitudes(
                    layout.n_qubits,
                    {
                        key: 1.0 / math.sqrt(2.0),
                        key | (1 << anc_c) | (1 << anc_d): sign / math.sqrt(2.0),
                    },
                )
                worst = max(worst, state.max_amplitude_diff(expected))
    return CheckResult("cz-bell-flip-identities", worst <= 1e-12, worst)


def _check_decode_exhaustive(delta: float, quad: QuadratureSpec) -> CheckResult:
    sigma = 2.0 * math.pi / delta
    ap = ApertureConfig.from_ratio(delta, 1.0)
    M, K = 3, 2
    layout = RegisterLayout(M=M, K=K)
    rng = substream(40812, "validate-decode")
    failures = 0
    total = 0
    for m in range(1, M + 1):
        for q in range(K):
            phase = 0.3
            state = SparseState.from_amplitudes(
                layout.n_qubits,
                {
                    1 << layout.photonic("A", m, q): complex(math.cos(phase), -math.sin(phase)) / math.sqrt(2),
                    1 << layout.photonic("B", m, q): complex(math.cos(phase), math.sin(phase)) / math.sqrt(2),
                },
            )
            state = protocol.encode(state, layout)
            table, state = protocol.measure_photons(state, layout, m, rng)
            state = protocol.prepare_bell_ancillas(state, layout)
            state = protocol.decode_cz(state, layout)
            m_dec, q_dec, n_m, state = protocol.read_flip_pattern(state, layout, rng)
            total += 1
            if (m_dec, q_dec, n_m) != (m, q, m.bit_count()):
                failures += 1
    return CheckResult("decode-exhaustive", failures == 0, float(failures), f"{total} injections")


def _check_beamsplitter(delta: float) -> CheckResult:
    rng = substream(77031, "validate-bs")
    worst = 0.0
    for _ in range(25):
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        a, b = a / norm, b / norm
        state = SparseState.from_amplitudes(2, {0b01: a, 0b10: b})  # qubit0=e, qubit1=f
        out = protocol.logical_beamsplitter(state, e=0, f_q=1)
        expected = SparseState.from_amplitudes(
            2, {0b01: (a + b) / math.sqrt(2), 0b10: (a - b) / math.sqrt(2)}, normalize=False
        )
        worst = max(worst, out.max_amplitude_diff(expected))
        twice = protocol.logical_beamsplitter(out, e=0, f_q=1)
        worst = max(worst, twice.max_amplitude_diff(state))
    return CheckResult("logical-beamsplitter", worst <= 1e-12, worst)


def _check_teleported_cnot(delta: float) -> CheckResult:
    rng = substream(90115, "validate-tcnot")
    worst = 0.0
    for _ in range(10):
        amps = rng.normal(size=4) + 1j * rng.normal(size=4)
        amps /= np.linalg.norm(amps)
        for o1 in (1, -1):
            for o2 in (1, -1):
                base = {
                    (c_bit | (t_bit << 1)): amps[c_bit + 2 * t_bit]
                    for c_bit in (0, 1)
                    for t_bit in (0, 1)
                }
                state = SparseState.from_amplitudes(4, dict(base))
                state = state.h(2).cnot(2, 3)
                out = protocol.teleported_cnot(state, control=0, target=1, bell=(2, 3), outcomes=(o1, o2))
                direct = SparseState.from_amplitudes(4, dict(base)).cnot(0, 1)
                worst = max(worst, out.max_amplitude_diff(direct))
    return CheckResult("teleported-cnot", worst <= 1e-12, worst)


def _check_f_invariance(delta: float, quad: QuadratureSpec) -> CheckResult:
    sigma = 2.0 * math.pi / delta
    ap = ApertureConfig.from_ratio(delta, 2.0)
    basis = build_basis(ap, 2, quad=quad)
    scene = Scene.two_point(0.17 * sigma)
    config = protocol.ProtocolConfig(aperture=ap, basis=basis, scene=scene, M=3)
    branches = protocol.enumerate_protocol_branches(config, s=0, m=3)
    dists = {}
    for f_val in (1, -1):
        sel = [br for br in branches if br.f == f_val]
        total = sum(br.probability for br in sel)
        probs = [0.0] * (2 * config.K)
        for br in sel:
            probs[fisher.outcome_index(br.q, br.sign)] += br.probability / total
        dists[f_val] = probs
    worst = max(abs(a - b) for a, b in zip(dists[1], dists[-1]))
    return CheckResult("f-correction-invariance", worst <= 1e-12, worst)


def run_checks(delta: float = 2.0 * math.pi, quad: QuadratureSpec | None = None, fault: str | None = None) -> list[CheckResult]:
    quad = quad if quad is not None else QuadratureSpec()
    mutator = _fault_mutator(fault)
    return [
        _check_qfi_spots(delta),
        _check_pairwise_probabilities(delta, quad, mutator),
        _check_enumerate_matrix(delta, quad, mutator),
        _check_cz_identities(delta),
        _check_decode_exhaustive(delta, quad),
        _check_beamsplitter(delta),
        _check_teleported_cnot(delta),
        _check_f_invariance(delta, quad),
    ]
