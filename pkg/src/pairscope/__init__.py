"""Entanglement-assisted two-telescope interferometry toolkit."""

from .errors import (
    BasisDegenerateError,
    ConfigError,
    DecodeIntegrityError,
    DerivativeFailureError,
    EnumerationOverflowError,
    EstimationImpossibleError,
    LayoutError,
    PairscopeError,
    ProjectionDegenerateError,
    StagePreconditionError,
    StaleAncillaError,
)
from .estimate import CountTable, EstimationReport, crb_experiment, log_likelihood, mle, sample_photons
from .fisher import FisherResult, OutcomeDistribution, cfi, outcome_probs, qfi, ratio_chart
from .modes import (
    GAUSSIAN_HG,
    PSF_ADAPTED,
    ApertureConfig,
    ModeBasis,
    OverlapTable,
    QuadratureSpec,
    Scene,
    build_basis,
    overlaps,
    psf_eval,
)
from .protocol import (
    PhotonRecord,
    ProtocolConfig,
    XResultTable,
    decode_cz,
    encode,
    enumerate_protocol,
    f_sign,
    inject_photon,
    logical_beamsplitter,
    logical_phase,
    measure_photons,
    prepare_bell_ancillas,
    read_flip_pattern,
    run_protocol_once,
    teleported_cnot,
    zeta_measure,
)
from .statevec import (
    Branch,
    RegisterLayout,
    SparseState,
    apply_gate,
    enumerate_branches,
    init_basis_state,
    measure_pauli_string,
    measure_qubit_x,
)

__version__ = "0.1.0"
