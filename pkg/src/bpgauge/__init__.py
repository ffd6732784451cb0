"""Belief-propagation gauging of tensor network states."""

from .bp import (
    SEQUENTIAL,
    SYNCHRONOUS,
    BpConfig,
    GaugeReport,
    MessageSet,
    SqrtMessageSet,
    bp_iterate,
    bp_run,
    bp_update_edge,
    default_edge_order,
    init_messages,
    sqrt_bp_iterate,
    sqrt_bp_run,
    sqrt_bp_update_edge,
)
from .errors import (
    BPGaugeError,
    ConfigError,
    DegenerateInput,
    DegenerateMessage,
    DegenerateState,
    DimensionMismatch,
    InvalidSpec,
    NotHermitian,
    NotPositive,
    NumericalError,
    TooLarge,
)
from .evolution import (
    EvolutionConfig,
    Gate,
    SiteFactor,
    Trajectory,
    apply_gate_bp,
    apply_gate_naive_simple_update,
    apply_gate_simple_update,
    evolve,
    random_two_site_unitary,
    random_unitary_layers,
    trotter_ising_layer,
)
from .gauging import (
    NO_TRUNCATION,
    TruncationPolicy,
    bp_gauge,
    eager_gauge,
    gauge_from_messages,
    lambda_messages,
    lambda_spectra_distance,
    simple_update_gauge,
    vidal_distance,
)
from .models import (
    LatticeSpec,
    brute_force_partition,
    build_graph,
    ising_sqrt_partition_state,
    neel_state,
    parse_lattice,
    product_state,
    random_tns,
)
from .network import (
    Graph,
    TensorNetworkState,
    VidalState,
    dense_state,
    exact_contract,
    exact_norm,
    vidal_to_plain,
    vidal_to_symmetric,
)
from .observables import LocalOperator, SZ, exact_expectation, rank_one_expectation, rank_one_two_site_energy
from .tensor import Index, LabeledTensor, contract

__version__ = "0.1.0"
