"""Numerical toolkit for one-shot distributed quantum source coding.

Modules
-------
qstate       register-aware states, partial traces, purification, fidelity
divergences  relative entropies, hypothesis testing and information spectrum
convexsplit  tripartite convex-split states and their certified closeness
decoder      position-based decoding with a coherent square-root measurement
protocol     the two-sender / two-receiver redistribution protocol simulator
surgery      typical projections and eigenvalue cuts on i.i.d. states
regions      achievable and converse rate regions
facts        randomized checks of the standard inequalities
instances    seeded instance generators
stateio      JSON state files and report serialization
cli          the ``oneshot-qsw`` command
"""

from .errors import (
    CapacityError,
    ContractViolation,
    DomainError,
    NameClash,
    NumericalError,
    QSWError,
    ShapeError,
    SupportError,
)
from .qstate import (
    DensityOperator,
    Ket,
    LinearMapOnRegisters,
    RegisterSystem,
    TestOperator,
    apply_on,
    fidelity_pd,
    ghz,
    partial_trace,
    pos_neg_parts,
    purified_distance,
    purify,
    random_state,
    tensor,
    uhlmann_isometry,
)

from .divergences import (
    DivergenceResult,
    dmax,
    dmax_pure_to_product,
    dmax_to_product,
    hypothesis_testing_divergence,
    info_spectrum,
    mutual_information,
    optimal_test,
    relative_entropy,
    second_order_estimate,
    smooth_dmax_bracket,
    von_neumann_entropy,
)
from .convexsplit import ConvexSplitInstance, build_convex_split_state, certified_bound, verify_lemma
from .decoder import verify_decoding, confusion_matrix, position_tests
from .protocol import ProtocolInstance, plan_rates, run_task1, run_task2, verify_end_to_end
from .surgery import smoothed_state_pipeline, typical_projector, verify_surgery
from .regions import RateRegion, converse_region, export_region, iid_region, oneshot_region
from .stateio import load_state, save_state

__version__ = "0.1.0"
