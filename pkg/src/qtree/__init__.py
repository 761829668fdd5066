"""Dynamical quantum-tree circuits: sampling, decoding, and critical theory.

The package simulates binary-tree monitored circuits whose nodes are
CNOT-based entanglers dressed with Haar-random single-qubit gates followed
by tunable-strength weak measurements.  It provides exact Born samplers for
measurement records, the linear-time collapse decoder that reconstructs the
probe state from a record, the postselection-free order-parameter estimator,
pool-method Monte Carlo for the order-parameter curves, the linearized
recursion machinery that locates the purification transition, and gate-level
circuit export.
"""

__version__ = "0.1.0"

from .decoder import DecodeResult, InconsistentRecordError, decode_bloch, predict_sign
from .estimator import EstimatorResult, estimate_Z, run_protocol, x_statistic
from .model import (
    MeasurementRecord,
    ParseError,
    TreeInstance,
    build_instance,
    truncate,
)
from .pool import Pool, PoolCurves, pool_init, pool_run, pool_step
from .qmath import (
    KrausPair,
    NodeGates,
    bloch,
    eig2,
    entangling_unitary,
    haar_unitary,
    kraus_pair,
    rho_from_bloch,
    von_neumann_entropy,
)
from .sampler import (
    BranchSummary,
    CapacityError,
    record_probability,
    sample_record_branch,
    sample_record_statevector,
)
from .theory import (
    THETA_C,
    CriticalPointResult,
    LinearCoefficients,
    VelocityEstimate,
    find_critical_point,
    mean_A_power,
    node_linear_coefficients,
    scaling_fit,
    velocity,
)

__all__ = [
    "__version__",
    "BranchSummary",
    "CapacityError",
    "CriticalPointResult",
    "DecodeResult",
    "EstimatorResult",
    "InconsistentRecordError",
    "KrausPair",
    "LinearCoefficients",
    "MeasurementRecord",
    "NodeGates",
    "ParseError",
    "Pool",
    "PoolCurves",
    "THETA_C",
    "TreeInstance",
    "VelocityEstimate",
    "bloch",
    "build_instance",
    "decode_bloch",
    "eig2",
    "entangling_unitary",
    "estimate_Z",
    "find_critical_point",
    "haar_unitary",
    "kraus_pair",
    "mean_A_power",
    "node_linear_coefficients",
    "pool_init",
    "pool_run",
    "pool_step",
    "predict_sign",
    "record_probability",
    "rho_from_bloch",
    "run_protocol",
    "sample_record_branch",
    "sample_record_statevector",
    "scaling_fit",
    "truncate",
    "velocity",
    "von_neumann_entropy",
    "x_statistic",
]
