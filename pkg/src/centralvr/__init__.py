"""CentralVR, SVRG and SAGA with a virtual-clock distributed simulator."""
from .data import Dataset, generate_classification, generate_regression, partition, read_libsvm, write_libsvm
from .distributed import (
    ClusterConfig,
    run_async_saga,
    run_centralvr_async,
    run_centralvr_sync,
    run_dist_svrg,
    run_local_sgd_baseline,
)
from .optimizers import GradientTable, OptConfig, corrected_gradient, run_centralvr, run_saga, run_sgd, run_svrg
from .problems import LossKind, Problem, smoothness_constants, solve_reference
from .theory import theorem_rate_bound
from .trace import DivergenceError, TraceRecord, export_trace

__version__ = "0.1.0"
