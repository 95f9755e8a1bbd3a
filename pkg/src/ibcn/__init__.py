"""Inexact block cubic Newton with greedy block selection, plus BCD baselines."""

from .baselines import ArmijoOptions, run_baseline
from .core import BlockIndex, InvalidBlockError, Problem
from .cubic_model import ModelData, model_value
from .data_io import Dataset, Trace, load_libsvm, parse_libsvm, read_trace, write_trace
from .problems import LogRegInstance, QuadraticInstance, SparseLsInstance, generate_sparse_ls
from .selection import SelectionRule, theta_bound
from .solver import SolverConfig, run
from .subsolver import SubsolverOptions, minimize_cubic

__all__ = [
    "ArmijoOptions", "BlockIndex", "Dataset", "InvalidBlockError", "LogRegInstance", "ModelData",
    "Problem", "QuadraticInstance", "SelectionRule", "SolverConfig", "SparseLsInstance",
    "SubsolverOptions", "Trace", "generate_sparse_ls", "load_libsvm", "minimize_cubic",
    "model_value", "parse_libsvm", "read_trace", "run", "run_baseline", "theta_bound", "write_trace",
]
