"""treegemm: quantize tree ensembles, compile them to tensor form, and
evaluate them exactly or under a table-look-up noise model."""

from .analysis import BitWidthReport, analyze, pbs_cost_estimate
from .compiler import LookupTable, TensorBundle, build_comparison_tlu, build_equality_tlu, compile_ensemble
from .engine import NOISELESS, NoiseModel, PredictionResult, apply_tlu, evaluate, evaluate_batch, postprocess
from .errors import ConfigurationError, ContractViolationError, InvalidInputError, TreeGemmError
from .quantizer import QuantParams, QuantizedDataset, dequantize, quantize, quantize_leaves, quantize_rows, train_quantizer
from .trainer import FloatModel, TrainConfig, quantize_thresholds, train, train_float_reference
from .tree_ir import Tree, TreeEnsemble, TreeNode, traverse, validate

__version__ = "0.1.0"

__all__ = [
    "BitWidthReport", "analyze", "pbs_cost_estimate",
    "LookupTable", "TensorBundle", "build_comparison_tlu", "build_equality_tlu", "compile_ensemble",
    "NOISELESS", "NoiseModel", "PredictionResult", "apply_tlu", "evaluate", "evaluate_batch", "postprocess",
    "ConfigurationError", "ContractViolationError", "InvalidInputError", "TreeGemmError",
    "QuantParams", "QuantizedDataset", "dequantize", "quantize", "quantize_leaves", "quantize_rows", "train_quantizer",
    "FloatModel", "TrainConfig", "quantize_thresholds", "train", "train_float_reference",
    "Tree", "TreeEnsemble", "TreeNode", "traverse", "validate",
    "__version__",
]
