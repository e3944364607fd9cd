"""Export scikit-learn tree models into the treegemm model IR."""

from .export import ExportError, export_model, write_export
from .quant import fit_params, quantize, quantize_columns

__version__ = "0.1.0"

__all__ = ["ExportError", "export_model", "write_export",
           "fit_params", "quantize", "quantize_columns", "__version__"]
