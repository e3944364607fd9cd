"""Execute compiled bundles under an exact or noise-simulating backend.

Leveled steps (dot products with clear constants) are always exact; noise is
injected only where a table look-up happens, following

    TLU[x] = T[x]      with probability 1 - p_error
             T[x + k]  with probability p_error, k from the displacement law

Every draw is keyed by (seed, row, step, node) through a counter-based
generator, so results are bit-identical across batch orders, chunk sizes,
worker counts, and kernel backends.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._rng import key_hash, uniforms
from .compiler import LookupTable, TensorBundle
from .errors import ConfigurationError, ContractViolationError, InvalidInputError
from .quantizer import QuantParams

DEFAULT_DISPLACEMENT = ((-1, 0.5), (1, 0.5))


@dataclass(frozen=True)
class NoiseModel:
    """Per-TLU failure probability plus the off-slice displacement law.

    The law is a tuple of (k, probability) pairs conditional on failure;
    the default says a failing look-up reads an adjacent slice either side
    with equal chance. Displaced indices clamp at the table boundaries.
    """

    p_error: float
    seed: int = 0
    displacement_law: tuple = DEFAULT_DISPLACEMENT
    _k_values: np.ndarray = field(init=False, repr=False, compare=False)
    _k_cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.p_error <= 1.0):
            raise ConfigurationError(f"p_error must be in [0, 1], got {self.p_error}")
        law = tuple(self.displacement_law)
        if not law:
            raise ConfigurationError("displacement law must have at least one (k, prob) pair")
        ks = np.array([int(k) for k, _ in law], dtype=np.int64)
        ps = np.array([float(pr) for _, pr in law], dtype=np.float64)
        if (ks == 0).any():
            raise ConfigurationError("displacement k = 0 is not a failure; use k != 0")
        if (ps < 0).any() or abs(ps.sum() - 1.0) > 1e-9:
            raise ConfigurationError("displacement probabilities must be >= 0 and sum to 1")
        cum = np.cumsum(ps)
        cum[-1] = 1.0
        object.__setattr__(self, "_k_values", ks)
        object.__setattr__(self, "_k_cum", cum)


NOISELESS = NoiseModel(p_error=0.0)


@dataclass
class PredictionResult:
    """Outcome of one row: per-tree sums, clear aggregate, client-side scores."""

    per_tree_sums: np.ndarray          # (n_trees, n_classes) int64
    aggregate: np.ndarray              # (n_classes,) int64, clear-domain sum
    dequantized_scores: np.ndarray     # (n_classes,) float64
    predicted_class: int | None        # classification only
    predicted_value: float | None      # regression only
    selected_leaves: np.ndarray        # (n_trees,) leaf slot per tree, -1 if none
    leaf_hits: np.ndarray              # (n_trees,) how many S entries fired
    tlu_failures: int                  # failure-branch draws that fired
    trace: dict | None = None          # optional P, Q, R, S tensors


def apply_tlu(table: LookupTable, x: int, noise: NoiseModel, counter: tuple) -> int:
    """One table look-up under the noise model.

    `counter` is the (row, step, node) key for the RNG; out-of-domain inputs
    are a contract violation (bit-width analysis makes them unreachable).
    """
    idx = int(x) + table.input_offset
    if not (0 <= idx < len(table.entries)):
        raise ContractViolationError(
            f"TLU input {x} outside the encoded domain [{-table.input_offset}, "
            f"{len(table.entries) - 1 - table.input_offset}]"
        )
    if noise.p_error > 0.0:
        row, step, node = counter
        u = float(uniforms(key_hash(noise.seed, np.uint64(row), step, np.uint64(node))))
        if u < noise.p_error:
            j = int(np.minimum(np.searchsorted(noise._k_cum, u / noise.p_error, side="right"),
                               len(noise._k_cum) - 1))
            idx = min(max(idx + int(noise._k_values[j]), 0), len(table.entries) - 1)
    return int(table.entries[idx])


def _kernel_args(bundle: TensorBundle, X_q: np.ndarray, row_ids: np.ndarray, noise: NoiseModel):
    return (
        X_q, row_ids,
        bundle.feat_idx, bundle.slot_real, bundle.cmp_tables,
        bundle.C, bundle.leaf_tlu, bundle.eq_tables,
        bundle.leaf_values, bundle.root_leaf,
        bundle.offset, noise.p_error,
        noise._k_values, noise._k_cum, noise.seed,
    )


def _check_inputs(bundle: TensorBundle, X_q) -> np.ndarray:
    X_q = np.ascontiguousarray(np.asarray(X_q, dtype=np.int64))
    if X_q.ndim == 1:
        X_q = X_q.reshape(1, -1)
    if X_q.shape[1] != bundle.n_features:
        raise InvalidInputError(f"expected {bundle.n_features} features, got {X_q.shape[1]}")
    qmax = (1 << bundle.input_bits) - 1
    if X_q.size and (X_q.min() < 0 or X_q.max() > qmax):
        raise InvalidInputError(f"quantized inputs must lie in [0, {qmax}]")
    return X_q


def run_raw(bundle: TensorBundle, X_q, noise: NoiseModel | None = None,
            row_ids=None, workers: int = 1, backend: str | None = None,
            collect_trace: bool = False, check_bounds: bool = False):
    """Array-level batch execution: the engine core without result objects.

    Returns (tree_sums, s_sums, s_first, fails, trace), each row-major.
    check_bounds re-runs the leveled steps with tracing and asserts every
    intermediate value fits its provisioned encoded domain (P in p bits,
    path codes in the signed p+1-bit domain).
    """
    noise = noise or NOISELESS
    if check_bounds and not collect_trace:
        out = run_raw(bundle, X_q, noise, row_ids=row_ids, backend=backend,
                      collect_trace=True)
        _assert_bounds(bundle, out[4])
        return out[:4] + (None,)
    X_q = _check_inputs(bundle, X_q)
    n = X_q.shape[0]
    if row_ids is None:
        row_ids = np.arange(n, dtype=np.uint64)
    else:
        row_ids = np.asarray(row_ids, dtype=np.uint64)
        if row_ids.shape != (n,):
            raise InvalidInputError("row_ids must have one entry per row")

    if workers > 1 and n > 1 and not collect_trace:
        chunks = np.array_split(np.arange(n), min(workers, n))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda ix: kernels.run_bundle(
                    _kernel_args(bundle, X_q[ix], row_ids[ix], noise), name=backend),
                chunks,
            ))
        tree_sums = np.concatenate([p[0] for p in parts])
        s_sums = np.concatenate([p[1] for p in parts])
        s_first = np.concatenate([p[2] for p in parts])
        fails = np.concatenate([p[3] for p in parts])
        return tree_sums, s_sums, s_first, fails, None

    return kernels.run_bundle(_kernel_args(bundle, X_q, row_ids, noise),
                              name=backend, collect_trace=collect_trace)


def _assert_bounds(bundle: TensorBundle, trace) -> None:
    """Leveled values must stay inside their provisioned encoded domains."""
    P, _, R, _ = trace
    qmax = (1 << bundle.input_bits) - 1
    if bundle.slot_real.any():
        real_P = P[:, bundle.slot_real]
        if real_P.size and (real_P.min() < 0 or real_P.max() > qmax):
            raise ContractViolationError(
                f"selected feature value outside [0, {qmax}]")
        real_R = R[:, bundle.leaf_tlu]
        if real_R.size and (real_R.min() < -bundle.offset or real_R.max() > bundle.offset - 1):
            raise ContractViolationError(
                f"path code outside the signed {bundle.input_bits + 1}-bit domain")


def postprocess(aggregate, leaf_quant: QuantParams, task: str, trees_per_class):
    """Client-side dequantization and decision.

    Summing the quantized leaf of each of the N_c trees feeding class c adds
    N_c * zero_point, which is subtracted here before scaling.

    Returns (scores, predicted_class, predicted_value).
    """
    aggregate = np.asarray(aggregate, dtype=np.int64)
    counts = np.asarray(trees_per_class, dtype=np.int64)
    scores = (aggregate - counts * leaf_quant.zero_point) * leaf_quant.scale
    if task == "classification":
        return scores, int(np.argmax(scores)), None
    return scores, None, float(scores[0])


def _make_results(bundle: TensorBundle, tree_sums, s_sums, s_first, fails, traces) -> list[PredictionResult]:
    n = tree_sums.shape[0]
    N = bundle.n_trees
    C = max(bundle.n_classes, 1)
    cols = bundle.tree_classes
    counts = bundle.trees_per_class
    out = []
    for i in range(n):
        per_tree = np.zeros((N, C), dtype=np.int64)
        per_tree[np.arange(N), cols] = tree_sums[i]
        aggregate = per_tree.sum(axis=0)
        scores, cls, val = postprocess(aggregate, bundle.leaf_quant, bundle.task, counts)
        trace = None
        if traces is not None:
            P, Q, R, S = traces
            trace = {"P": P[i], "Q": Q[i], "R": R[i], "S": S[i]}
        out.append(PredictionResult(
            per_tree_sums=per_tree, aggregate=aggregate, dequantized_scores=scores,
            predicted_class=cls, predicted_value=val,
            selected_leaves=s_first[i], leaf_hits=s_sums[i],
            tlu_failures=int(fails[i]), trace=trace,
        ))
    return out


def evaluate_batch(bundle: TensorBundle, X_q, noise: NoiseModel | None = None,
                   row_ids=None, workers: int = 1, backend: str | None = None,
                   trace: bool = False) -> list[PredictionResult]:
    """Row-wise evaluation of a batch; results are ordered as the inputs.

    Noise draws are independent per TLU application and keyed by row id, so
    a row's result does not depend on its batch position or on `workers`.
    """
    res = run_raw(bundle, X_q, noise, row_ids=row_ids, workers=workers,
                  backend=backend, collect_trace=trace)
    return _make_results(bundle, *res)


def evaluate(bundle: TensorBundle, x_q, noise: NoiseModel | None = None,
             row_id: int = 0, backend: str | None = None,
             trace: bool = False) -> PredictionResult:
    """Evaluate a single quantized row (see evaluate_batch)."""
    x_q = np.asarray(x_q, dtype=np.int64).reshape(1, -1)
    return evaluate_batch(bundle, x_q, noise, row_ids=np.array([row_id], dtype=np.uint64),
                          backend=backend, trace=trace)[0]
