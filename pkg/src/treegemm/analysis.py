"""Static bit-width analysis of a compiled bundle.

Interval arithmetic over the dataflow: every leveled segment that ends in a
TLU gets a value interval and the provisioned width of that TLU's encoded
input domain. The signed path-code step always provisions input_bits + 1
because the equality TLU consumes the offset-encoded signed domain; the
cross-tree aggregation runs in the clear and is excluded from the encrypted
maximum. The report is what an external crypto-parameter optimizer would
consume, including the per-segment L2 norms of the clear constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .compiler import TensorBundle
from .errors import ConfigurationError


@dataclass(frozen=True)
class StepRange:
    min_value: int
    max_value: int
    bits: int            # provisioned width of the encoded domain
    encrypted: bool

    def to_dict(self) -> dict:
        return {"min_value": int(self.min_value), "max_value": int(self.max_value),
                "bits": int(self.bits), "encrypted": bool(self.encrypted)}


@dataclass
class BitWidthReport:
    per_step: dict[str, StepRange]
    global_max_bits: int
    pbs_count: int
    pbs_input_widths: list[int]
    norm2_constants: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "per_step": {k: v.to_dict() for k, v in self.per_step.items()},
            "global_max_bits": int(self.global_max_bits),
            "pbs_count": int(self.pbs_count),
            "pbs_input_widths": [int(w) for w in self.pbs_input_widths],
            "norm2_constants": {k: float(v) for k, v in self.norm2_constants.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def format_table(self) -> str:
        lines = [f"{'step':<18}{'min':>8}{'max':>8}{'bits':>6}  domain"]
        for name, sr in self.per_step.items():
            dom = "encrypted" if sr.encrypted else "clear"
            lines.append(f"{name:<18}{sr.min_value:>8}{sr.max_value:>8}{sr.bits:>6}  {dom}")
        lines.append(f"global encrypted max bits: {self.global_max_bits}")
        lines.append(f"PBS count per inference:   {self.pbs_count}")
        for seg, norm in self.norm2_constants.items():
            lines.append(f"|w|2 {seg}: {norm:g}")
        return "\n".join(lines)


def analyze(bundle: TensorBundle) -> BitWidthReport:
    """Interval analysis with inputs ranging over [0, 2^p - 1]."""
    p = bundle.input_bits
    qmax = (1 << p) - 1
    steps: dict[str, StepRange] = {}
    norms: dict[str, float] = {}

    steps["input"] = StepRange(0, qmax, p, True)

    any_internal = bool(bundle.slot_real.any())
    if any_internal:
        # Step 1: A only selects, so each populated slot carries the input range.
        steps["feature_select"] = StepRange(0, qmax, p, True)
        steps["compare"] = StepRange(0, 1, 1, True)
        norms["feature_select"] = 1.0

        # Step 3: per-leaf attainable path codes. A comparison can only output
        # 1 when its threshold is >= 1, which refines the bounds.
        q_can_fire = bundle.B >= 1                          # (N, M)
        pos = (bundle.C == 1) & q_can_fire[:, None, :]
        neg = (bundle.C == -1) & q_can_fire[:, None, :]
        r_max_leaf = pos.sum(axis=2)
        r_min_leaf = -neg.sum(axis=2)
        real = bundle.leaf_tlu
        r_min = int(r_min_leaf[real].min()) if real.any() else 0
        r_max = int(r_max_leaf[real].max()) if real.any() else 0
        steps["path_sum"] = StepRange(r_min, r_max, p + 1, True)
        steps["equal"] = StepRange(0, 1, 1, True)
        norms["path_sum"] = float(np.sqrt(bundle.path_lengths.max())) if bundle.path_lengths.size else 0.0

    # Step 5.1: the per-tree sum over a one-hot S selects one real leaf code.
    lv_real = bundle.leaf_values[bundle.leaf_real]
    t_min = int(lv_real.min()) if lv_real.size else 0
    t_max = int(lv_real.max()) if lv_real.size else 0
    steps["per_tree_sum"] = StepRange(t_min, t_max, bundle.leaf_quant.bits, True)
    sq = (bundle.leaf_values.astype(np.float64) ** 2 * bundle.leaf_real).sum(axis=1)
    norms["per_tree_sum"] = float(np.sqrt(sq.max())) if sq.size else 0.0

    # Step 5.2 runs in the clear; its growth with N is why the split exists.
    # Leaf codes are unsigned, so per class c the sum lies in
    # [N_c * t_min, N_c * t_max]; take the envelope over classes.
    counts = bundle.trees_per_class
    n_max = int(counts.max()) if counts.size else 0
    n_min = int(counts.min()) if counts.size else 0
    agg_min, agg_max = n_min * t_min, n_max * t_max
    agg_bits = max(int(abs(v)).bit_length() + (1 if min(agg_min, 0) < 0 else 0)
                   for v in (agg_min, agg_max, 1))
    steps["clear_aggregate"] = StepRange(agg_min, agg_max, agg_bits, False)

    n_cmp = int(bundle.slot_real.sum())
    n_eq = int(bundle.leaf_tlu.sum())
    widths = [p] * n_cmp + [p + 1] * n_eq
    global_bits = max(sr.bits for sr in steps.values() if sr.encrypted)

    return BitWidthReport(
        per_step=steps,
        global_max_bits=global_bits,
        pbs_count=n_cmp + n_eq,
        pbs_input_widths=widths,
        norm2_constants=norms,
    )


def pbs_cost_estimate(report: BitWidthReport, cost_table: dict[int, float]) -> float:
    """Total relative PBS cost: sum of cost_table[width] over all TLUs."""
    total = 0.0
    for w in report.pbs_input_widths:
        if w not in cost_table:
            raise ConfigurationError(f"cost table has no entry for width {w}")
        total += float(cost_table[w])
    return total
