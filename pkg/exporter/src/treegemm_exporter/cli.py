"""Standalone export script.

    treegemm-export --model-path model.pkl --quant-params params.json \
        --bits 6 --out model_ir.json

--model-path is a pickled fitted scikit-learn model; --quant-params is the
params.json written by the engine's `quantize` command (or any JSON with a
"features" list of {scale, zero_point, bits}).
"""

from __future__ import annotations

import argparse
import json
import pickle
import sys
from pathlib import Path

from .export import ExportError, write_export


def load_quant_params(path: str) -> tuple[list[dict], int]:
    payload = json.loads(Path(path).read_text())
    feats = payload["features"] if isinstance(payload, dict) else payload
    params = [{"scale": f["scale"], "zero_point": f["zero_point"], "bits": f["bits"]}
              for f in feats]
    bits = int(payload.get("bits", params[0]["bits"])) if isinstance(payload, dict) else params[0]["bits"]
    return params, bits


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="treegemm-export", description=__doc__)
    ap.add_argument("--model-path", required=True, help="pickled fitted scikit-learn model")
    ap.add_argument("--quant-params", required=True, help="per-feature quantization params JSON")
    ap.add_argument("--bits", type=int, default=None,
                    help="leaf/threshold bit-width (default: taken from the params file)")
    ap.add_argument("--out", required=True, help="output IR JSON path")
    args = ap.parse_args(argv)

    with open(args.model_path, "rb") as fh:
        model = pickle.load(fh)
    params, file_bits = load_quant_params(args.quant_params)
    bits = args.bits if args.bits is not None else file_bits

    try:
        manifest = write_export(model, params, bits, args.out)
    except ExportError as e:
        print(f"export error: {e}", file=sys.stderr)
        return 3
    print(f"wrote {args.out} ({manifest['n_trees']} trees, sha256 {manifest['ir_sha256'][:12]}...)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
