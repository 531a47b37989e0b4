"""Versioned JSON persistence for models, marginal sets, and reports.

All floats are rounded to 12 significant digits before writing and the key
order is fixed, so rerunning a pipeline with the same seed produces
byte-identical artifacts.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .errors import DataError
from .marginals import MarginalEntry, MarginalSet
from .tensor_ops import DenseTensor, FactorBundle

SCHEMA_VERSION = 1
FLOAT_DIGITS = 12


def round_sig(x: float, digits: int = FLOAT_DIGITS) -> float:
    return float(f"{float(x):.{digits}g}")


def jsonify(obj: Any) -> Any:
    """Recursively convert to JSON-ready values with rounded floats."""
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(float(obj))
    if isinstance(obj, np.ndarray):
        return jsonify(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(obj: Any, path) -> None:
    with open(path, "w") as fh:
        json.dump(jsonify(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def bundle_to_dict(bundle: FactorBundle) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "alphabet_sizes": list(bundle.alphabet_sizes),
        "rank": bundle.rank,
        "lambda": bundle.loadings,
        "factors": [[A[:, f] for f in range(bundle.rank)] for A in bundle.factors],
    }


def bundle_from_dict(doc: dict) -> FactorBundle:
    try:
        version = doc["version"]
        sizes = [int(s) for s in doc["alphabet_sizes"]]
        rank = int(doc["rank"])
        lam = np.asarray(doc["lambda"], dtype=np.float64)
        raw_factors = doc["factors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema version {version}")
    if lam.size != rank:
        raise DataError(f"lambda has {lam.size} entries, rank says {rank}")
    factors = []
    for n, cols in enumerate(raw_factors):
        A = np.asarray(cols, dtype=np.float64).T  # stored column-major
        if A.ndim != 2 or A.shape != (sizes[n], rank):
            raise DataError(
                f"factor {n + 1} has shape {A.shape}, expected {(sizes[n], rank)}"
            )
        factors.append(A)
    if len(factors) != len(sizes):
        raise DataError("factor count disagrees with alphabet_sizes")
    if not np.isfinite(lam).all() or any(not np.isfinite(A).all() for A in factors):
        raise DataError("model document contains non-finite values")
    bundle = FactorBundle(lam, tuple(factors))
    try:
        bundle.validate(tol=1e-6)
    except ValueError as exc:
        raise DataError(f"model document violates simplex invariants: {exc}") from exc
    return bundle


def save_bundle(path, bundle: FactorBundle) -> None:
    dump_json(bundle_to_dict(bundle), path)


def load_bundle(path) -> FactorBundle:
    return bundle_from_dict(load_json(path))


def marginal_set_to_dict(ms: MarginalSet) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "order": ms.order,
        "n_vars": ms.n_vars,
        "alphabet_sizes": list(ms.alphabet_sizes),
        "marginals": [
            {
                "variables": list(key),
                "support": entry.support,
                "data": entry.tensor.data,
            }
            for key, entry in sorted(ms.entries.items())
        ],
    }


def marginal_set_from_dict(doc: dict) -> MarginalSet:
    try:
        version = doc["version"]
        order = int(doc["order"])
        sizes = tuple(int(s) for s in doc["alphabet_sizes"])
        raw = doc["marginals"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed marginal document: {exc}") from exc
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported marginal schema version {version}")
    entries = {}
    for item in raw:
        key = tuple(int(v) for v in item["variables"])
        support = int(item["support"])
        data = np.asarray(item["data"], dtype=np.float64)
        if not np.isfinite(data).all():
            raise DataError(f"marginal {key} contains non-finite values")
        if data.size and data.min() < 0:
            raise DataError(f"marginal {key} contains negative values")
        shape = tuple(sizes[v - 1] for v in key)
        if support > 0 and abs(float(data.sum()) - 1.0) > 1e-6:
            raise DataError(f"marginal {key} sums to {float(data.sum())}, not 1")
        entries[key] = MarginalEntry(
            tensor=DenseTensor(shape=shape, data=data), support=support
        )
    return MarginalSet(order=order, alphabet_sizes=sizes, entries=entries)


def save_marginal_set(path, ms: MarginalSet) -> None:
    dump_json(marginal_set_to_dict(ms), path)


def load_marginal_set(path) -> MarginalSet:
    return marginal_set_from_dict(load_json(path))
