"""Discrete datasets with missing cells and empirical low-order marginal PMFs.

Category codes are 1-based; code 0 marks a missing cell. A record contributes
to a d-tuple marginal only when all d cells are observed (complete-case per
tuple), which keeps every stored marginal an unbiased PMF estimate of that
tuple. Counting is exact 64-bit integer arithmetic with one final division.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError
from .tensor_ops import DenseTensor

MISSING = 0


@dataclass(frozen=True)
class DiscreteDataset:
    """M records over N categorical variables, 0-coded cells missing."""

    codes: np.ndarray  # (M, N) int64
    alphabet_sizes: tuple[int, ...]

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 2:
            raise DataError(f"records must form a 2-D array, got ndim={codes.ndim}")
        if codes.shape[0] < 1:
            raise DataError("dataset needs at least one record")
        sizes = tuple(int(s) for s in self.alphabet_sizes)
        if len(sizes) != codes.shape[1]:
            raise DataError(
                f"{len(sizes)} alphabet sizes for {codes.shape[1]} variables"
            )
        if any(s < 1 for s in sizes):
            raise DataError("alphabet sizes must be positive")
        if codes.min() < 0:
            raise DataError("category codes must be >= 0 (0 marks missing)")
        for n, size in enumerate(sizes):
            col_max = int(codes[:, n].max())
            if col_max > size:
                raise DataError(
                    f"column {n + 1} holds code {col_max} exceeding alphabet size {size}"
                )
        codes = codes.copy()
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "alphabet_sizes", sizes)

    @property
    def n_records(self) -> int:
        return int(self.codes.shape[0])

    @property
    def n_vars(self) -> int:
        return int(self.codes.shape[1])

    @property
    def observed_mask(self) -> np.ndarray:
        return self.codes != MISSING


@dataclass(frozen=True)
class MarginalEntry:
    tensor: DenseTensor
    support: int


@dataclass(frozen=True)
class MarginalSet:
    """Empirical marginal PMFs keyed by sorted 1-based variable tuples.

    Tuples with zero jointly-observed records keep a zero tensor with
    support 0 and are skipped by `active()` (and hence by fitting).
    """

    order: int
    alphabet_sizes: tuple[int, ...]
    entries: Mapping[tuple[int, ...], MarginalEntry] = field(default_factory=dict)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.alphabet_sizes)
        object.__setattr__(self, "alphabet_sizes", sizes)
        ents = {}
        for key, entry in self.entries.items():
            key = tuple(int(v) for v in key)
            if len(key) != self.order:
                raise DataError(f"tuple {key} does not match order {self.order}")
            if list(key) != sorted(set(key)):
                raise DataError(f"tuple {key} must be strictly increasing")
            if key[0] < 1 or key[-1] > len(sizes):
                raise DataError(f"tuple {key} out of range for {len(sizes)} variables")
            expect = tuple(sizes[v - 1] for v in key)
            if entry.tensor.shape != expect:
                raise DataError(
                    f"marginal {key} has shape {entry.tensor.shape}, expected {expect}"
                )
            ents[key] = entry
        object.__setattr__(self, "entries", ents)

    @property
    def n_vars(self) -> int:
        return len(self.alphabet_sizes)

    def active(self) -> Iterator[tuple[tuple[int, ...], MarginalEntry]]:
        """Entries with positive support, in sorted key order."""
        for key in sorted(self.entries):
            entry = self.entries[key]
            if entry.support > 0:
                yield key, entry

    def is_complete(self) -> bool:
        return len(self.entries) == math.comb(self.n_vars, self.order)


def load_csv(
    path,
    missing_token: str = "?",
    alphabet_sizes: Sequence[int] | None = None,
    delimiter: str = ",",
    has_header: bool = False,
    rounding: str | None = None,
) -> DiscreteDataset:
    """Read a delimiter-separated file of 1-based integer codes into a dataset.

    Cells equal to `missing_token` (after stripping) become missing. Alphabet
    sizes default to the per-column maximum observed code. `rounding` maps
    real-valued cells onto integer codes: None rejects them, "half-up" rounds
    x to floor(x + 0.5) and "ceiling" to ceil(x).
    """
    if rounding not in (None, "half-up", "ceiling"):
        raise DataError(f"unknown rounding convention {rounding!r}")
    rows: list[list[int]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        if has_header:
            next(reader, None)
        for lineno, raw in enumerate(reader, start=2 if has_header else 1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            row = []
            for colno, cell in enumerate(raw, start=1):
                cell = cell.strip()
                if cell == missing_token:
                    row.append(MISSING)
                    continue
                try:
                    value = int(cell)
                except ValueError:
                    if rounding is None:
                        raise DataError(
                            f"non-integer cell {cell!r} at line {lineno}, column {colno}"
                        ) from None
                    try:
                        x = float(cell)
                    except ValueError:
                        raise DataError(
                            f"unparseable cell {cell!r} at line {lineno}, column {colno}"
                        ) from None
                    value = math.floor(x + 0.5) if rounding == "half-up" else math.ceil(x)
                if value < 1:
                    raise DataError(
                        f"code {value} at line {lineno}, column {colno} is below 1"
                    )
                row.append(value)
            rows.append(row)
    if not rows:
        raise DataError(f"no records found in {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"inconsistent column counts in {path}: {sorted(widths)}")
    codes = np.asarray(rows, dtype=np.int64)
    n_vars = codes.shape[1]
    if alphabet_sizes is None:
        sizes = []
        for n in range(n_vars):
            col_max = int(codes[:, n].max())
            if col_max == MISSING:
                raise DataError(
                    f"column {n + 1} is entirely missing; cannot infer its alphabet size"
                )
            sizes.append(col_max)
        alphabet_sizes = tuple(sizes)
    else:
        alphabet_sizes = tuple(int(s) for s in alphabet_sizes)
        if len(alphabet_sizes) != n_vars:
            raise DataError(
                f"{len(alphabet_sizes)} alphabet sizes provided for {n_vars} columns"
            )
    return DiscreteDataset(codes=codes, alphabet_sizes=alphabet_sizes)


def estimate_marginals(data: DiscreteDataset, order: int) -> MarginalSet:
    """Co-occurrence estimates of every order-d marginal PMF.

    For each sorted d-tuple the tensor entry is the joint observation count
    divided by the number of records fully observed on the tuple.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if order > data.n_vars:
        raise ValueError(f"order {order} exceeds the {data.n_vars} variables present")
    codes = data.codes
    entries: dict[tuple[int, ...], MarginalEntry] = {}
    for combo in itertools.combinations(range(1, data.n_vars + 1), order):
        dims = tuple(data.alphabet_sizes[v - 1] for v in combo)
        sub = codes[:, [v - 1 for v in combo]]
        mask = (sub != MISSING).all(axis=1)
        support = int(mask.sum())
        total = math.prod(dims)
        if support == 0:
            tensor = DenseTensor(shape=dims, data=np.zeros(total))
        else:
            obs = sub[mask] - 1
            lin = np.ravel_multi_index(obs.T, dims, order="F")
            counts = np.bincount(lin, minlength=total)
            tensor = DenseTensor(shape=dims, data=counts / support)
        entries[combo] = MarginalEntry(tensor=tensor, support=support)
    return MarginalSet(order=order, alphabet_sizes=data.alphabet_sizes, entries=entries)


def marginalize_tensor(t: DenseTensor, keep: Sequence[int]) -> DenseTensor:
    """Sum out every mode not in `keep` (1-based); preserves total mass.

    Kept modes stay in increasing mode order.
    """
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    if keep[0] < 1 or keep[-1] > t.order:
        raise ValueError(f"keep modes {keep} out of range for order-{t.order} tensor")
    drop = tuple(ax for ax in range(t.order) if (ax + 1) not in keep)
    arr = t.array.sum(axis=drop) if drop else t.array
    return DenseTensor.from_array(arr)
