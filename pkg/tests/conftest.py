"""Shared independent oracles used across the test modules.

These deliberately avoid the library's own kernels: brute-force loops,
exhaustive enumeration, and small exact QPs, so each identity is checked
through two unrelated routes.
"""

import itertools

import numpy as np
import pytest


def loop_synthesize(lam, factors):
    """Triple-nested-loop evaluation of the latent-class sum."""
    shape = tuple(A.shape[0] for A in factors)
    out = np.zeros(shape)
    for idx in itertools.product(*[range(s) for s in shape]):
        total = 0.0
        for f in range(lam.size):
            term = lam[f]
            for n, i in enumerate(idx):
                term *= factors[n][i, f]
            total += term
        out[idx] = total
    return out


def simplex_qp_oracle(v):
    """Exhaustive active-set solve of min ||x - v||^2 on the simplex.

    Enumerates every support set, solves the equality-constrained problem in
    closed form, keeps feasible KKT points, returns the best.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    best, best_obj = None, np.inf
    for r in range(1, n + 1):
        for support in itertools.combinations(range(n), r):
            s = list(support)
            theta = (v[s].sum() - 1.0) / len(s)
            x = np.zeros(n)
            x[s] = v[s] - theta
            if (x[s] < -1e-12).any():
                continue
            # KKT: excluded coordinates must not want back in
            if any(v[i] - theta > 1e-12 for i in range(n) if i not in support):
                continue
            obj = float(((x - v) ** 2).sum())
            if obj < best_obj:
                best, best_obj = x, obj
    return best


def dense_posterior_oracle(model, target, evidence):
    """Posterior over the target by full enumeration of the dense joint."""
    from pmfrec import synthesize

    arr = synthesize(model.bundle).array
    idx = [slice(None)] * model.n_vars
    for var, code in evidence.items():
        idx[var - 1] = code - 1
    sub = arr[tuple(idx)]
    axes = [n for n in range(sub.ndim)]
    # after slicing, the target axis position is its rank among unsliced vars
    unsliced = [v for v in range(1, model.n_vars + 1) if v not in evidence]
    t_ax = unsliced.index(target)
    other = tuple(a for a in axes if a != t_ax)
    vec = sub.sum(axis=other) if other else sub
    return vec / vec.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
