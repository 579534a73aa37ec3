"""Decision procedures for functional equivalence of two parameterizations.

The structural route canonicalizes both parameterizations and compares them
bit-exactly, which is complete for permutation orbits.  The numeric route
samples the input ball and is a one-sided check: it can distinguish, but a
small sampled distance is not a certificate of equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from .canonical import canonicalize
from .errors import DomainError, ShapeError
from .nncore import Network, forward_batch, params_identical
from .transforms import PermutationSpec, compose, inverse

DEFAULT_TOLERANCE = 1e-7
DEFAULT_N_SAMPLES = 4096

STRUCTURALLY_EQUAL = "structurally_equal_by_permutation"
NUMERICALLY_EQUIVALENT = "numerically_equivalent"
DISTINGUISHED = "distinguished"


@dataclass(frozen=True, eq=False)
class EquivalenceVerdict:
    kind: str
    sup_distance_estimate: float
    witness: PermutationSpec | None = None
    distinguishing_input: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sup_distance_estimate": self.sup_distance_estimate,
            "witness": None if self.witness is None else self.witness.to_json_list(),
            "distinguishing_input": (
                None
                if self.distinguishing_input is None
                else [float(v) for v in self.distinguishing_input]
            ),
        }


def ball_points(dim: int, n: int, radius: float, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform points in the closed L2 ball.

    A scrambled Halton sequence is mapped into the ball (Gaussian-inverse
    directions, radial inverse-CDF), then the origin and the +-radius axis
    points are appended so boundary behavior is always probed.
    """
    if n < 1:
        raise DomainError("need at least one sample point")
    if radius <= 0:
        raise DomainError("radius must be positive")
    sampler = qmc.Halton(d=dim + 1, scramble=True, seed=seed)
    u = sampler.random(n)
    z = norm.ppf(np.clip(u[:, :dim], 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    r = radius * u[:, dim:] ** (1.0 / dim)
    pts = z / norms * r
    axes = np.concatenate([np.eye(dim), -np.eye(dim)]) * radius
    return np.concatenate([pts, np.zeros((1, dim)), axes])


def sampled_sup_distance(
    f1: Network,
    f2: Network,
    B_x: float,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
) -> float:
    """Max output gap over deterministic sample points in the B_x ball.

    Lower-bounds the true sup-norm distance on the ball.
    """
    d, _ = _max_gap(f1, f2, B_x, n_samples, seed)
    return d


def _max_gap(f1: Network, f2: Network, B_x, n_samples, seed):
    if f1.arch.input_dim != f2.arch.input_dim:
        raise ShapeError("input dimensions differ")
    if f1.arch.output_dim != f2.arch.output_dim:
        raise ShapeError("output dimensions differ")
    X = ball_points(f1.arch.input_dim, n_samples, B_x, seed=seed)
    gap = np.abs(
        forward_batch(f1.arch, f1.params, X) - forward_batch(f2.arch, f2.params, X)
    ).max(axis=1)
    i = int(np.argmax(gap))
    return float(gap[i]), X[i]


def decide_equivalence(
    f1: Network,
    f2: Network,
    B_x: float,
    tolerance: float = DEFAULT_TOLERANCE,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
) -> EquivalenceVerdict:
    """Decide whether two parameterizations implement the same function.

    Tries a structural proof first (canonical forms compare bit-exactly,
    yielding an explicit permutation witness); otherwise falls back to
    sampling, labelling the pair numerically equivalent or distinguished.
    """
    if f1.arch != f2.arch:
        raise ShapeError("architectures differ")
    c1 = canonicalize(f1.params)
    c2 = canonicalize(f2.params)
    if params_identical(c1.params, c2.params):
        witness = compose(inverse(c2.witness), c1.witness)
        return EquivalenceVerdict(STRUCTURALLY_EQUAL, 0.0, witness=witness)
    dist, worst_x = _max_gap(f1, f2, B_x, n_samples, seed)
    if dist <= tolerance:
        return EquivalenceVerdict(NUMERICALLY_EQUIVALENT, dist)
    return EquivalenceVerdict(DISTINGUISHED, dist, distinguishing_input=worst_x)
