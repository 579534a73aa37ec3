"""Desk-scale optimization experiments around permutation-induced basins.

Symmetric random initialization, full-batch gradient descent on tiny nets,
canonical-form clustering of the minima found across seeds, and the
geometric amplification check: the probability of landing within delta/2 of
*some* permutation image of a reference point is the per-image probability
times the number of distinct images.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .canonical import (
    canonicalize,
    distinct_permutation_images,
    symmetry_profile,
    SymmetryProfile,
)
from .errors import DomainError
from .nncore import (
    Architecture,
    DIVERGENCE_THRESHOLD,
    NetworkParams,
    check_same_shapes,
    check_shapes,
    forward_batch,
    mse_gradient,
    params_from_flat,
    params_max_diff,
)

DEFAULT_CLUSTER_TOL = 1e-3


# ---------------------------------------------------------------------------
# Initialization schemes


@dataclass(frozen=True)
class InitScheme:
    """A layer-symmetric random initializer.

    Within each layer all weight entries are drawn i.i.d. from one
    distribution and all bias entries i.i.d. from one distribution, so the
    induced measure on parameters is invariant under hidden-neuron
    permutations.  Kinds: ``uniform(low, high)``, ``normal(mu, sigma)``,
    ``xavier`` (weights N(0, 2/(fan_in+fan_out)), zero biases), ``he``
    (weights N(0, 2/fan_in), zero biases).
    """

    kind: str
    seed: int | np.random.SeedSequence = 0
    low: float = -1.0
    high: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal", "xavier", "he"):
            raise DomainError(f"unknown init scheme {self.kind!r}")
        if self.kind == "uniform" and not self.low <= self.high:
            raise DomainError("uniform init needs low <= high")
        if self.kind == "normal" and not self.sigma >= 0:
            raise DomainError("normal init needs sigma >= 0")


def _layer_draw(scheme: InitScheme, rng, n, fan_out, fan_in):
    if scheme.kind == "uniform":
        W = rng.uniform(scheme.low, scheme.high, size=(n, fan_out * fan_in))
        b = rng.uniform(scheme.low, scheme.high, size=(n, fan_out))
    elif scheme.kind == "normal":
        W = rng.normal(scheme.mu, scheme.sigma, size=(n, fan_out * fan_in))
        b = rng.normal(scheme.mu, scheme.sigma, size=(n, fan_out))
    elif scheme.kind == "xavier":
        std = math.sqrt(2.0 / (fan_in + fan_out))
        W = rng.normal(0.0, std, size=(n, fan_out * fan_in))
        b = np.zeros((n, fan_out))
    else:  # he
        std = math.sqrt(2.0 / fan_in)
        W = rng.normal(0.0, std, size=(n, fan_out * fan_in))
        b = np.zeros((n, fan_out))
    return W, b


def initialize_batch(arch: Architecture, scheme: InitScheme, n: int) -> np.ndarray:
    """Draw ``n`` flat parameter vectors (layer by layer, weights then biases)."""
    if n < 1:
        raise DomainError("need n >= 1 draws")
    rng = np.random.default_rng(scheme.seed)
    blocks = []
    for (fan_out, fan_in), _ in arch.layer_shapes():
        W, b = _layer_draw(scheme, rng, n, fan_out, fan_in)
        blocks.extend([W, b])
    return np.concatenate(blocks, axis=1)


def initialize(arch: Architecture, scheme: InitScheme) -> NetworkParams:
    """Draw one parameter set; reproducible from the scheme's seed."""
    return params_from_flat(arch, initialize_batch(arch, scheme, 1)[0])


# ---------------------------------------------------------------------------
# Datasets


def xor_dataset() -> tuple[np.ndarray, np.ndarray]:
    """The 4-point parity task on {-1, +1}^2."""
    X = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    y = np.array([[-1.0], [1.0], [1.0], [-1.0]])
    return X, y


def teacher_dataset(
    arch: Architecture, teacher: NetworkParams, n_points: int, B_x: float, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Inputs in the B_x ball labelled by a fixed teacher network."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-B_x, B_x, size=(n_points, arch.input_dim))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = np.where(norms > B_x, X * (B_x / norms), X)
    return X, forward_batch(arch, teacher, X)


def dataset_to_csv(X, Y, path) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] != X.shape[0]:
        Y = Y.T
    header = [f"x{i}" for i in range(X.shape[1])] + [f"y{i}" for i in range(Y.shape[1])]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for xi, yi in zip(X, Y):
            fh.write(",".join(f"{v:.17g}" for v in (*xi, *yi)) + "\n")


def dataset_from_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        n_x = sum(1 for c in header if c.startswith("x"))
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    data = np.array(rows)
    return data[:, :n_x], data[:, n_x:]


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float
    max_iters: int
    grad_threshold: float = 1e-6

    def __post_init__(self):
        if self.step_size <= 0:
            raise DomainError("step size must be positive")
        if self.max_iters < 0:
            raise DomainError("max_iters must be nonnegative")


@dataclass(frozen=True, eq=False)
class TrainRun:
    """Record of one full-batch gradient-descent run."""

    seed: int | None
    init_params: NetworkParams
    final_params: NetworkParams
    final_loss: float
    iterations: int
    converged: bool
    diverged: bool
    canonical_flat: np.ndarray
    cluster_id: int | None = None


def _grad_max(g: NetworkParams) -> float:
    return g.max_abs()


def train(
    arch: Architecture,
    theta0: NetworkParams,
    dataset,
    config: OptimizerConfig,
    seed: int | None = None,
) -> TrainRun:
    """Full-batch gradient descent on the mean squared error.

    Deterministic given its inputs.  ``converged`` means the gradient
    L-infinity norm fell below the threshold; loss explosions and non-finite
    values mark the run as diverged instead of raising.
    """
    check_shapes(arch, theta0)
    X, Y = dataset
    if np.asarray(X).shape[0] == 0:
        raise DomainError("dataset must be nonempty")
    params = theta0
    converged = diverged = False
    iterations = 0
    loss = math.inf
    for it in range(config.max_iters + 1):
        loss, grad = mse_gradient(arch, params, X, Y)
        if not math.isfinite(loss) or loss > DIVERGENCE_THRESHOLD:
            diverged = True
            iterations = it
            break
        if _grad_max(grad) <= config.grad_threshold:
            converged = True
            iterations = it
            break
        if it == config.max_iters:
            iterations = it
            break
        params = NetworkParams(
            tuple(
                (W - config.step_size * gW, b - config.step_size * gb)
                for (W, b), (gW, gb) in zip(params.layers, grad.layers)
            )
        )
    canonical_flat = canonicalize(params).params.flat()
    return TrainRun(
        seed=seed,
        init_params=theta0,
        final_params=params,
        final_loss=loss,
        iterations=iterations,
        converged=converged,
        diverged=diverged,
        canonical_flat=canonical_flat,
    )


# ---------------------------------------------------------------------------
# Orbit membership and clustering


def orbit_membership(theta: NetworkParams, theta_star: NetworkParams, tolerance: float) -> bool:
    """True when the canonical forms agree entrywise within tolerance.

    For tolerance below half the minimal row gap of ``theta_star``, this
    matches being within tolerance of some permutation image of it.
    """
    check_same_shapes(theta, theta_star)
    if tolerance < 0:
        raise DomainError("tolerance must be nonnegative")
    a = canonicalize(theta).params.flat()
    b = canonicalize(theta_star).params.flat()
    return bool(np.abs(a - b).max() <= tolerance)


@dataclass(frozen=True, eq=False)
class BasinSummary:
    """Aggregate of a multi-seed training experiment.

    ``cluster_sizes`` counts converged runs per canonical cluster (sorted
    descending).  The reference solution is the representative of the most
    frequent cluster; ``orbit_fraction`` counts runs whose final parameters
    canonicalize next to it, ``single_fraction`` counts runs whose raw final
    parameters sit next to it without re-permutation, and
    ``predicted_orbit_fraction`` is single_fraction times the orbit size.
    """

    n_runs: int
    n_converged: int
    cluster_sizes: tuple[int, ...]
    cluster_tolerance: float
    reference_profile: SymmetryProfile | None
    orbit_fraction: float
    single_fraction: float
    predicted_orbit_fraction: float
    no_converged_runs: bool
    runs: tuple[TrainRun, ...]

    def to_json_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "n_converged": self.n_converged,
            "cluster_sizes": list(self.cluster_sizes),
            "cluster_tolerance": self.cluster_tolerance,
            "reference_profile": (
                None if self.reference_profile is None else self.reference_profile.to_json_dict()
            ),
            "orbit_fraction": self.orbit_fraction,
            "single_fraction": self.single_fraction,
            "predicted_orbit_fraction": self.predicted_orbit_fraction,
            "no_converged_runs": self.no_converged_runs,
        }


def _cluster_by_canonical(runs, tolerance):
    reps: list[np.ndarray] = []
    assignment = []
    for run in runs:
        for cid, rep in enumerate(reps):
            if np.abs(run.canonical_flat - rep).max() <= tolerance:
                assignment.append(cid)
                break
        else:
            reps.append(run.canonical_flat)
            assignment.append(len(reps) - 1)
    return reps, assignment


def _run_one_seed(task):
    arch, scheme, dataset, config, index = task
    theta0 = initialize(arch, scheme)
    return train(arch, theta0, dataset, config, seed=index)


def basin_experiment(
    arch: Architecture,
    scheme: InitScheme,
    dataset,
    n_runs: int,
    config: OptimizerConfig,
    cluster_tolerance: float | None = None,
    n_jobs: int = 1,
) -> BasinSummary:
    """Train from ``n_runs`` independent seeded initializations and cluster
    the converged solutions by canonical form.

    Per-run seeds are spawned from the scheme's seed, so the experiment is
    reproducible and runs are independent; with ``n_jobs > 1`` they execute
    in a process pool, and the result does not depend on the worker count.
    When no tolerance is given, a provisional pass picks the largest cluster
    and the final tolerance is a quarter of its representative's minimal
    row gap.
    """
    if n_runs < 1:
        raise DomainError("need at least one run")
    if n_jobs < 1:
        raise DomainError("need at least one worker")
    children = np.random.SeedSequence(scheme.seed).spawn(n_runs)
    tasks = [
        (arch, replace(scheme, seed=child), dataset, config, i)
        for i, child in enumerate(children)
    ]
    if n_jobs == 1:
        runs = [_run_one_seed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(_run_one_seed, tasks))
    converged = [r for r in runs if r.converged]
    if not converged:
        return BasinSummary(
            n_runs=n_runs,
            n_converged=0,
            cluster_sizes=(),
            cluster_tolerance=cluster_tolerance or DEFAULT_CLUSTER_TOL,
            reference_profile=None,
            orbit_fraction=0.0,
            single_fraction=0.0,
            predicted_orbit_fraction=0.0,
            no_converged_runs=True,
            runs=tuple(runs),
        )

    tol = cluster_tolerance if cluster_tolerance is not None else DEFAULT_CLUSTER_TOL
    reps, assignment = _cluster_by_canonical(converged, tol)
    if cluster_tolerance is None:
        # Re-derive the tolerance from the dominant cluster's row gap.
        sizes = np.bincount(assignment)
        best = converged[assignment.index(int(np.argmax(sizes)))]
        profile = symmetry_profile(best.final_params, row_tolerance=tol)
        if math.isfinite(profile.delta_min) and profile.delta_min > 0:
            tol = profile.delta_min / 4.0
            reps, assignment = _cluster_by_canonical(converged, tol)

    sizes = np.bincount(assignment)
    ref_run = converged[assignment.index(int(np.argmax(sizes)))]
    theta_star = ref_run.final_params
    profile = symmetry_profile(theta_star, row_tolerance=tol)

    cluster_of = {id(r): cid for r, cid in zip(converged, assignment)}
    runs = tuple(
        replace(r, cluster_id=cluster_of.get(id(r))) if r.converged else r for r in runs
    )

    orbit_hits = sum(
        1 for r in converged if np.abs(r.canonical_flat - ref_run.canonical_flat).max() <= tol
    )
    single_hits = sum(1 for r in converged if params_max_diff(r.final_params, theta_star) <= tol)
    n_conv = len(converged)
    return BasinSummary(
        n_runs=n_runs,
        n_converged=n_conv,
        cluster_sizes=tuple(int(s) for s in sorted(sizes, reverse=True)),
        cluster_tolerance=tol,
        reference_profile=profile,
        orbit_fraction=orbit_hits / n_conv,
        single_fraction=single_hits / n_conv,
        predicted_orbit_fraction=(single_hits / n_conv) * profile.total_multiplicity,
        no_converged_runs=False,
        runs=tuple(runs),
    )


# ---------------------------------------------------------------------------
# Geometric amplification check (no optimizer in the loop)


@dataclass(frozen=True)
class AmplificationCheck:
    """Observed vs predicted orbit-hit amplification on raw initial draws."""

    n_draws: int
    tolerance: float
    n_images: int
    p_single: float
    p_orbit: float
    ratio: float
    predicted_ratio: int
    se_ratio: float

    def within(self, n_standard_errors: float = 3.0) -> bool:
        if self.predicted_ratio == 1:
            return self.ratio == 1.0
        return abs(self.ratio - self.predicted_ratio) <= n_standard_errors * self.se_ratio


def amplification_check(
    arch: Architecture,
    scheme: InitScheme,
    theta_star: NetworkParams,
    n_draws: int,
    tolerance: float | None = None,
    batch: int = 50_000,
) -> AmplificationCheck:
    """Estimate P(init within tol of theta_star) and P(init within tol of any
    distinct permutation image), and compare their ratio with the image count.

    The default tolerance is half the minimal row gap of ``theta_star``, the
    radius at which the image neighborhoods are disjoint; the standard error
    of the ratio comes from the multinomial delta method.
    """
    check_shapes(arch, theta_star)
    if n_draws < 1:
        raise DomainError("need at least one draw")
    profile = symmetry_profile(theta_star)
    if tolerance is None:
        if not math.isfinite(profile.delta_min):
            raise DomainError(
                "theta_star has no distinct rows; pass an explicit tolerance"
            )
        tolerance = profile.delta_min / 2.0
    images = distinct_permutation_images(theta_star)
    image_mat = np.stack([img.flat() for img in images])
    star_flat = theta_star.flat()
    star_idx = int(np.argmin(np.abs(image_mat - star_flat).max(axis=1)))

    single_hits = 0
    orbit_hits = 0
    draws = initialize_batch(arch, scheme, n_draws)
    for start in range(0, n_draws, batch):
        chunk = draws[start : start + batch]
        dists = np.stack([np.abs(chunk - img).max(axis=1) for img in image_mat])
        hit = dists <= tolerance
        single_hits += int(hit[star_idx].sum())
        orbit_hits += int(hit.any(axis=0).sum())

    p_single = single_hits / n_draws
    p_orbit = orbit_hits / n_draws
    k = len(images)
    ratio = p_orbit / p_single if single_hits > 0 else math.inf
    if k > 1 and single_hits > 0:
        se = math.sqrt(k * (k - 1) / (n_draws * p_single))
    else:
        se = 0.0
    return AmplificationCheck(
        n_draws=n_draws,
        tolerance=float(tolerance),
        n_images=k,
        p_single=p_single,
        p_orbit=p_orbit,
        ratio=ratio,
        predicted_ratio=profile.total_multiplicity,
        se_ratio=se,
    )
