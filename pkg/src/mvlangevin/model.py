"""Model parameters and state types for underdamped Langevin dynamics.

The velocity drift splits into an external part  b_ext(x) = -K x + g(x)
with K symmetric positive definite, a pairwise interaction force
b_int(x, y) averaged over a measure in y, and friction -gamma * v.
Dissipativity of g (non-positive monotonicity outside a ball of radius
``r_dissip``) and the declared Lipschitz constants are what the theory
module consumes; this module holds the data and provides a sampling probe
that can falsify the declared conditions on user-supplied forces.

Force callables follow a broadcasting convention: ``g`` maps arrays of
shape (..., d) to (..., d); ``b_int`` maps a pair of broadcastable
(..., d) arrays to their broadcast shape.  All built-in forces comply.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import stream

Force = Callable[[np.ndarray], np.ndarray]
PairForce = Callable[[np.ndarray, np.ndarray], np.ndarray]

# tolerance for the inner-product sign test in the dissipativity probe;
# absorbs floating-point noise in <g(x)-g(x'), x-x'>
DISSIPATIVITY_TOL = 1e-12

_EIG_RTOL = 1e-10


def _finite_vector(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    return arr


@dataclass(frozen=True)
class PhaseState:
    """One point (x, v) of position-velocity phase space."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = _finite_vector(self.x, "x")
        v = _finite_vector(self.v, "v")
        if x.shape != v.shape:
            raise ValueError(f"x and v dimensions differ: {x.shape} vs {v.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.x.size


def zero_force(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ModelParams:
    """Full specification of one model instance.

    ``kappa`` and ``l_k`` are the extreme eigenvalues of ``k_matrix``; they
    may be passed explicitly (they are then validated against the matrix to
    1e-10 relative) or left as None to be computed.  ``l_g`` and ``l_int``
    are declared Lipschitz constants of ``g`` and ``b_int`` (the latter with
    respect to the joint Euclidean norm on the doubled space); they are
    inputs of record -- the probe below can only falsify them.
    """

    gamma: float
    k_matrix: np.ndarray
    g: Force = zero_force
    b_int: PairForce | None = None
    l_g: float = 0.0
    l_int: float = 0.0
    r_dissip: float = 0.0
    kappa: float | None = None
    l_k: float | None = None

    def __post_init__(self):
        k = np.asarray(self.k_matrix, dtype=float)
        if k.ndim == 0:
            k = k.reshape(1, 1)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError(f"k_matrix must be square, got shape {k.shape}")
        if not np.allclose(k, k.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(k).max()))):
            raise ValueError("k_matrix must be symmetric")
        eigs = np.linalg.eigvalsh(k)
        lo, hi = float(eigs[0]), float(eigs[-1])
        if lo <= 0:
            raise ValueError(f"k_matrix must be positive definite (min eigenvalue {lo})")
        for name, declared, actual in (("kappa", self.kappa, lo), ("l_k", self.l_k, hi)):
            if declared is None:
                object.__setattr__(self, name, actual)
            elif abs(declared - actual) > _EIG_RTOL * max(abs(actual), 1e-300):
                raise ValueError(
                    f"{name}={declared} does not match eigenvalue {actual} of k_matrix"
                )
        object.__setattr__(self, "k_matrix", k)
        if self.b_int is None:
            object.__setattr__(self, "b_int", _zero_pair_force)
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.l_g < 0 or self.l_int < 0 or self.r_dissip < 0:
            raise ValueError("l_g, l_int and r_dissip must be >= 0")

    @property
    def dim(self) -> int:
        return self.k_matrix.shape[0]


def _zero_pair_force(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.zeros(np.broadcast_shapes(x.shape, y.shape))


def external_force(p: ModelParams, x: np.ndarray) -> np.ndarray:
    """Evaluate -K x + g(x).  Accepts batches of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.dim:
        raise ValueError(f"x has dimension {x.shape[-1]}, model is {p.dim}-dimensional")
    return -(x @ p.k_matrix.T) + p.g(x)


def mean_attraction(k: float) -> PairForce:
    """Interaction force (x, y) -> k*y: pulls toward k times the measure mean."""

    def b(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(k * y, np.broadcast_shapes(x.shape, y.shape)).copy()

    return b


def linear1d(k: float = 0.0) -> ModelParams:
    """Built-in 1-d benchmark: quadratic well -2x, interaction k*y, gamma=3.

    Its invariant law is the product Gaussian with Var(x)=1/2, Var(v)=1,
    which makes it the reference model for every convergence experiment.
    """
    if k < 0:
        raise ValueError("interaction strength k must be >= 0")
    return ModelParams(
        gamma=3.0,
        k_matrix=np.array([[2.0]]),
        g=zero_force,
        b_int=mean_attraction(k),
        l_g=0.0,
        l_int=float(k),
        r_dissip=0.0,
    )


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid path: state i sits at time i*dt.

    Positions and velocities are stored as (n, d) arrays rather than a list
    of PhaseState objects so long runs stay cheap.
    """

    dt: float
    xs: np.ndarray
    vs: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vs = np.asarray(self.vs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if vs.ndim == 1:
            vs = vs[:, None]
        if xs.shape != vs.shape or xs.ndim != 2:
            raise ValueError("xs and vs must be matching (n, d) arrays")
        if xs.shape[0] < 1:
            raise ValueError("trajectory must contain at least one state")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "vs", vs)

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.xs[i], self.vs[i])

    def to_text(self) -> str:
        """Column dump: t, x components, v components; one state per line."""
        lines = []
        for i in range(len(self)):
            cols = [repr(float(self.dt * i))]
            cols += [repr(float(c)) for c in self.xs[i]]
            cols += [repr(float(c)) for c in self.vs[i]]
            lines.append(" ".join(cols))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DissipativityReport:
    """Outcome of the sampling probe; report-only, it cannot certify."""

    violations: list
    max_lipschitz_estimate: float
    checked_pairs: int


def probe_dissipativity(
    p: ModelParams,
    sample_count: int,
    box_radius: float,
    rng_seed: int,
) -> DissipativityReport:
    """Search for violations of <g(x)-g(x'), x-x'> <= 0 at separation >= R.

    Draws pairs uniformly from [-box_radius, box_radius]^d until
    ``sample_count`` pairs with |x - x'| >= r_dissip have been checked.
    Every drawn pair, whatever its separation, feeds the Lipschitz ratio
    |g(x)-g(x')| / |x-x'|, whose max is returned as a lower bound on the
    true constant.  Pure given the seed.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = stream(rng_seed)
    d, r = p.dim, p.r_dissip
    violations = []
    max_ratio = 0.0
    accepted = 0
    # a box of half-width b has diameter 2*b*sqrt(d); beyond that the
    # separation condition is unsatisfiable and we stop after one round
    feasible = 2.0 * box_radius * np.sqrt(d) >= r
    rounds = 0
    while accepted < sample_count and rounds < 1000:
        rounds += 1
        n = sample_count - accepted if feasible else sample_count
        xs = rng.uniform(-box_radius, box_radius, size=(n, d))
        ys = rng.uniform(-box_radius, box_radius, size=(n, d))
        diff = xs - ys
        sep = np.linalg.norm(diff, axis=1)
        gdiff = p.g(xs) - p.g(ys)
        nz = sep > 0
        if np.any(nz):
            ratios = np.linalg.norm(gdiff[nz], axis=1) / sep[nz]
            max_ratio = max(max_ratio, float(ratios.max()))
        ok = nz & (sep >= r)
        inner = np.einsum("ij,ij->i", gdiff, diff)
        for i in np.nonzero(ok)[0]:
            if inner[i] > DISSIPATIVITY_TOL:
                violations.append((xs[i].copy(), ys[i].copy(), float(inner[i])))
        accepted += int(ok.sum())
        if not feasible:
            break
    return DissipativityReport(
        violations=violations,
        max_lipschitz_estimate=max_ratio,
        checked_pairs=min(accepted, sample_count) if feasible else accepted,
    )
