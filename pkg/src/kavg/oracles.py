"""Synthetic stochastic objectives with certified constants.

Three families are provided.  Each oracle carries the gradient-Lipschitz
constant ``L``, the stochastic-gradient variance bound ``M`` and a lower
bound ``F*`` of the objective, all known in closed form (or, for finite
sums, certified on a reference box).

* ``Quadratic``:  F(w) = 1/2 sum_i lam_i w_i^2, gradient noise N(0, sigma^2 I).
* ``TrigNonconvex``:  F(w) = 1/2 |w|^2 + a sum_i cos(w_i), same noise model.
  For a > 1 every coordinate has a local maximum at 0 and two minima.
* ``FiniteSum``:  F(w) = 1/m sum_i f_i(w) with separable quadratic components
  f_i(w) = 1/2 sum_c A[i, c] w_c^2 - B[i, c] w_c; a stochastic gradient is the
  gradient of one uniformly sampled component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from . import streams
from .errors import ConfigError, ContractViolation


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Quadratic:
    eigenvalues: np.ndarray
    noise_std: float = 0.0


@dataclass(frozen=True, eq=False)
class TrigNonconvex:
    amplitude: float
    noise_std: float = 0.0


@dataclass(frozen=True, eq=False)
class FiniteSum:
    curvatures: np.ndarray  # (m, d), nonnegative
    shifts: np.ndarray  # (m, d)
    box_radius: float

    @property
    def components(self) -> int:
        return self.curvatures.shape[0]


Kind = Union[Quadratic, TrigNonconvex, FiniteSum]


@dataclass(frozen=True, eq=False)
class ObjectiveOracle:
    dimension: int
    lipschitz_L: float
    variance_M: float
    lower_bound_Fstar: float
    kind: Kind
    # mean component parameters, cached for finite sums
    _mean: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ContractViolation("dimension must be positive")
        if not self.lipschitz_L > 0:
            raise ContractViolation("lipschitz_L must be positive")
        if not self.variance_M >= 0:
            raise ContractViolation("variance_M must be nonnegative")

    @property
    def noisy(self) -> bool:
        return self.variance_M > 0

    def in_certified_region(self, w: np.ndarray) -> bool:
        """False only for finite sums whose iterate left the box where M was certified."""
        if isinstance(self.kind, FiniteSum):
            return bool(np.all(np.abs(w) <= self.kind.box_radius))
        return True


# -- constructors -----------------------------------------------------------

def quadratic(eigenvalues, noise_std: float = 0.0) -> ObjectiveOracle:
    eig = _frozen(eigenvalues).ravel()
    if eig.size == 0 or np.any(eig <= 0):
        raise ContractViolation("eigenvalues must be a nonempty vector of positive reals")
    if noise_std < 0:
        raise ContractViolation("noise_std must be nonnegative")
    d = eig.size
    return ObjectiveOracle(
        dimension=d,
        lipschitz_L=float(eig.max()),
        variance_M=d * float(noise_std) ** 2,
        lower_bound_Fstar=0.0,
        kind=Quadratic(eig, float(noise_std)),
    )


def trig_nonconvex(dimension: int, amplitude: float, noise_std: float = 0.0) -> ObjectiveOracle:
    if amplitude <= 0:
        raise ContractViolation("amplitude must be positive")
    if noise_std < 0:
        raise ContractViolation("noise_std must be nonnegative")
    return ObjectiveOracle(
        dimension=int(dimension),
        lipschitz_L=1.0 + amplitude,
        variance_M=dimension * float(noise_std) ** 2,
        lower_bound_Fstar=-amplitude * dimension,
        kind=TrigNonconvex(float(amplitude), float(noise_std)),
    )


def finite_sum(curvatures, shifts, box_radius: float, grid_points: int = 201,
               inflation: float = 1.1) -> ObjectiveOracle:
    """Finite-sum oracle; ``M`` is certified on the box ``[-box_radius, box_radius]^d``.

    The component variance is separable and convex in each coordinate, so the
    per-coordinate grid (which contains both endpoints) attains the exact
    maximum.  The certified value is that maximum times ``inflation``.
    """
    a = _frozen(curvatures)
    b = _frozen(shifts)
    if a.ndim != 2 or a.shape != b.shape:
        raise ContractViolation("curvatures and shifts must be (m, d) tables of equal shape")
    if np.any(a < 0):
        raise ContractViolation("component curvatures must be nonnegative")
    if box_radius <= 0:
        raise ContractViolation("box_radius must be positive")
    a_bar, b_bar = a.mean(axis=0), b.mean(axis=0)
    if np.any(a_bar <= 0):
        raise ContractViolation("mean curvature must be positive in every coordinate")

    var_a = ((a - a_bar) ** 2).mean(axis=0)
    cov_ab = ((a - a_bar) * (b - b_bar)).mean(axis=0)
    var_b = ((b - b_bar) ** 2).mean(axis=0)
    grid = np.linspace(-box_radius, box_radius, grid_points)[:, None]
    per_coord = var_a * grid**2 - 2 * cov_ab * grid + var_b
    variance_max = float(per_coord.max(axis=0).sum())

    return ObjectiveOracle(
        dimension=a.shape[1],
        lipschitz_L=float(a_bar.max()),
        variance_M=inflation * variance_max,
        lower_bound_Fstar=float(-(b_bar**2 / (2 * a_bar)).sum()),
        kind=FiniteSum(a, b, float(box_radius)),
        _mean=(_frozen(a_bar), _frozen(b_bar)),
    )


def random_finite_sum(components: int, dimension: int, seed: int,
                      box_radius: float = 5.0) -> ObjectiveOracle:
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 1.5, size=(components, dimension))
    b = rng.normal(0.0, 1.0, size=(components, dimension))
    return finite_sum(a, b, box_radius)


# -- evaluation -------------------------------------------------------------

def _check(oracle: ObjectiveOracle, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (oracle.dimension,):
        raise ContractViolation(
            f"expected vectors of length {oracle.dimension}, got shape {w.shape}")
    return w


def _gradient(oracle: ObjectiveOracle, w: np.ndarray) -> np.ndarray:
    kind = oracle.kind
    if isinstance(kind, Quadratic):
        return kind.eigenvalues * w
    if isinstance(kind, TrigNonconvex):
        return w - kind.amplitude * np.sin(w)
    a_bar, b_bar = oracle._mean
    return a_bar * w - b_bar


def full_gradient(oracle: ObjectiveOracle, w) -> np.ndarray:
    """Exact gradient. Accepts a single vector or a stack of vectors (last axis = d)."""
    return _gradient(oracle, _check(oracle, w))


def objective_value(oracle: ObjectiveOracle, w) -> float:
    w = _check(oracle, w)
    kind = oracle.kind
    if isinstance(kind, Quadratic):
        return float(0.5 * np.dot(kind.eigenvalues, w * w))
    if isinstance(kind, TrigNonconvex):
        return float(0.5 * np.dot(w, w) + kind.amplitude * np.cos(w).sum())
    a_bar, b_bar = oracle._mean
    return float(np.sum(0.5 * a_bar * w * w - b_bar * w))


def sample_gradients(oracle: ObjectiveOracle, w: np.ndarray, gen: np.random.Generator,
                     count: int) -> np.ndarray:
    """Per-sample stochastic gradients at ``w``; row ``s`` uses the ``s``-th draw of ``gen``."""
    kind = oracle.kind
    if isinstance(kind, FiniteSum):
        idx = gen.integers(0, kind.components, size=count)
        return kind.curvatures[idx] * w - kind.shifts[idx]
    g = _gradient(oracle, w)
    if kind.noise_std == 0:
        return np.broadcast_to(g, (count, oracle.dimension)).copy()
    return g + kind.noise_std * gen.standard_normal((count, oracle.dimension))


def minibatch_gradient(oracle: ObjectiveOracle, w: np.ndarray, root_seed: int,
                       n: int, j: int, k: int, batch: int) -> np.ndarray:
    """Mini-batch average of ``batch`` draws ``xi^j_{k,1..batch}`` in round ``n``."""
    w = _check(oracle, w)
    if isinstance(oracle.kind, (Quadratic, TrigNonconvex)) and oracle.kind.noise_std == 0:
        return _gradient(oracle, w)
    gen = streams.block_generator(root_seed, n, j, k)
    return sample_gradients(oracle, w, gen, batch).mean(axis=0)


def stochastic_gradient(oracle: ObjectiveOracle, w, stream: streams.RngStream) -> np.ndarray:
    """Single-sample stochastic gradient for the draw addressed by ``stream``."""
    w = _check(oracle, w)
    if isinstance(oracle.kind, (Quadratic, TrigNonconvex)) and oracle.kind.noise_std == 0:
        return _gradient(oracle, w)
    s = stream.sample_index
    return sample_gradients(oracle, w, stream.generator(), s + 1)[s]


# -- certification ----------------------------------------------------------

@dataclass
class CertificationReport:
    max_lipschitz_ratio: float
    max_noise_second_moment: float
    variance_tolerance: float
    lipschitz_violation: bool
    variance_violation: bool
    pairs: int
    points: int
    draws_per_point: int

    @property
    def ok(self) -> bool:
        return not (self.lipschitz_violation or self.variance_violation)


def certify_constants(oracle: ObjectiveOracle, trials: int, box_radius: float, seed: int,
                      draws_per_point: int = 2000, max_points: int = 16) -> CertificationReport:
    """Empirically try to falsify the certified ``L`` and ``M``.

    ``trials`` random point pairs in the box give the largest observed
    gradient-difference ratio; up to ``max_points`` of the points also get
    ``draws_per_point`` stochastic gradients each to estimate the noise
    second moment.  A variance violation needs the estimate to exceed ``M``
    by more than five standard errors.
    """
    if trials < 1:
        raise ContractViolation("trials must be >= 1")
    if box_radius <= 0:
        raise ContractViolation("box_radius must be positive")
    d = oracle.dimension
    rng = streams.block_generator(seed, 0, domain=streams.CERTIFY)
    u = rng.uniform(-box_radius, box_radius, size=(trials, d))
    v = rng.uniform(-box_radius, box_radius, size=(trials, d))
    dist = np.linalg.norm(u - v, axis=1)
    keep = dist > 0
    diff = np.linalg.norm(_gradient(oracle, u) - _gradient(oracle, v), axis=1)
    ratio = float(np.max(diff[keep] / dist[keep])) if keep.any() else 0.0
    lip_violation = ratio > oracle.lipschitz_L + 1e-9 * max(1.0, oracle.lipschitz_L)

    points = min(trials, max_points)
    worst, worst_tol = 0.0, 0.0
    var_violation = False
    for i in range(points):
        w = u[i]
        gen = streams.block_generator(seed, i + 1, domain=streams.CERTIFY)
        dev = sample_gradients(oracle, w, gen, draws_per_point) - _gradient(oracle, w)
        sq = np.einsum("ij,ij->i", dev, dev)
        mean = float(sq.mean())
        tol = 5.0 * float(sq.std(ddof=1)) / math.sqrt(draws_per_point) if draws_per_point > 1 else math.inf
        if mean > oracle.variance_M + tol + 1e-12:
            var_violation = True
        if mean >= worst:
            worst, worst_tol = mean, tol

    return CertificationReport(
        max_lipschitz_ratio=ratio,
        max_noise_second_moment=worst,
        variance_tolerance=worst_tol,
        lipschitz_violation=bool(lip_violation),
        variance_violation=var_violation,
        pairs=trials,
        points=points,
        draws_per_point=draws_per_point,
    )


# -- serialization ----------------------------------------------------------

def oracle_to_dict(oracle: ObjectiveOracle) -> dict[str, Any]:
    kind = oracle.kind
    if isinstance(kind, Quadratic):
        return {"kind": "quadratic", "eigenvalues": kind.eigenvalues.tolist(),
                "noise_std": kind.noise_std}
    if isinstance(kind, TrigNonconvex):
        return {"kind": "trig_nonconvex", "dimension": oracle.dimension,
                "amplitude": kind.amplitude, "noise_std": kind.noise_std}
    return {"kind": "finite_sum", "curvatures": kind.curvatures.tolist(),
            "shifts": kind.shifts.tolist(), "box_radius": kind.box_radius}


def oracle_from_dict(spec: dict[str, Any]) -> ObjectiveOracle:
    try:
        kind = spec["kind"]
        if kind == "quadratic":
            return quadratic(spec["eigenvalues"], spec.get("noise_std", 0.0))
        if kind == "trig_nonconvex":
            return trig_nonconvex(spec["dimension"], spec["amplitude"], spec.get("noise_std", 0.0))
        if kind == "finite_sum":
            if "curvatures" in spec:
                return finite_sum(spec["curvatures"], spec["shifts"], spec["box_radius"])
            return random_finite_sum(spec["components"], spec["dimension"], spec["seed"],
                                     spec.get("box_radius", 5.0))
    except KeyError as exc:
        raise ConfigError(f"oracle spec is missing field {exc}") from None
    except (ContractViolation, TypeError) as exc:
        raise ConfigError(f"cannot construct oracle: {exc}") from None
    raise ConfigError(f"unknown oracle kind {spec.get('kind')!r}")
