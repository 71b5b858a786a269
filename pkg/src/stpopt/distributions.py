"""Direction laws for randomized direct search.

Each sampler draws unit-scale directions ``s`` in R^n and knows its induced
norm ``d_norm`` and the constant ``mu`` with

    E |<g, s>| >= mu * d_norm(g)      for every g,

which holds with equality for all the non-oracle laws here.  Coordinate and
basis laws draw a random sign as well, which makes them symmetric (mean zero)
without changing E|<g, s>| or the search itself.

The ``oracle_*`` laws are not random search directions at all: they turn a
gradient into a direction so that the same three-point machinery reproduces
normalized gradient descent, sign gradient descent, normalized randomized
coordinate descent and normalized stochastic gradient descent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import StationaryPointError, UnsupportedOperation

MC_CHUNK = 1 << 16

NON_ORACLE_KINDS = ("sphere", "gaussian", "coord_uniform", "coord_weighted", "ortho_basis")
ORACLE_KINDS = ("oracle_ngd", "oracle_signgd", "oracle_nrcd", "oracle_nsgd")


def sphere_mu(n: int) -> float:
    """Exact E|s_1| for s uniform on the unit sphere in R^n.

    Gamma(n/2) / (sqrt(pi) Gamma((n+1)/2)), evaluated through log-gamma so it
    stays finite for large n.  Tends to sqrt(2 / (pi n)).
    """
    return math.exp(math.lgamma(n / 2) - math.lgamma((n + 1) / 2)) / math.sqrt(math.pi)


def sphere_mu_approx(n: int) -> float:
    # The cruder 1/sqrt(2 pi n) approximation; half the true asymptote.
    return 1.0 / math.sqrt(2.0 * math.pi * n)


@dataclass(frozen=True)
class DirectionSampler:
    dim: int
    kind = "abstract"
    requires_gradient = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def sample_batch(self, rng: np.random.Generator, m: int, gradient=None) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, gradient=None) -> np.ndarray:
        """One direction; the same stream as ``sample_batch(rng, 1)[0]``."""
        return self.sample_batch(rng, 1, gradient)[0]

    def d_norm(self, g) -> float:
        raise NotImplementedError

    def theoretical_mu(self) -> float:
        raise NotImplementedError

    def _check_vector(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape != (self.dim,):
            raise ValueError(f"vector has shape {g.shape}, expected ({self.dim},)")
        return g


@dataclass(frozen=True)
class SphereSampler(DirectionSampler):
    kind = "sphere"

    def sample_batch(self, rng, m, gradient=None):
        z = rng.standard_normal((m, self.dim))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def d_norm(self, g):
        return float(np.linalg.norm(self._check_vector(g)))

    def theoretical_mu(self):
        return sphere_mu(self.dim)


@dataclass(frozen=True)
class GaussianSampler(DirectionSampler):
    """s ~ N(0, I/n), so that E||s||^2 = 1."""

    kind = "gaussian"

    def sample_batch(self, rng, m, gradient=None):
        return rng.standard_normal((m, self.dim)) / math.sqrt(self.dim)

    def d_norm(self, g):
        return float(np.linalg.norm(self._check_vector(g)))

    def theoretical_mu(self):
        return math.sqrt(2.0 / (self.dim * math.pi))


def _check_probabilities(p, n):
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"probability vector has shape {p.shape}, expected ({n},)")
    if np.any(p <= 0) or not math.isclose(float(p.sum()), 1.0, abs_tol=1e-12):
        raise ValueError("probabilities must be positive and sum to 1")
    p = p.copy()
    p.flags.writeable = False
    return p


@dataclass(frozen=True)
class CoordinateSampler(DirectionSampler):
    """+-e_i with P(axis i) = p_i (uniform when ``p`` is omitted).

    The uniform law uses the l1 norm with mu = 1/n; a weighted law uses the
    weighted norm sum p_i |g_i| with mu = 1.
    """

    p: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        super().__post_init__()
        if self.p is not None:
            object.__setattr__(self, "p", _check_probabilities(self.p, self.dim))

    @property
    def kind(self):
        return "coord_uniform" if self.p is None else "coord_weighted"

    def _axes(self, rng, m):
        if self.p is None:
            axis = rng.integers(self.dim, size=m)
        else:
            axis = rng.choice(self.dim, size=m, p=self.p)
        sign = 2.0 * rng.integers(2, size=m) - 1.0
        return axis, sign

    def sample_batch(self, rng, m, gradient=None):
        axis, sign = self._axes(rng, m)
        s = np.zeros((m, self.dim))
        s[np.arange(m), axis] = sign
        return s

    def d_norm(self, g):
        g = np.abs(self._check_vector(g))
        if self.p is None:
            return float(g.sum())
        return float(self.p @ g)

    def theoretical_mu(self):
        return 1.0 / self.dim if self.p is None else 1.0


@dataclass(frozen=True)
class OrthoBasisSampler(DirectionSampler):
    """+-d_i for the columns d_i of an orthonormal ``basis``, P(i) = p_i."""

    basis: np.ndarray = field(default=None, compare=False)
    p: np.ndarray = field(default=None, compare=False)
    kind = "ortho_basis"

    def __post_init__(self):
        super().__post_init__()
        basis = np.array(self.basis, dtype=float)
        n = self.dim
        if basis.shape != (n, n):
            raise ValueError(f"basis has shape {basis.shape}, expected ({n}, {n})")
        if np.max(np.abs(basis.T @ basis - np.eye(n))) > 1e-10:
            raise ValueError("basis columns are not orthonormal")
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        p = np.full(n, 1.0 / n) if self.p is None else self.p
        object.__setattr__(self, "p", _check_probabilities(p, n))

    def sample_batch(self, rng, m, gradient=None):
        axis = rng.choice(self.dim, size=m, p=self.p)
        sign = 2.0 * rng.integers(2, size=m) - 1.0
        return self.basis[:, axis].T * sign[:, None]

    def d_norm(self, g):
        return float(self.p @ np.abs(self._check_vector(g) @ self.basis))

    def theoretical_mu(self):
        return 1.0


# ---------------------------------------------------------------------------
# Gradient-oracle laws


@dataclass(frozen=True)
class GradientOracleSampler(DirectionSampler):
    requires_gradient = True

    def _gradients(self, gradient, m):
        if gradient is None:
            raise ValueError(f"{self.kind} needs the current gradient")
        g = np.asarray(gradient, dtype=float)
        if g.shape[-1:] != (self.dim,):
            raise ValueError(f"gradient has shape {g.shape}, expected last axis {self.dim}")
        return np.broadcast_to(g, (m, self.dim))

    def d_norm(self, g):
        return float(np.linalg.norm(self._check_vector(g)))

    def theoretical_mu(self):
        raise UnsupportedOperation(f"{self.kind} has no distribution constant")


def _unit_rows(g):
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise StationaryPointError("zero gradient")
    return g / norms, norms


@dataclass(frozen=True)
class NGDOracle(GradientOracleSampler):
    kind = "oracle_ngd"

    def sample_batch(self, rng, m, gradient=None):
        return _unit_rows(self._gradients(gradient, m))[0]


@dataclass(frozen=True)
class SignGDOracle(GradientOracleSampler):
    kind = "oracle_signgd"

    def sample_batch(self, rng, m, gradient=None):
        return np.sign(self._gradients(gradient, m))


@dataclass(frozen=True)
class NRCDOracle(GradientOracleSampler):
    """sign(g_i) e_i with i uniform; the zero vector when g_i = 0."""

    kind = "oracle_nrcd"

    def sample_batch(self, rng, m, gradient=None):
        g = self._gradients(gradient, m)
        axis = rng.integers(self.dim, size=m)
        s = np.zeros((m, self.dim))
        rows = np.arange(m)
        s[rows, axis] = np.sign(g[rows, axis])
        return s


@dataclass(frozen=True)
class NSGDOracle(GradientOracleSampler):
    """g/||g|| plus zero-mean Gaussian noise with E||noise||^2 = noise_scale^2."""

    noise_scale: float = 0.0
    kind = "oracle_nsgd"

    def __post_init__(self):
        super().__post_init__()
        if not self.noise_scale >= 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale!r}")

    def sample_batch(self, rng, m, gradient=None):
        unit, _ = _unit_rows(self._gradients(gradient, m))
        noise = rng.standard_normal((m, self.dim)) * (self.noise_scale / math.sqrt(self.dim))
        return unit + noise


_KINDS = {
    "sphere": SphereSampler,
    "gaussian": GaussianSampler,
    "coord_uniform": CoordinateSampler,
    "coord_weighted": CoordinateSampler,
    "ortho_basis": OrthoBasisSampler,
    "oracle_ngd": NGDOracle,
    "oracle_signgd": SignGDOracle,
    "oracle_nrcd": NRCDOracle,
    "oracle_nsgd": NSGDOracle,
}


def make_sampler(kind: str, dim: int, **params) -> DirectionSampler:
    """Build a sampler by name, e.g. ``make_sampler("coord_weighted", 3, p=[...])``."""
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown direction law {kind!r}") from None
    if kind == "coord_weighted" and params.get("p") is None:
        raise ValueError("coord_weighted needs a probability vector p")
    if kind == "coord_uniform" and params.get("p") is not None:
        raise ValueError("coord_uniform takes no probability vector")
    return cls(dim, **params)


# ---------------------------------------------------------------------------
# Monte-Carlo checks


def _chunks(n_samples, size=MC_CHUNK):
    done = 0
    while done < n_samples:
        m = min(size, n_samples - done)
        yield m
        done += m


def _mc_mean(values_of_chunk, n_samples, chunk_size=MC_CHUNK):
    if n_samples <= 0:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    # chunk-wise mean / sum of squared deviations, merged pairwise (Chan et al.)
    count, mean, m2 = 0, 0.0, 0.0
    for m in _chunks(n_samples, chunk_size):
        v = values_of_chunk(m)
        mean_c = float(v.mean())
        dev = v - mean_c
        m2_c = float(dev @ dev)
        delta = mean_c - mean
        total = count + m
        mean += delta * m / total
        m2 += m2_c + delta * delta * count * m / total
        count = total
    if count < 2:
        return mean, 0.0
    return mean, math.sqrt(m2 / (count - 1) / count)


def _require_random_law(sampler):
    if sampler.requires_gradient:
        raise UnsupportedOperation(f"{sampler.kind} is a gradient oracle, not a random law")


def gamma_check(sampler: DirectionSampler, n_samples: int, rng) -> tuple[float, float]:
    """Sample mean and standard error of ||s||_2^2 (should be 1)."""
    _require_random_law(sampler)

    def chunk(m):
        s = sampler.sample_batch(rng, m)
        return np.einsum("ij,ij->i", s, s)

    return _mc_mean(chunk, n_samples)


def mc_expected_abs_inner(sampler: DirectionSampler, g, n_samples: int, rng) -> tuple[float, float]:
    """Monte-Carlo estimate of E|<g, s>| with its standard error."""
    _require_random_law(sampler)
    g = sampler._check_vector(g)
    if not np.any(g):
        raise ValueError("g must be nonzero")
    return _mc_mean(lambda m: np.abs(sampler.sample_batch(rng, m) @ g), n_samples)


def averaged_direction_sq_norm(
    sampler: DirectionSampler, tau: int, n_samples: int, rng
) -> tuple[float, float]:
    """Monte-Carlo mean of ||(1/tau) sum_i s_i||^2 over independent draws.

    Equals 1/tau for any mean-zero law with E||s||^2 = 1.
    """
    _require_random_law(sampler)
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")

    def chunk(m):
        s = sampler.sample_batch(rng, m * tau).reshape(m, tau, sampler.dim).mean(axis=1)
        return np.einsum("ij,ij->i", s, s)

    return _mc_mean(chunk, n_samples, max(1, MC_CHUNK // tau))
