"""Kinetic-model primitives.

Turn-angle kernels on the unit sphere, sphere quadrature, the first
nontrivial eigenvalue of the turn operator, heavy-tailed run-time
sampling, reorientation sampling, specular reflection and the constants
of the macroscopic fractional chemotaxis equation.

Only n = 1 (the two-point sphere {-1, +1}) and n = 2 (the circle) are
supported for quadrature and sampling; :func:`sphere_area` works for any n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import special

from .errors import (
    ConfigurationError,
    DomainError,
    InvariantError,
    SamplerError,
    ValidationError,
)

NORMALIZATION_TOL = 1e-10
NU1_NODES = 4096
DEFAULT_NODES = 64
MAX_REJECTION_ROUNDS = 1000


# ---------------------------------------------------------------------------
# sphere geometry
# ---------------------------------------------------------------------------

def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n.

    n = 1 gives the counting measure of {-1, +1}, i.e. 2.  For n >= 2 the
    standard 2 pi^(n/2) / Gamma(n/2) is used for every n, odd or even.
    """
    if isinstance(n, bool) or int(n) != n:
        raise DomainError(f"dimension must be an integer, got {n!r}")
    n = int(n)
    if n <= 0:
        raise DomainError(f"dimension must be >= 1, got {n}")
    if n == 1:
        return 2.0
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes on the unit sphere with positive weights summing to |S|."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape[0] != weights.size:
            raise ConfigurationError("one weight per node required")
        if np.any(weights <= 0):
            raise ValidationError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    @classmethod
    def two_point(cls) -> "SphereQuadrature":
        return cls(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]))

    @classmethod
    def circle(cls, m: int = DEFAULT_NODES, offset: float = 0.0) -> "SphereQuadrature":
        """Equally spaced angles ``2 pi (j + offset) / m`` with weights ``2 pi / m``."""
        if m < 2:
            raise ConfigurationError(f"circle quadrature needs m >= 2, got {m}")
        phi = 2.0 * np.pi * (np.arange(m) + offset) / m
        nodes = np.column_stack([np.cos(phi), np.sin(phi)])
        return cls(nodes, np.full(m, 2.0 * np.pi / m))

    @classmethod
    def for_dimension(cls, n: int, m: int = DEFAULT_NODES) -> "SphereQuadrature":
        if n == 1:
            return cls.two_point()
        if n == 2:
            return cls.circle(m)
        raise ConfigurationError(f"quadrature only available for n in {{1, 2}}, got {n}")

    def angles_to(self, axis) -> np.ndarray:
        """Angular separation in [0, pi] between every node and ``axis``."""
        axis = np.asarray(axis, dtype=float)
        c = np.clip(self.nodes @ axis, -1.0, 1.0)
        if self.n == 2:
            # atan2 keeps full precision near 0 and pi
            s = np.abs(self.nodes[:, 0] * axis[1] - self.nodes[:, 1] * axis[0])
            return np.arctan2(s, c)
        return np.arccos(c)


# ---------------------------------------------------------------------------
# turn-angle kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TurnKernel:
    """Reorientation density as a function of the angle between old and new direction.

    ``profile`` maps angles in [0, pi] to nonnegative densities with respect
    to the surface measure of the sphere in dimension ``n``.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    n: int = 2
    name: str = "custom"
    kappa: float | None = None
    _envelope: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError(f"kernel dimension must be 1 or 2, got {self.n}")
        grid = np.linspace(0.0, np.pi, 4097)
        values = np.asarray(self.profile(grid), dtype=float)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError(f"kernel {self.name!r} has negative or non-finite values")
        object.__setattr__(self, "_envelope", float(values.max()))

    def __call__(self, theta):
        return np.asarray(self.profile(np.asarray(theta, dtype=float)), dtype=float)

    @classmethod
    def uniform(cls, n: int = 2) -> "TurnKernel":
        c = 1.0 / sphere_area(n)
        return cls(lambda t: np.full(np.shape(t), c), n=n, name="uniform")

    @classmethod
    def cosine(cls, n: int = 2) -> "TurnKernel":
        """Forward-biased kernel with nu1 = 1/2 in both supported dimensions.

        n = 2: (1 + cos t) / (2 pi).  n = 1: (2 + cos t) / 4, i.e. keep the
        direction with probability 3/4.
        """
        if n == 2:
            return cls(lambda t: (1.0 + np.cos(t)) / (2.0 * np.pi), n=2, name="cosine")
        if n == 1:
            return cls(lambda t: (2.0 + np.cos(t)) / 4.0, n=1, name="cosine")
        raise ConfigurationError(f"kernel dimension must be 1 or 2, got {n}")

    @classmethod
    def vonmises(cls, kappa: float, n: int = 2) -> "TurnKernel":
        if not kappa >= 0:
            raise ValidationError(f"von Mises concentration must be >= 0, got {kappa}")
        kappa = float(kappa)
        if n == 2:
            # exp(k (cos t - 1)) / (2 pi I0e(k)) avoids overflow at large k
            c = 1.0 / (2.0 * np.pi * special.i0e(kappa))
            return cls(lambda t: c * np.exp(kappa * (np.cos(t) - 1.0)), n=2,
                       name="vonmises", kappa=kappa)
        if n == 1:
            c = 1.0 / (1.0 + math.exp(-2.0 * kappa))
            return cls(lambda t: c * np.exp(kappa * (np.cos(t) - 1.0)), n=1,
                       name="vonmises", kappa=kappa)
        raise ConfigurationError(f"kernel dimension must be 1 or 2, got {n}")

    @classmethod
    def from_spec(cls, spec: dict, n: int) -> "TurnKernel":
        kind = spec.get("type", "uniform")
        if kind == "uniform":
            return cls.uniform(n)
        if kind == "cosine":
            return cls.cosine(n)
        if kind == "vonmises":
            return cls.vonmises(spec.get("kappa", 1.0), n)
        raise ConfigurationError(f"unknown kernel type {kind!r}")

    def exact_nu1(self) -> float | None:
        """Closed-form nu1 for the shipped kernels, None for custom ones."""
        if self.name == "uniform":
            return 0.0
        if self.name == "cosine":
            return 0.5
        if self.name == "vonmises":
            if self.n == 2:
                return float(special.i1e(self.kappa) / special.i0e(self.kappa))
            return math.tanh(self.kappa)
        return None

    # -- sampling -------------------------------------------------------

    def sample_turn_angles(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Signed turn angles in (-pi, pi] with density ``profile(|phi|)`` (n = 2)."""
        if self.name == "uniform":
            return rng.uniform(-np.pi, np.pi, size)
        if self.name == "vonmises":
            return rng.vonmises(0.0, self.kappa, size)
        bound = 1.0001 * self._envelope
        out = np.empty(size)
        todo = np.arange(size)
        for _ in range(MAX_REJECTION_ROUNDS):
            if todo.size == 0:
                return out
            phi = rng.uniform(-np.pi, np.pi, todo.size)
            keep = rng.random(todo.size) * bound <= self(np.abs(phi))
            out[todo[keep]] = phi[keep]
            todo = todo[~keep]
        if todo.size:
            raise SamplerError(
                f"rejection sampler for kernel {self.name!r} left {todo.size} draws "
                f"after {MAX_REJECTION_ROUNDS} rounds")
        return out


def _check_dims(kernel: TurnKernel, quad: SphereQuadrature):
    if kernel.n != quad.n:
        raise ConfigurationError(
            f"kernel dimension {kernel.n} does not match quadrature dimension {quad.n}")


def _e1(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


def kernel_normalization(kernel: TurnKernel, quad: SphereQuadrature | None = None) -> float:
    """Quadrature value of the integral of l(|v - e1|) over the sphere."""
    if quad is None:
        quad = SphereQuadrature.for_dimension(kernel.n, NU1_NODES)
    _check_dims(kernel, quad)
    theta = quad.angles_to(_e1(quad.n))
    return float(np.sum(quad.weights * kernel(theta)))


def eigenvalue_nu1(kernel: TurnKernel, quad: SphereQuadrature | None = None) -> float:
    """First-moment eigenvalue of the turn operator (eigenfunctions v_j).

    Raises :class:`ValidationError` if the kernel is not normalized to
    within 1e-10 on the given quadrature.
    """
    if quad is None:
        quad = SphereQuadrature.for_dimension(kernel.n, NU1_NODES)
    _check_dims(kernel, quad)
    norm = kernel_normalization(kernel, quad)
    if abs(norm - 1.0) > NORMALIZATION_TOL:
        raise ValidationError(f"kernel {kernel.name!r} is not normalized (integral = {norm!r})")
    theta = quad.angles_to(_e1(quad.n))
    return float(np.sum(quad.weights * kernel(theta) * quad.nodes[:, 0]))


def turn_matrix(kernel: TurnKernel, quad: SphereQuadrature) -> np.ndarray:
    """Discrete turn operator ``(T phi)_j = sum_k l(angle_jk) phi_k w_k``.

    The kernel is rescaled symmetrically so that ``T 1 = 1`` and
    ``sum_j w_j (T phi)_j = sum_k w_k phi_k`` hold to rounding error on
    any quadrature, not just on equally spaced nodes.
    """
    _check_dims(kernel, quad)
    c = np.clip(quad.nodes @ quad.nodes.T, -1.0, 1.0)
    K = kernel(np.arccos(c))
    w = quad.weights
    d = np.ones(w.size)
    for _ in range(500):
        row = (K * d[None, :] * w[None, :]).sum(axis=1) * d
        if np.max(np.abs(row - 1.0)) < 1e-15:
            break
        d = d / np.sqrt(row)
    Ks = d[:, None] * K * d[None, :]
    return Ks * w[None, :]


# ---------------------------------------------------------------------------
# constants and exponents
# ---------------------------------------------------------------------------

def gamma_reflection(alpha: float) -> float:
    """Gamma(1 - alpha) through the reflection formula, for 1 < alpha < 2."""
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"gamma_reflection needs 1 < alpha < 2, got {alpha!r}")
    return math.pi / (math.sin(math.pi * alpha) * math.gamma(alpha))


def scaling_exponents(alpha: float, gamma: float = 0.5) -> tuple[Fraction, Fraction]:
    """Return ``(mu, varrho)`` as exact rationals of the binary value of ``alpha``.

    mu = (2 - alpha) / (2 (alpha - 1)) and varrho = 1 / (alpha - 1), so
    ``varrho - 2 mu == 1`` holds exactly.  Floating-point evaluation of the
    two formulas violates the identity for roughly a fifth of all alpha.
    """
    if not 1.0 < alpha <= 2.0:
        raise DomainError(f"scaling exponents need 1 < alpha <= 2, got {alpha!r}")
    if gamma != 0.5:
        raise DomainError(f"only gamma = 1/2 is supported, got {gamma!r}")
    a = Fraction(alpha)
    mu = (2 - a) / (2 * (a - 1))
    varrho = 1 / (a - 1)
    return mu, varrho


def macro_constants(params: "ModelParams", nu1: float, n: int) -> tuple[float, float]:
    """Fractional diffusivity ``C_alpha`` and chemotactic sensitivity ``chi``."""
    alpha = params.alpha
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"C_alpha needs 1 < alpha < 2, got {alpha!r}")
    if not nu1 < 1.0:
        raise ValidationError(f"nu1 must be < 1, got {nu1!r}")
    area = sphere_area(n)
    c_alpha = (
        -(params.tau0 * params.c0) ** (alpha - 1) * (alpha - 1) * gamma_reflection(alpha)
        * (n * n * nu1 - area) / (n * area * (nu1 - 1.0))
    )
    chi = params.tau1 * params.c0 / (n * params.tau0)
    return c_alpha, chi


@dataclass(frozen=True)
class ModelParams:
    """Kinetic and macroscopic model parameters (all dimensionless)."""

    alpha: float = 1.5
    tau0: float = 1.0
    tau1: float = 0.0
    c0: float = 1.0
    epsilon: float = 0.1
    nu1: float = 0.0
    n: int = 1
    gamma: float = 0.5

    def __post_init__(self):
        problems = []
        if not 1.0 < self.alpha <= 2.0:
            problems.append(f"alpha must lie in (1, 2], got {self.alpha!r}")
        if not self.tau0 > 0:
            problems.append(f"tau0 must be > 0, got {self.tau0!r}")
        if not self.c0 > 0:
            problems.append(f"c0 must be > 0, got {self.c0!r}")
        if not 0.0 < self.epsilon <= 1.0:
            problems.append(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if not self.nu1 < 1.0:
            problems.append(f"nu1 must be < 1, got {self.nu1!r}")
        if self.gamma != 0.5:
            problems.append(f"gamma is fixed to 1/2, got {self.gamma!r}")
        if self.n not in (1, 2):
            problems.append(f"n must be 1 or 2, got {self.n!r}")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def mu(self) -> float:
        return float(scaling_exponents(self.alpha, self.gamma)[0])

    @property
    def varrho(self) -> float:
        return float(scaling_exponents(self.alpha, self.gamma)[1])

    @property
    def C_alpha(self) -> float:
        return macro_constants(self, self.nu1, self.n)[0]

    @property
    def chi(self) -> float:
        return self.tau1 * self.c0 / (self.n * self.tau0)

    @property
    def scattering_rate(self) -> float:
        """B = (alpha - 1) / tau0, the leading tumbling rate in the layer."""
        return (self.alpha - 1.0) / self.tau0


# ---------------------------------------------------------------------------
# sampling and reflection
# ---------------------------------------------------------------------------

def lomax_from_uniform(u, alpha: float, b):
    """Inverse survival function of the Lomax law ``(b / (b + t))**alpha``."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise InvariantError("run-time scale must be positive; clamp upstream")
    return b * (np.asarray(u, dtype=float) ** (-1.0 / alpha) - 1.0)


def sample_run_time(rng: np.random.Generator, alpha: float, b, size=None):
    """Draw run times with hazard ``alpha / (b + t)`` by inverse transform.

    ``U`` is taken in (0, 1] so that a zero uniform never produces inf.
    """
    if size is None:
        size = np.shape(b) or None
    u = 1.0 - rng.random(size)
    return lomax_from_uniform(u, alpha, b)


def sample_direction(rng: np.random.Generator, kernel: TurnKernel, v_old) -> np.ndarray:
    """New unit directions drawn from ``l(|v_old - eta|)``; rows of ``v_old`` are independent."""
    v_old = np.asarray(v_old, dtype=float)
    single = v_old.ndim == 1
    v = np.atleast_2d(v_old)
    if v.shape[1] != kernel.n:
        raise ConfigurationError(
            f"direction dimension {v.shape[1]} does not match kernel dimension {kernel.n}")
    m = v.shape[0]
    if kernel.n == 1:
        keep = float(kernel(np.array(0.0)))
        flip = rng.random(m) >= keep
        out = np.where(flip[:, None], -v, v)
    else:
        phi = kernel.sample_turn_angles(rng, m)
        c, s = np.cos(phi), np.sin(phi)
        out = np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]])
        out /= np.linalg.norm(out, axis=1)[:, None]
    return out[0] if single else out


def specular_reflect(v, normal, tol: float = 1e-9) -> np.ndarray:
    """Mirror ``v`` across the plane orthogonal to ``normal``: v - 2 (normal . v) normal."""
    v = np.asarray(v, dtype=float)
    nu = np.asarray(normal, dtype=float)
    for name, arr in (("v", v), ("normal", nu)):
        if np.any(np.abs(np.linalg.norm(arr, axis=-1) - 1.0) > tol):
            raise ValidationError(f"{name} must have unit length")
    dot = np.sum(v * nu, axis=-1, keepdims=True)
    return v - 2.0 * dot * nu


# ---------------------------------------------------------------------------
# chemical field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChemicalField:
    """Static attractant concentration with its exact gradient.

    Both callables take positions of shape (m, n) and return shapes (m,)
    and (m, n) respectively.
    """

    rho: Callable[[np.ndarray], np.ndarray]
    grad_rho: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, value: float = 0.0) -> "ChemicalField":
        return cls(lambda x: np.full(np.shape(x)[0], float(value)),
                   lambda x: np.zeros(np.shape(x)), "none", {"value": value})

    @classmethod
    def linear(cls, slope) -> "ChemicalField":
        s = np.atleast_1d(np.asarray(slope, dtype=float))

        def grad(x):
            x = np.atleast_2d(x)
            return np.broadcast_to(s[: x.shape[1]], x.shape).copy()

        return cls(lambda x: np.atleast_2d(x) @ s[: np.shape(np.atleast_2d(x))[1]],
                   grad, "linear", {"slope": s.tolist()})

    @classmethod
    def gaussian(cls, amplitude=1.0, center=(0.5,), width=0.1) -> "ChemicalField":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        a, w2 = float(amplitude), float(width) ** 2

        def rho(x):
            d = np.atleast_2d(x) - c[None, :]
            return a * np.exp(-np.sum(d * d, axis=1) / (2 * w2))

        def grad(x):
            d = np.atleast_2d(x) - c[None, :]
            return (-d / w2) * rho(x)[:, None]

        return cls(rho, grad, "gaussian",
                   {"amplitude": a, "center": c.tolist(), "width": float(width)})

    @classmethod
    def cosine(cls, amplitude=1.0, wavenumber=math.pi) -> "ChemicalField":
        a, k = float(amplitude), float(wavenumber)

        def rho(x):
            return a * np.cos(k * np.atleast_2d(x)[:, 0])

        def grad(x):
            x = np.atleast_2d(x)
            g = np.zeros(x.shape)
            g[:, 0] = -a * k * np.sin(k * x[:, 0])
            return g

        return cls(rho, grad, "cosine", {"amplitude": a, "wavenumber": k})

    @classmethod
    def from_spec(cls, spec: dict | None) -> "ChemicalField":
        spec = dict(spec or {})
        preset = spec.pop("preset", "none")
        if preset == "none":
            return cls.constant(spec.get("value", 0.0))
        if preset == "linear":
            return cls.linear(spec.get("slope", 1.0))
        if preset == "gaussian":
            return cls.gaussian(**spec)
        if preset == "cosine":
            return cls.cosine(**spec)
        raise ConfigurationError(f"unknown rho preset {preset!r}")

    def check_gradient(self, points, step: float = 1e-5) -> float:
        """Largest relative discrepancy between ``grad_rho`` and central differences."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grad_rho(x)
        fd = np.empty_like(g)
        for j in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[j] = step
            fd[:, j] = (self.rho(x + e) - self.rho(x - e)) / (2 * step)
        scale = max(1.0, float(np.max(np.abs(g))))
        return float(np.max(np.abs(fd - g)) / scale)
