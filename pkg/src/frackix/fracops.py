"""Grünwald–Letnikov fractional operators on a uniform 1D cell grid.

Cells ``j = 0..N-1`` have width ``h`` and centers ``(j + 1/2) h``.  The
reflecting variants use the Neumann image method: the field is extended
evenly across both walls, which makes it even and ``2N``-periodic, and the
Grünwald sums are taken over that extension.  The infinite image sums are
evaluated exactly up to ``64 * 2N`` terms and with a Hurwitz-zeta tail
beyond, then the residual weight sum is removed so that every stencil
annihilates constants.

Sign conventions (symbols for ``exp(i k x)``)::

    left   D_L^b          (i k)^b
    right  -D_R^b        -(-i k)^b     (so both reduce to d/dx at b = 1)
    symmetric gradient    average of the two
    divergence of symmetric gradient   cos(pi a / 2) |k|^a,  a = b + 1

so ``div . grad^(a-1) = c(a) (-Laplacian)^(a/2)`` with ``c(a) = cos(pi a/2)``,
which equals the ordinary Laplacian at ``a = 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ArgumentError, ConfigurationError, DomainError

TAIL_PERIODS = 64
MIN_EXACT_TERMS = 4096


@dataclass(frozen=True)
class FracOperatorMatrix:
    """Dense discrete fractional operator with its provenance tags."""

    matrix: np.ndarray
    order: float
    h: float
    bc_variant: str = "reflecting"
    kind: str = "divgrad"

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    def __matmul__(self, u):
        return apply_operator(self, u)

    def gershgorin_radius(self) -> float:
        return float(np.max(np.sum(np.abs(self.matrix), axis=1)))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")


def laplacian_constant(alpha: float) -> float:
    """``c(alpha)`` in ``div . grad^(alpha-1) = c(alpha) (-Laplacian)^(alpha/2)``."""
    return float(np.cos(np.pi * alpha / 2.0))


def grunwald_weights(order: float, count: int) -> np.ndarray:
    """First ``count`` Grünwald weights ``g_k = (-1)^k binom(order, k)``."""
    if not order > 0:
        raise DomainError(f"Grünwald order must be > 0, got {order!r}")
    if count < 1:
        raise ArgumentError(f"need at least one weight, got count={count}")
    k = np.arange(1, count)
    return np.concatenate([[1.0], np.cumprod((k - 1.0 - order) / k)])


def _wrapped_weights(order: float, period: int) -> np.ndarray:
    """``P_m = sum over k = m (mod period) of g_k`` for the infinite weight sequence."""
    n_exact = max(TAIL_PERIODS * period, MIN_EXACT_TERMS)
    g = grunwald_weights(order, n_exact)
    wrapped = np.bincount(np.arange(n_exact) % period, weights=g, minlength=period)
    inv_gamma = special.rgamma(-order)
    if inv_gamma != 0.0:
        # g_k ~ k^(-1-b) / Gamma(-b) * (1 + b (1 + b) / (2 k)) for k >= n_exact
        m = np.arange(period)
        first = n_exact + (m - n_exact) % period
        q = first / period
        s = 1.0 + order
        tail = period ** (-s) * special.zeta(s, q)
        tail += 0.5 * order * (1.0 + order) * period ** (-s - 1.0) * special.zeta(s + 1.0, q)
        wrapped += inv_gamma * tail
    # the full sequence sums to (1 - 1)^b = 0
    wrapped -= wrapped.sum() / period
    return wrapped


def _check_grid(alpha, n_cells, h, min_cells=2):
    if not 1.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (1, 2], got {alpha!r}")
    if int(n_cells) != n_cells or n_cells < min_cells:
        raise ConfigurationError(f"need at least {min_cells} cells, got {n_cells!r}")
    if not h > 0:
        raise ConfigurationError(f"grid spacing must be > 0, got {h!r}")


def _face_one_sided(alpha, n_cells, bc):
    """Left and right Grünwald stencils at all N + 1 faces (without the h scaling).

    Face ``f`` sits between cells ``f - 1`` and ``f``.  The left stencil at
    face f reads ``u[f - k]`` and the right one ``u[f - 1 + k]``; the half
    cell shift makes both exact central differences at order one.
    """
    beta = alpha - 1.0
    f = np.arange(n_cells + 1)[:, None]
    j = np.arange(n_cells)[None, :]
    if bc == "reflecting":
        period = 2 * n_cells
        P = _wrapped_weights(beta, period)
        left = P[(f - j) % period] + P[(f + j + 1) % period]
        right = P[(j - f + 1) % period] + P[(-j - f) % period]
    elif bc == "absorbing":
        g = grunwald_weights(beta, n_cells + 2)
        kl, kr = f - j, j - f + 1
        left = np.where(kl >= 0, g[np.clip(kl, 0, None)], 0.0)
        right = np.where(kr >= 0, g[np.clip(kr, 0, None)], 0.0)
    else:
        raise ConfigurationError(f"unknown boundary variant {bc!r}")
    return left, right


def build_face_gradient_matrix(alpha: float, n_cells: int, h: float,
                               side: str = "symmetric",
                               bc: str = "reflecting") -> FracOperatorMatrix:
    """Fractional gradient of order ``alpha - 1`` evaluated at the ``N + 1`` cell faces.

    With ``bc="reflecting"`` the two wall rows are exactly zero (no flux
    through the walls); for the symmetric side they vanish analytically
    anyway by the mirror symmetry of the even extension.
    """
    _check_grid(alpha, n_cells, h)
    left, right = _face_one_sided(alpha, n_cells, bc)
    if side == "left":
        m = left
    elif side == "right":
        m = -right
    elif side == "symmetric":
        m = 0.5 * (left - right)
    else:
        raise ConfigurationError(f"unknown side {side!r}")
    m = m * h ** (1.0 - alpha)
    if bc == "reflecting":
        m[0, :] = 0.0
        m[-1, :] = 0.0
    return FracOperatorMatrix(m, alpha - 1.0, h, bc, f"face-gradient-{side}")


def build_frac_gradient_matrix(alpha: float, n_cells: int, h: float,
                               side: str = "left",
                               bc: str = "reflecting") -> FracOperatorMatrix:
    """Cell-centred fractional gradient of order ``alpha - 1`` (unshifted Grünwald).

    ``side="left"`` is the backward first difference at alpha = 2 and
    ``side="right"`` the forward one.  The right matrix equals
    ``-J @ left @ J`` with ``J`` the index reversal.
    """
    _check_grid(alpha, n_cells, h, min_cells=4)
    beta = alpha - 1.0
    i = np.arange(n_cells)[:, None]
    j = np.arange(n_cells)[None, :]
    if bc == "reflecting":
        period = 2 * n_cells
        P = _wrapped_weights(beta, period)
        left = P[(i - j) % period] + P[(i + j + 1) % period]
        right = -(P[(j - i) % period] + P[(-1 - i - j) % period])
    elif bc == "absorbing":
        g = grunwald_weights(beta, n_cells + 1)
        left = np.where(i >= j, g[np.clip(i - j, 0, None)], 0.0)
        right = -np.where(j >= i, g[np.clip(j - i, 0, None)], 0.0)
    else:
        raise ConfigurationError(f"unknown boundary variant {bc!r}")
    if side == "left":
        m = left
    elif side == "right":
        m = right
    elif side == "symmetric":
        m = 0.5 * (left + right)
    else:
        raise ConfigurationError(f"unknown side {side!r}")
    return FracOperatorMatrix(m * h ** (-beta), beta, h, bc, f"gradient-{side}")


def build_divgrad_matrix(alpha: float, n_cells: int, h: float,
                         side: str = "symmetric",
                         bc: str = "reflecting") -> FracOperatorMatrix:
    """Conservative ``d/dx`` of the face gradient: ``(F[f+1] - F[f]) / h``."""
    grad = build_face_gradient_matrix(alpha, n_cells, h, side, bc)
    a = (grad.matrix[1:] - grad.matrix[:-1]) / h
    return FracOperatorMatrix(a, alpha, h, bc, f"divgrad-{side}")


def build_reflecting_divgrad_matrix(alpha: float, n_cells: int, h: float,
                                    side: str = "symmetric") -> FracOperatorMatrix:
    """Zero-flux ``div . grad^(alpha-1)``; columns sum to zero and alpha = 2 gives the Neumann Laplacian."""
    return build_divgrad_matrix(alpha, n_cells, h, side, "reflecting")


def apply_operator(op, u) -> np.ndarray:
    m = op.matrix if isinstance(op, FracOperatorMatrix) else np.asarray(op)
    u = np.asarray(u, dtype=float)
    if u.shape[0] != m.shape[1]:
        raise ArgumentError(f"operator acts on {m.shape[1]} values, got {u.shape[0]}")
    return m @ u
