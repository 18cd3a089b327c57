"""Monte Carlo simulation of the run-and-tumble process with Lomax run times.

Particles move in straight lines at constant speed, reflect specularly at
the wall, and at the end of each run pick a new direction from the turn
kernel and a new run time whose scale depends on the attractant gradient
seen along the new direction.

Two unit systems are supported.  In ``"kinetic"`` units the speed is ``c0``
and the run scale is ``b = tau0 + tau1 sqrt(eps) c0 v . grad rho``.  In
``"macro"`` units (the default) the speed is ``c0 / sqrt(eps)`` and the
scale is ``eps^(1 + mu) * b``; under this scaling the process converges as
``eps -> 0`` to the fractional chemotaxis equation solved in :mod:`macro`
with the same ``tau0, tau1, c0, alpha``.

The ensemble is split into fixed-size chunks.  Chunk ``i`` draws from
``SeedSequence(seed).spawn(n_chunks)[i]`` and histograms are integer
counts, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (ArgumentError, ConfigurationError, GeometryError,
                     InvariantError, RunawayError)
from .kinetic import (ChemicalField, ModelParams, TurnKernel, sample_direction,
                      sample_run_time, specular_reflect)

MAX_REFLECTIONS = 10**6
NUDGE = 1e-14
CHUNK_SIZE = 8192
MIN_SCALE_FRACTION = 0.01
THREADS_ENV = "FRACKIX_THREADS"


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainGeometry:
    kind: str = "interval"
    extent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("interval", "disc"):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}; use 'interval' or 'disc'")
        if not self.extent > 0:
            raise GeometryError(f"domain extent must be > 0, got {self.extent!r}")

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def volume(self) -> float:
        return self.extent if self.kind == "interval" else math.pi * self.extent**2

    def center(self) -> np.ndarray:
        return np.array([self.extent / 2.0]) if self.kind == "interval" else np.zeros(2)

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "interval":
            return (x[:, 0] >= -tol * self.extent) & (x[:, 0] <= self.extent * (1 + tol))
        return np.linalg.norm(x, axis=1) <= self.extent * (1 + tol)

    def inner_normal(self, xi) -> np.ndarray:
        """Unit inner normal at boundary points ``xi``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.kind == "interval":
            return np.where(xi[:, :1] < self.extent / 2.0, 1.0, -1.0)
        r = np.linalg.norm(xi, axis=1, keepdims=True)
        if np.any(r == 0):
            raise GeometryError("the disc centre has no boundary normal")
        return -xi / r

    def on_boundary(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "interval":
            return (x[:, 0] <= tol * self.extent) | (x[:, 0] >= self.extent * (1 - tol))
        return np.linalg.norm(x, axis=1) >= self.extent * (1 - tol)

    def default_edges(self, bins: int):
        if self.kind == "interval":
            return (np.linspace(0.0, self.extent, bins + 1),)
        e = np.linspace(-self.extent, self.extent, bins + 1)
        return (e, e)


def _rotate(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]])


def _advect_interval(x, d, dist, length):
    y = x[:, 0] + d[:, 0] * dist
    k = np.floor(y / length)
    if np.any(np.abs(k) > MAX_REFLECTIONS):
        raise RunawayError(f"more than {MAX_REFLECTIONS} wall hits in a single run")
    odd = (k % 2) != 0
    pos = np.where(odd, (k + 1) * length - y, y - k * length)
    pos = np.clip(pos, 0.0, length)
    return pos[:, None], np.where(odd, -d[:, 0], d[:, 0])[:, None], np.abs(k).astype(np.int64)


def _chord_time(x, d, radius):
    """Distance along unit ``d`` from ``x`` (inside) to the circle."""
    b = np.sum(x * d, axis=1)
    c = np.sum(x * x, axis=1) - radius**2
    disc = np.maximum(b * b - c, 0.0)
    q = np.sqrt(disc)
    # numerically stable positive root of t^2 + 2 b t + c = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(b > 0, -c / (b + q), q - b)
    return np.maximum(t, 0.0)


def _reflect_disc(p, d, radius):
    nu = -p / np.linalg.norm(p, axis=1, keepdims=True)
    d = specular_reflect(d / np.linalg.norm(d, axis=1, keepdims=True), nu, tol=1e-6)
    p = p + NUDGE * radius * nu
    return p, d


def _advect_disc(x, d, dist, radius):
    x, d, rem = x.copy(), d.copy(), dist.astype(float).copy()
    hits = np.zeros(len(x), dtype=np.int64)
    active = np.flatnonzero(rem > 0)
    first = True
    while active.size:
        t = _chord_time(x[active], d[active], radius)
        free = t >= rem[active]
        done = active[free]
        x[done] += d[done] * rem[done, None]
        rem[done] = 0.0
        hit = active[~free]
        if hit.size == 0:
            break
        th = t[~free]
        p = x[hit] + d[hit] * th[:, None]
        p *= radius / np.linalg.norm(p, axis=1, keepdims=True)
        p, dn = _reflect_disc(p, d[hit], radius)
        rem[hit] -= th
        hits[hit] += 1
        if not first:
            x[hit], d[hit] = p, dn
        else:
            # Inside a disc every chord of a reflected path has the same
            # length and turns the configuration by the same angle, so whole
            # chords can be skipped by a rotation.
            chord = _chord_time(p, dn, radius)
            chord = np.maximum(chord, 1e-300)
            n_skip = np.floor(rem[hit] / chord)
            n_skip = np.where(rem[hit] - n_skip * chord <= 0, np.maximum(n_skip - 1, 0), n_skip)
            if np.any(hits[hit] + n_skip > MAX_REFLECTIONS):
                raise RunawayError(f"more than {MAX_REFLECTIONS} wall hits in a single run")
            q = p + dn * chord[:, None]
            angle = np.arctan2(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0], np.sum(p * q, axis=1))
            rot = angle * n_skip
            x[hit] = _rotate(p, rot)
            d[hit] = _rotate(dn, rot)
            rem[hit] -= n_skip * chord
            hits[hit] += n_skip.astype(np.int64)
        active = hit[rem[hit] > 0]
        first = False
    r = np.linalg.norm(x, axis=1)
    out = r > radius
    x[out] *= (radius / r[out])[:, None]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return x, d, hits


def advect_and_reflect(positions, directions, duration, geom: DomainGeometry,
                       speed: float = 1.0, return_hits: bool = False):
    """Move particles for ``duration`` at ``speed`` with specular wall reflections.

    ``directions`` are unit vectors; the returned directions are unit too,
    so the speed is preserved exactly.
    """
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    dur = np.broadcast_to(np.asarray(duration, dtype=float), (x.shape[0],))
    if np.any(dur < 0):
        raise ArgumentError("durations must be >= 0")
    if x.shape != d.shape or x.shape[1] != geom.dim:
        raise ArgumentError(f"positions {x.shape} and directions {d.shape} do not match the "
                            f"{geom.dim}-dimensional {geom.kind}")
    dist = dur * speed
    if geom.kind == "interval":
        x2, d2, hits = _advect_interval(x, d, dist, geom.extent)
    else:
        x2, d2, hits = _advect_disc(x, d, dist, geom.extent)
    return (x2, d2, hits) if return_hits else (x2, d2)


# ---------------------------------------------------------------------------
# tumbling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaling:
    """Speed, run-scale multiplier and gradient factor for one unit system."""

    speed: float
    time_factor: float
    grad_factor: float

    @classmethod
    def for_params(cls, params: ModelParams, units: str = "macro") -> "Scaling":
        eps = params.epsilon
        root = math.sqrt(eps)
        if units == "kinetic":
            return cls(params.c0, 1.0, root)
        if units == "macro":
            return cls(params.c0 / root, eps ** (1.0 + params.mu), root)
        raise ConfigurationError(f"unknown unit system {units!r}; use 'macro' or 'kinetic'")


def run_scale(positions, directions, field: ChemicalField, params: ModelParams,
              scaling: Scaling | None = None) -> np.ndarray:
    """Lomax scale ``tau0 + tau1 D^v rho`` clamped below at ``0.01 tau0``."""
    scaling = scaling or Scaling(params.c0, 1.0, math.sqrt(params.epsilon))
    dv = scaling.grad_factor * params.c0 * np.sum(
        directions * field.grad_rho(positions), axis=1)
    b = np.maximum(params.tau0 + params.tau1 * dv, MIN_SCALE_FRACTION * params.tau0)
    return scaling.time_factor * b


def _reflect_outgoing(x, d, geom):
    on = geom.on_boundary(x)
    if not np.any(on):
        return d
    nu = geom.inner_normal(x[on])
    dn = d[on]
    out = np.sum(dn * nu, axis=1) < 0
    if np.any(out):
        if geom.kind == "interval":
            dn[out] = -dn[out]
        else:
            dn[out] = specular_reflect(dn[out], nu[out], tol=1e-6)
        d = d.copy()
        d[on] = dn
    return d


def tumble(positions, directions, field: ChemicalField, params: ModelParams,
           kernel: TurnKernel, rng: np.random.Generator, scaling: Scaling | None = None,
           geom: DomainGeometry | None = None):
    """New directions and run times at a reorientation event.

    Directions pointing out of the domain at a wall are reflected after
    sampling.
    """
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    d = sample_direction(rng, kernel, np.atleast_2d(directions))
    if geom is not None:
        d = _reflect_outgoing(x, d, geom)
    b = run_scale(x, d, field, params, scaling)
    return d, sample_run_time(rng, params.alpha, b)


def uniform_directions(rng, m: int, n: int) -> np.ndarray:
    if n == 1:
        return np.where(rng.random(m) < 0.5, -1.0, 1.0)[:, None]
    phi = rng.uniform(0.0, 2.0 * math.pi, m)
    return np.column_stack([np.cos(phi), np.sin(phi)])


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

@dataclass
class DensityHistogram:
    time: float
    edges: tuple
    counts: np.ndarray
    total: int = field(default=0)

    def __post_init__(self):
        if not self.total:
            self.total = int(self.counts.sum())

    @property
    def bin_volume(self) -> np.ndarray:
        widths = [np.diff(e) for e in self.edges]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        return vol

    @property
    def centers(self):
        c = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        return c[0] if len(c) == 1 else c

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.bin_volume)

    def mass(self) -> float:
        return float(np.sum(self.density * self.bin_volume))


def _bin_counts(x, edges):
    if len(edges) == 1:
        c, _ = np.histogram(x[:, 0], bins=edges[0])
    else:
        c, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=edges)
    return c.astype(np.int64)


def empirical_density(positions, geom: DomainGeometry, bins: int | None = None,
                      edges=None, time: float = 0.0) -> DensityHistogram:
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    if x.shape[1] != geom.dim:
        x = x.reshape(-1, geom.dim)
    if not np.all(geom.contains(x)):
        raise InvariantError("particle positions left the domain")
    if edges is None:
        edges = geom.default_edges(bins or 50)
    return DensityHistogram(time, tuple(edges), _bin_counts(x, edges), len(x))


# ---------------------------------------------------------------------------
# ensemble driver
# ---------------------------------------------------------------------------

def _initial_positions(rng, m, geom, start, width):
    x0 = np.broadcast_to(np.asarray(start, dtype=float), (geom.dim,))
    if not geom.contains(x0[None, :])[0]:
        raise GeometryError(f"start point {x0.tolist()} is outside the domain")
    if width <= 0:
        return np.tile(x0, (m, 1))
    x = x0 + rng.uniform(-width / 2.0, width / 2.0, (m, geom.dim))
    if not np.all(geom.contains(x)):
        raise GeometryError("the initial patch does not fit inside the domain")
    return x


def _simulate_chunk(seed_seq, m, snapshot_times, params, geom, field, kernel,
                    scaling, edges, start, width):
    rng = np.random.default_rng(seed_seq)
    x = _initial_positions(rng, m, geom, start, width)
    d = uniform_directions(rng, m, geom.dim)
    d = _reflect_outgoing(x, d, geom)
    clock = np.zeros(m)
    runs = sample_run_time(rng, params.alpha, run_scale(x, d, field, params, scaling))
    out = []
    for t_snap in snapshot_times:
        while True:
            due = np.flatnonzero(clock + runs <= t_snap)
            if due.size == 0:
                break
            xn, dn = advect_and_reflect(x[due], d[due], runs[due], geom, scaling.speed)
            clock[due] += runs[due]
            dn, rn = tumble(xn, dn, field, params, kernel, rng, scaling, geom)
            x[due], d[due], runs[due] = xn, dn, rn
        # snapshot positions lie on the current run, interpolated linearly
        xs, _ = advect_and_reflect(x, d, t_snap - clock, geom, scaling.speed)
        if not np.all(geom.contains(xs)):
            raise InvariantError("particle positions left the domain")
        out.append(_bin_counts(xs, edges))
    return out


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(requested or cap, cap))


def simulate_ensemble(n_particles: int, snapshot_times, params: ModelParams,
                      geom: DomainGeometry, field: ChemicalField | None = None,
                      kernel: TurnKernel | None = None, seed: int = 0,
                      horizon: float | None = None, bins: int = 50, edges=None,
                      start=None, start_width: float = 0.0, units: str = "macro",
                      workers: int | None = None) -> list[DensityHistogram]:
    """Histogram the particle ensemble at each snapshot time.

    Output depends only on the arguments and ``seed``, never on ``workers``.
    """
    if int(n_particles) != n_particles or n_particles < 1:
        raise ConfigurationError(f"need at least one particle, got {n_particles!r}")
    times = np.asarray(list(snapshot_times), dtype=float)
    horizon = float(times[-1]) if horizon is None and times.size else horizon
    if times.size == 0:
        raise ConfigurationError("at least one snapshot time is required")
    if np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > horizon:
        raise ConfigurationError("snapshot times must be ascending within [0, horizon]")
    if params.n != geom.dim:
        raise ConfigurationError(f"params.n={params.n} does not match the {geom.kind} (n={geom.dim})")
    field = field or ChemicalField.constant()
    kernel = kernel or TurnKernel.uniform(geom.dim)
    if kernel.n != geom.dim:
        raise ConfigurationError("turn kernel dimension does not match the domain")
    scaling = Scaling.for_params(params, units)
    edges = tuple(edges) if edges is not None else geom.default_edges(bins)
    start = geom.center() if start is None else start

    n_chunks = -(-int(n_particles) // CHUNK_SIZE)
    sizes = [CHUNK_SIZE] * (n_chunks - 1) + [int(n_particles) - CHUNK_SIZE * (n_chunks - 1)]
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)

    def job(i):
        return _simulate_chunk(seeds[i], sizes[i], times, params, geom, field, kernel,
                               scaling, edges, start, start_width)

    n_workers = worker_count(workers)
    if n_workers == 1 or n_chunks == 1:
        parts = [job(i) for i in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(job, range(n_chunks)))
    hists = []
    for s, t in enumerate(times):
        counts = sum(p[s] for p in parts)
        if counts.sum() != n_particles:
            raise InvariantError("particle count changed during the simulation")
        hists.append(DensityHistogram(float(t), edges, counts, int(n_particles)))
    return hists


# ---------------------------------------------------------------------------
# tail diagnostics
# ---------------------------------------------------------------------------

def hill_tail_index(samples, k: int) -> float:
    """Hill estimator ``1 / mean(log X_(i) - log X_(k+1))`` over the ``k`` largest values."""
    x = np.asarray(samples, dtype=float)
    if int(k) != k or k < 10 or k >= x.size:
        raise ArgumentError(f"k must satisfy 10 <= k < {x.size}, got {k!r}")
    if np.any(x <= 0):
        raise ArgumentError("Hill estimator needs positive samples")
    top = np.sort(np.partition(x, x.size - k - 1)[x.size - k - 1:])
    logs = np.log(top[1:])
    threshold = top[0]
    return float(1.0 / np.mean(logs - math.log(threshold)))


@dataclass(frozen=True)
class HillPlateau:
    ks: np.ndarray
    estimates: np.ndarray
    spread: float
    has_plateau: bool


def hill_plateau(samples, ks=None, tolerance: float = 0.15) -> HillPlateau:
    """Hill estimates across ``k``; a power-law tail shows a flat stretch.

    ``spread`` is the relative range (max - min) / median over the ``k``
    grid.  Light tails give estimates that drift steadily with ``k``
    (about ``log(n / k)`` for exponential data) and are flagged.
    """
    x = np.asarray(samples, dtype=float)
    if ks is None:
        hi = max(11, x.size // 20)
        ks = np.unique(np.geomspace(max(10, x.size // 2000), hi, 8).astype(int))
    ks = np.asarray(ks, dtype=int)
    est = np.array([hill_tail_index(x, int(k)) for k in ks])
    spread = float((est.max() - est.min()) / np.median(est))
    return HillPlateau(ks, est, spread, spread <= tolerance)
