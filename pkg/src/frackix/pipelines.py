"""One function per CLI subcommand; each writes its datasets under ``cfg.out``."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .dataio import Dataset, emit_dataset, read_long_csv, write_report
from .errors import ConfigurationError, DomainError
from .fracops import build_reflecting_divgrad_matrix
from .kinetic import (ChemicalField, ModelParams, TurnKernel, eigenvalue_nu1,
                      gamma_reflection, kernel_normalization, scaling_exponents,
                      sphere_area)
from .layer import (HalfSpaceGrid, OrdinateSet, boundary_operator_H,
                    build_transport_operator, curved_conservation_check,
                    extract_albedo, flux_moment, layer_fractional_coefficient,
                    matching_residual, prompt_matrix, recover_a0, solve_halfspace,
                    strip_layer_mass, theta_nullspace, DEFAULT_RMAX_SCALES)
from .macro import Grid1D, MacroSetup, solve, total_mass
from .montecarlo import DomainGeometry, simulate_ensemble, worker_count


def _meta(cfg: RunConfig, **extra) -> dict:
    # the output directory is left out so reruns elsewhere are byte-identical
    config = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    meta = {"subcommand": cfg.subcommand, "config": config, "seed": cfg.seed,
            "version": __version__}
    meta.update(extra)
    return meta


def _kernel(cfg: RunConfig, n: int) -> TurnKernel:
    return TurnKernel.from_spec(cfg.kernel, n)


def model_params(cfg: RunConfig, n: int | None = None, epsilon: float | None = None) -> ModelParams:
    n = cfg.dimension if n is None else n
    nu1 = eigenvalue_nu1(_kernel(cfg, n))
    return ModelParams(alpha=cfg.alpha, tau0=cfg.tau0, tau1=cfg.tau1, c0=cfg.c0,
                       epsilon=cfg.epsilon if epsilon is None else epsilon, nu1=nu1, n=n)


def _c_alpha(cfg: RunConfig, params: ModelParams) -> float:
    if cfg.C_alpha is not None:
        return float(cfg.C_alpha)
    if cfg.alpha >= 2.0:
        raise DomainError("C_alpha has a pole at alpha = 2; set C_alpha in the config")
    return params.C_alpha


def _macro_setup(cfg: RunConfig, params: ModelParams) -> MacroSetup:
    if cfg.dimension != 1:
        raise ConfigurationError("the macroscopic solver is one-dimensional; use an interval")
    chi = params.chi if cfg.chi is None else float(cfg.chi)
    return MacroSetup(Grid1D(cfg.N, cfg.length), cfg.alpha, _c_alpha(cfg, params), chi,
                      ChemicalField.from_spec(cfg.rho), 1, cfg.c0)


def _initial_field(cfg: RunConfig, setup: MacroSetup) -> np.ndarray:
    x, L = setup.grid.centers, setup.grid.length
    init = cfg.initial
    if init.get("type", "patch") == "cosine":
        return 1.0 + np.cos(np.pi * x / L)
    center = init.get("center")
    center = L / 2.0 if center is None else float(center)
    width = float(init.get("width", 0.1))
    if width < setup.grid.h:
        raise ConfigurationError(f"initial.width {width} is narrower than a cell ({setup.grid.h})")
    inside = np.abs(x - center) < width / 2.0
    if not inside.any():
        raise ConfigurationError("the initial patch contains no cell centre")
    return inside / (setup.grid.h * inside.sum())


def _mc_start(cfg: RunConfig, geom: DomainGeometry):
    init = cfg.initial
    if init.get("type", "patch") != "patch":
        raise ConfigurationError("Monte Carlo runs need a patch initial condition")
    center = init.get("center")
    start = geom.center() if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    return start, float(init.get("width", 0.0))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_spectra(cfg: RunConfig) -> dict:
    n = cfg.dimension
    kernel = _kernel(cfg, n)
    nu1 = eigenvalue_nu1(kernel)
    params = model_params(cfg)
    mu, varrho = scaling_exponents(cfg.alpha)
    report = {
        "kernel": kernel.name, "n": n, "sphere_area": sphere_area(n),
        "normalization": kernel_normalization(kernel), "nu1": nu1,
        "nu1_exact": kernel.exact_nu1(),
        "mu": float(mu), "varrho": float(varrho),
        "mu_exact": str(mu), "varrho_exact": str(varrho),
        "chi": params.chi if cfg.chi is None else cfg.chi,
        "scattering_rate": params.scattering_rate,
    }
    if cfg.alpha < 2.0:
        report["gamma_1_minus_alpha"] = gamma_reflection(cfg.alpha)
        report["C_alpha"] = params.C_alpha
        report["layer_fractional_coefficient"] = layer_fractional_coefficient(params)
    else:
        report["C_alpha"] = cfg.C_alpha
    theta = np.linspace(0.0, np.pi, 181)
    rows = [[t, p] for t, p in zip(theta, kernel(theta))]
    out = Path(cfg.out)
    emit_dataset(Dataset(["theta", "profile"], rows, _meta(cfg)), out / "kernel.csv")
    write_report(_meta(cfg, report=report), out / "spectra.json")
    return report


def run_macro(cfg: RunConfig) -> dict:
    params = model_params(cfg, n=1)
    setup = _macro_setup(cfg, params)
    u0 = _initial_field(cfg, setup)
    times = cfg.snapshot_times
    traj = solve(u0, cfg.horizon, times, setup, dt=cfg.dt, scheme=cfg.scheme)
    x = setup.grid.centers
    rows = [[t, xi, ui] for t, u in zip(traj.times, traj.values) for xi, ui in zip(x, u)]
    masses = [total_mass(u, setup.grid.h) for u in traj.values]
    out = Path(cfg.out)
    meta = _meta(cfg, C_alpha=setup.C_alpha, chi=setup.chi, masses=masses)
    emit_dataset(Dataset(["time", "x", "u"], rows, meta), out / "macro.csv")
    if cfg.dump_operator:
        op = build_reflecting_divgrad_matrix(cfg.alpha, cfg.N, setup.grid.h)
        op.to_csv(out / "operator.csv")
    return {"snapshots": len(times), "mass_initial": total_mass(u0, setup.grid.h),
            "mass_final": masses[-1] if masses else None}


def _mc_histograms(cfg: RunConfig, params: ModelParams, times, bins=None):
    geom = DomainGeometry(cfg.geometry.get("kind", "interval"),
                          float(cfg.geometry.get("extent", 1.0)))
    start, width = _mc_start(cfg, geom)
    return geom, simulate_ensemble(
        cfg.particles, times, params, geom, ChemicalField.from_spec(cfg.rho),
        _kernel(cfg, geom.dim), seed=cfg.seed, horizon=cfg.horizon, bins=bins or cfg.bins,
        start=start, start_width=width, units=cfg.units, workers=worker_count())


def run_mc(cfg: RunConfig) -> dict:
    params = model_params(cfg)
    geom, hists = _mc_histograms(cfg, params, cfg.snapshot_times)
    rows = []
    if geom.dim == 1:
        cols = ["time", "bin_center", "density"]
        for h in hists:
            rows += [[h.time, c, d] for c, d in zip(h.centers, h.density)]
    else:
        cols = ["time", "x", "y", "density"]
        for h in hists:
            cx, cy = h.centers
            dens = h.density
            rows += [[h.time, cx[i], cy[j], dens[i, j]]
                     for i in range(cx.size) for j in range(cy.size)]
    meta = _meta(cfg, particles=cfg.particles, counts=[int(h.counts.sum()) for h in hists])
    emit_dataset(Dataset(cols, rows, meta), Path(cfg.out) / "mc.csv")
    return {"snapshots": len(hists), "particles": cfg.particles}


def _rebin(values, n_bins):
    values = np.asarray(values)
    if values.shape[-1] % n_bins:
        raise ConfigurationError(f"N={values.shape[-1]} must be a multiple of bins={n_bins}")
    return values.reshape(*values.shape[:-1], n_bins, -1).mean(axis=-1)


def compare_pair(times, mc_density, macro_density, length, strip):
    """L1 gaps and the matching residual for one micro/macro pair on a common bin grid."""
    mc = np.asarray(mc_density)
    ma = np.asarray(macro_density)
    h = length / mc.shape[1]
    x = (np.arange(mc.shape[1]) + 0.5) * h
    l1 = h * np.sum(np.abs(mc - ma), axis=1)
    interior = h * ma.sum(axis=1)
    layer = np.array([strip_layer_mass(m - a, x, strip, length) for m, a in zip(mc, ma)])
    resid = matching_residual(times, interior, layer) if len(times) >= 3 else None
    return l1, interior, layer, resid


def run_match(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    if cfg.mc_csv or cfg.macro_csv:
        if not (cfg.mc_csv and cfg.macro_csv):
            raise ConfigurationError("match needs both mc_csv and macro_csv")
        t_mc, _, mc = read_long_csv(cfg.mc_csv, "density")
        t_ma, _, ma = read_long_csv(cfg.macro_csv, "u")
        if t_mc.shape != t_ma.shape or np.max(np.abs(t_mc - t_ma)) > 1e-12:
            raise ConfigurationError("mc and macro outputs are not sampled at the same times")
        l1, interior, layer, resid = compare_pair(t_mc, mc, _rebin(ma, mc.shape[1]),
                                                  cfg.length, cfg.strip)
        rows = [[t, a, b, c] for t, a, b, c in zip(t_mc, l1, interior, layer)]
        report = {"residual": resid, "l1": l1.tolist()}
    else:
        times = cfg.snapshot_times
        rows, per_eps = [], []
        for eps in cfg.epsilons:
            params = model_params(cfg, n=1, epsilon=eps)
            _, hists = _mc_histograms(cfg, params, times)
            setup = _macro_setup(cfg, params)
            traj = solve(_initial_field(cfg, setup), cfg.horizon, times, setup,
                         dt=cfg.dt, scheme=cfg.scheme)
            mc = np.array([h.density for h in hists])
            l1, interior, layer, resid = compare_pair(times, mc, _rebin(traj.values, cfg.bins),
                                                      cfg.length, cfg.strip)
            rows += [[eps, t, a, b, c] for t, a, b, c in zip(times, l1, interior, layer)]
            later = l1[np.asarray(times) > 0]
            per_eps.append({"epsilon": eps, "residual": resid,
                            "l1_mean": float(later.mean()) if later.size else 0.0,
                            "l1": l1.tolist()})
        order = sorted(per_eps, key=lambda d: -d["epsilon"])
        l1_seq = [d["l1_mean"] for d in order]
        res_seq = [d["residual"] for d in order]
        report = {"runs": per_eps,
                  "l1_nonincreasing": all(b <= a for a, b in zip(l1_seq, l1_seq[1:])),
                  "residual_decreasing": None if None in res_seq else
                  all(b < a for a, b in zip(res_seq, res_seq[1:]))}
    cols = (["time", "l1", "interior_mass", "layer_mass"] if cfg.mc_csv
            else ["epsilon", "time", "l1", "interior_mass", "layer_mass"])
    emit_dataset(Dataset(cols, rows, _meta(cfg)), out / "match.csv")
    write_report(_meta(cfg, report=report), out / "match.json")
    return report


def run_milne(cfg: RunConfig) -> dict:
    n = cfg.dimension
    params = model_params(cfg, n=n)
    ords = OrdinateSet.for_dimension(n, cfg.ordinates)
    scale = cfg.c0 * cfg.tau0 / (cfg.alpha - 1.0)
    grid = HalfSpaceGrid.graded(cfg.r_max or DEFAULT_RMAX_SCALES * scale)
    frac = None
    if cfg.alpha >= 2.0:
        if cfg.C_alpha is None:
            raise DomainError("the layer coefficient has a pole at alpha = 2; set C_alpha")
        frac = float(cfg.C_alpha)
    op = build_transport_operator(params, ords, grid, _kernel(cfg, n), frac_coef=frac)
    albedo = extract_albedo(op)
    theta = theta_nullspace(albedo, cfg.reflection)
    a0, l0 = recover_a0(1.0, theta.theta, albedo)
    inc, outg = ords.incoming, ords.outgoing
    w_in = albedo.w_in
    mu = ords.mu
    ramp = mu[inc]
    sol = solve_halfspace(op, ramp)
    flux = flux_moment(sol)
    residual_one = float(np.max(np.abs(op.apply(np.ones((grid.size, ords.size))))))
    grad = np.zeros(n)
    grad[: len(cfg.grad_rho_wall)] = cfg.grad_rho_wall[:n]
    H = boundary_operator_H(params, cfg.reflection, ords, grad,
                            C_alpha=_c_alpha(cfg, params), chi=cfg.chi)
    Pm = prompt_matrix(ords, cfg.reflection)
    rng = np.random.default_rng(cfg.seed)
    f_out = rng.random(outg.size)
    report = {
        "ordinates": ords.size, "r_nodes": grid.size, "r_max": grid.r_max,
        "operator_residual_on_one": residual_one,
        "sum_W": float(albedo.W @ w_in),
        "sum_G": float(np.max(np.abs(w_in @ albedo.G0))),
        "R_one_error": float(np.max(np.abs(albedo.R @ np.ones(inc.size) - 1.0))),
        "flux_spread": float(flux.max() - flux.min()),
        "P_conservation_error": float(abs((mu[inc] * w_in) @ (Pm @ f_out)
                                          - (np.abs(mu[outg]) * albedo.w_out) @ f_out)),
        "theta_residual": theta.residual, "theta_adjoint_residual": theta.adjoint_residual,
        "theta_singular_values": theta.singular_values[-2:].tolist(),
        "theta_normalization": float(np.sum(albedo.W * theta.theta * w_in)),
        "a0_for_unit_u0": a0, "l0_W_moment": float(np.sum(albedo.W * l0 * w_in)),
        "remainder_tail": albedo.tail,
        "H": {"advective": H.advective, "fractional": H.fractional,
              "advective_error": H.advective_error, "fractional_error": H.fractional_error},
    }
    out = Path(cfg.out)
    ang = ords.angles
    emit_dataset(Dataset(["angle", "mu", "weight", "W", "Theta"],
                         [[ang[j], mu[j], ords.weights[j], albedo.W[k], theta.theta[k]]
                          for k, j in enumerate(inc)], _meta(cfg)), out / "albedo.csv")
    emit_dataset(Dataset(["out_angle", "in_angle", "R"],
                         [[ang[b], ang[a], albedo.R[i, k]] for i, b in enumerate(outg)
                          for k, a in enumerate(inc)], _meta(cfg)), out / "reflection.csv")
    emit_dataset(Dataset(["r", "flux_moment", "density"],
                         [[r, f, d] for r, f, d in zip(grid.r, flux, sol.density)],
                         _meta(cfg, inflow="mu on incoming ordinates")), out / "flux.csv")
    write_report(_meta(cfg, report=report), out / "milne.json")
    return report


def _test_field(name: str, seed: int, radius: float = 1.0, strip: float = 0.1):
    if name == "radial":
        return lambda x: x / np.linalg.norm(x, axis=1, keepdims=True)
    if name == "flat":
        return wall_adapted_field(radius, strip)
    rng = np.random.default_rng(seed)
    k = rng.normal(size=(4, 2))
    ph = rng.uniform(0, 2 * np.pi, size=(4, 2))
    amp = rng.normal(size=(4, 2))

    def w(x):
        s = np.sin(x @ k.T + ph[:, 0])
        c = np.cos(x @ k.T + ph[:, 1])
        return np.column_stack([s @ amp[:, 0], c @ amp[:, 1]])

    return w


def wall_adapted_field(radius: float, strip: float):
    """Field varying on the strip scale across the wall and slowly along it.

    Cartesian test fields oscillate many times around a large circle, so the
    flat limit needs a field written in polar form.
    """
    def w(x):
        r = np.linalg.norm(x, axis=1, keepdims=True)
        th = np.arctan2(x[:, 1], x[:, 0])[:, None]
        depth = (radius - r) / strip
        radial = (1.0 + 0.5 * np.cos(th)) * np.exp(-depth) * (1.0 + depth)
        tangential = np.sin(th) * depth
        e_r = x / r
        e_t = np.column_stack([-e_r[:, 1], e_r[:, 0]])
        return radial * e_r + tangential * e_t

    return w


def run_curved(cfg: RunConfig) -> dict:
    flat = cfg.test_field == "flat"
    radius = 1e4 if flat else float(cfg.geometry.get("extent", 1.0))
    strip = cfg.strip
    w = _test_field(cfg.test_field, cfg.seed, radius, strip)
    rows = []
    for n in cfg.resolutions:
        chk = curved_conservation_check(w, strip, radius, n_r=n, n_theta=4 * n, rule="midpoint")
        rows.append([n, chk.residual])
    res = np.array([r[1] for r in rows])
    ns = np.array(cfg.resolutions, dtype=float)
    # residuals at round-off level carry no convergence information
    good = res > 1e-12
    slope = (float(-np.polyfit(np.log(ns[good]), np.log(res[good]), 1)[0])
             if good.sum() >= 2 else None)
    gauss = curved_conservation_check(w, strip, radius, n_r=32,
                                      n_theta=64 if flat else 256, rule="gauss")
    report = {"radius": radius, "strip": strip, "field": cfg.test_field,
              "gauss_residual": gauss.residual, "midpoint_residuals": res.tolist(),
              "refinement_slope": slope,
              "boundary_integral": gauss.boundary, "inner_integral": gauss.inner,
              "strip_integral": gauss.strip}
    out = Path(cfg.out)
    emit_dataset(Dataset(["resolution", "residual"], rows, _meta(cfg)), out / "curved.csv")
    write_report(_meta(cfg, report=report), out / "curved.json")
    return report


PIPELINES = {"spectra": run_spectra, "mc": run_mc, "macro": run_macro,
             "milne": run_milne, "match": run_match, "curved": run_curved}


def run(cfg: RunConfig) -> dict:
    return PIPELINES[cfg.subcommand](cfg)
