"""Strict JSON run configuration.

Every key is checked against a fixed schema; all problems are collected and
reported together, and unknown keys come with a closest-match suggestion.
"""
from __future__ import annotations

import difflib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigurationError, ValidationError

SUBCOMMANDS = ("spectra", "mc", "macro", "milne", "match", "curved")
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RunConfig:
    subcommand: str = "spectra"
    # model
    alpha: float = 1.5
    tau0: float = 1.0
    tau1: float = 0.0
    c0: float = 1.0
    epsilon: float = 0.1
    C_alpha: float | None = None
    chi: float | None = None
    # geometry and grids
    geometry: dict = field(default_factory=lambda: {"kind": "interval", "extent": 1.0})
    N: int = 200
    L: float | None = None
    kernel: dict = field(default_factory=lambda: {"type": "uniform"})
    rho: dict = field(default_factory=lambda: {"preset": "none"})
    # time
    horizon: float = 0.1
    snapshots: list | None = None
    scheme: str = "explicit"
    dt: float | None = None
    initial: dict = field(default_factory=lambda: {"type": "patch", "center": None, "width": 0.1})
    # Monte Carlo
    particles: int = 10000
    bins: int = 40
    units: str = "macro"
    # layer
    ordinates: int = 32
    r_max: float | None = None
    reflection: str = "specular"
    grad_rho_wall: list = field(default_factory=lambda: [0.0, 0.0])
    # matching and curved checks
    epsilons: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    strip: float = 0.1
    mc_csv: str | None = None
    macro_csv: str | None = None
    test_field: str = "radial"
    resolutions: list = field(default_factory=lambda: [8, 16, 32, 64])
    # run control
    seed: int = 0
    out: str = "out"
    dump_operator: bool = False

    @property
    def length(self) -> float:
        if self.L is not None:
            return float(self.L)
        return float(self.geometry.get("extent", 1.0))

    @property
    def dimension(self) -> int:
        return 1 if self.geometry.get("kind", "interval") == "interval" else 2

    @property
    def snapshot_times(self) -> list:
        if self.snapshots is not None:
            return [float(t) for t in self.snapshots]
        return [0.0, 0.5 * self.horizon, self.horizon]

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_NUMBER = (int, float)


def _is_num(v):
    return isinstance(v, _NUMBER) and not isinstance(v, bool)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _check(cfg: RunConfig) -> list[str]:
    p = []
    if cfg.subcommand not in SUBCOMMANDS:
        p.append(f"subcommand: must be one of {', '.join(SUBCOMMANDS)}, got {cfg.subcommand!r}")
    for key in ("alpha", "tau0", "tau1", "c0", "epsilon", "horizon", "strip"):
        if not _is_num(getattr(cfg, key)):
            p.append(f"{key}: must be a number, got {getattr(cfg, key)!r}")
    if p:
        return p
    if not 1.0 < cfg.alpha <= 2.0:
        p.append(f"alpha: must lie in (1, 2], got {cfg.alpha!r}")
    if not 0.0 < cfg.epsilon < 1.0:
        p.append(f"epsilon: must lie in (0, 1), got {cfg.epsilon!r}")
    if not cfg.tau0 > 0:
        p.append(f"tau0: must be > 0, got {cfg.tau0!r}")
    if not cfg.c0 > 0:
        p.append(f"c0: must be > 0, got {cfg.c0!r}")
    if not cfg.horizon >= 0:
        p.append(f"horizon: must be >= 0, got {cfg.horizon!r}")
    for key in ("C_alpha", "chi", "L", "dt", "r_max"):
        v = getattr(cfg, key)
        if v is not None and not _is_num(v):
            p.append(f"{key}: must be a number or null, got {v!r}")
    if cfg.C_alpha is not None and _is_num(cfg.C_alpha) and not cfg.C_alpha > 0:
        p.append(f"C_alpha: must be > 0, got {cfg.C_alpha!r}")
    if cfg.L is not None and _is_num(cfg.L) and not cfg.L > 0:
        p.append(f"L: must be > 0, got {cfg.L!r}")
    if cfg.dt is not None and _is_num(cfg.dt) and not cfg.dt > 0:
        p.append(f"dt: must be > 0, got {cfg.dt!r}")
    if cfg.r_max is not None and _is_num(cfg.r_max) and not cfg.r_max > 0:
        p.append(f"r_max: must be > 0, got {cfg.r_max!r}")
    geom = cfg.geometry
    if not isinstance(geom, dict):
        p.append("geometry: must be an object")
    else:
        for k in geom:
            if k not in ("kind", "extent"):
                p.append(f"geometry.{k}: unknown key{_suggest(k, ('kind', 'extent'))}")
        if geom.get("kind", "interval") not in ("interval", "disc"):
            p.append(f"geometry.kind: must be 'interval' or 'disc', got {geom.get('kind')!r}")
        ext = geom.get("extent", 1.0)
        if not (_is_num(ext) and ext > 0):
            p.append(f"geometry.extent: must be > 0, got {ext!r}")
    for key, allowed in (("N", 2), ("particles", 1), ("bins", 1), ("ordinates", 2)):
        v = getattr(cfg, key)
        if not (_is_int(v) and v >= allowed):
            p.append(f"{key}: must be an integer >= {allowed}, got {v!r}")
    if _is_int(cfg.ordinates) and cfg.ordinates % 2:
        p.append(f"ordinates: must be even, got {cfg.ordinates!r}")
    if not (_is_int(cfg.seed) and 0 <= cfg.seed <= MAX_SEED):
        p.append(f"seed: must be an unsigned 64-bit integer, got {cfg.seed!r}")
    if cfg.snapshots is not None:
        s = cfg.snapshots
        if not (isinstance(s, list) and s and all(_is_num(t) for t in s)):
            p.append("snapshots: must be a non-empty list of numbers")
        elif any(b < a for a, b in zip(s, s[1:])) or s[0] < 0 or (
                _is_num(cfg.horizon) and s[-1] > cfg.horizon):
            p.append("snapshots: must be ascending within [0, horizon]")
    if not (isinstance(cfg.epsilons, list) and cfg.epsilons
            and all(_is_num(e) and 0 < e < 1 for e in cfg.epsilons)):
        p.append("epsilons: must be a non-empty list of numbers in (0, 1)")
    if not (isinstance(cfg.resolutions, list) and len(cfg.resolutions) >= 2
            and all(_is_int(n) and n >= 2 for n in cfg.resolutions)):
        p.append("resolutions: must list at least two integers >= 2")
    choices = {"scheme": ("explicit", "implicit"), "units": ("macro", "kinetic"),
               "reflection": ("specular", "diffuse"),
               "test_field": ("radial", "random", "flat")}
    for key, allowed in choices.items():
        if getattr(cfg, key) not in allowed:
            p.append(f"{key}: must be one of {', '.join(allowed)}, got {getattr(cfg, key)!r}")
    for key in ("kernel", "rho", "initial"):
        if not isinstance(getattr(cfg, key), dict):
            p.append(f"{key}: must be an object")
    if isinstance(cfg.kernel, dict) and cfg.kernel.get("type", "uniform") not in (
            "uniform", "cosine", "vonmises"):
        p.append(f"kernel.type: must be uniform, cosine or vonmises, got {cfg.kernel.get('type')!r}")
    if isinstance(cfg.rho, dict) and cfg.rho.get("preset", "none") not in (
            "none", "linear", "gaussian", "cosine"):
        p.append(f"rho.preset: must be none, linear, gaussian or cosine, got {cfg.rho.get('preset')!r}")
    if isinstance(cfg.initial, dict) and cfg.initial.get("type", "patch") not in ("patch", "cosine"):
        p.append(f"initial.type: must be 'patch' or 'cosine', got {cfg.initial.get('type')!r}")
    if not isinstance(cfg.dump_operator, bool):
        p.append("dump_operator: must be true or false")
    return p


def _suggest(key, options) -> str:
    close = difflib.get_close_matches(key, list(options), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def parse_config(text: str, subcommand: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse a JSON document into a validated :class:`RunConfig`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    problems = [f"{k}: unknown key{_suggest(k, _FIELDS)}" for k in data if k not in _FIELDS]
    known = {k: v for k, v in data.items() if k in _FIELDS}
    if subcommand is not None:
        if "subcommand" in known and known["subcommand"] != subcommand:
            problems.append(f"subcommand: config says {known['subcommand']!r}, "
                            f"command line says {subcommand!r}")
        known["subcommand"] = subcommand
    known.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = RunConfig(**known)
    problems += _check(cfg)
    if problems:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def load_config(path, subcommand: str | None = None, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, subcommand, overrides)
