"""Run configuration: strict TOML schema, validation and environment overrides.

A config file is TOML with the tables ``domain``, ``model``, ``damping``,
``integrator``, ``initial``, ``run``, ``diagnostics``, ``sweep`` and
``output``. Unknown keys are errors. Pointwise coefficient functions are
a number or ``{poly = [a0, a1, ...], sin = [[amp, freq], ...]}``.
"""

from __future__ import annotations

import copy
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .damping import DampingSpec
from .forces import SpecError, ModelSpec
from .integrator import IntegratorSettings, StatePair
from .pointwise import Pointwise
from .problem import Problem
from .spectral import DomainSpec, GridField, ModalField, basis_for, build_operator

ENV_PREFIX = "DAMPEDPLATE_"


class ConfigError(ValueError):
    """Invalid configuration; ``rule`` is a stable identifier of the violated condition."""

    def __init__(self, rule: str, message: str, line: int | None = None, column: int | None = None,
                 path: str | None = None):
        super().__init__(message)
        self.rule = rule
        self.message = message
        self.line = line
        self.column = column
        self.path = path

    def to_dict(self) -> dict:
        out = {"error": "config", "rule": self.rule, "message": self.message}
        if self.path is not None:
            out["path"] = self.path
        if self.line is not None:
            out["line"], out["column"] = self.line, self.column
        return out

    def __str__(self):
        loc = f" (line {self.line}, column {self.column})" if self.line is not None else ""
        return f"[{self.rule}] {self.message}{loc}"


SCHEMA: dict[str, set[str]] = {
    "domain": {"dimension", "lengths", "n", "oversample"},
    "model": {"variant", "kappa", "q", "r", "mu", "phi", "gamma", "load", "f0", "airy_bc", "airy_tol", "airy_maxiter"},
    "damping": {"theta", "sigma0", "sigma10", "sigma11", "structural_r", "g0", "g1", "friction_power",
                "wave_sigma0", "wave_eta", "wave_sigma1", "test_mode"},
    "integrator": {"dt", "dt_min", "dt_max", "tol_step", "residual_budget", "corrector_iterations", "corrector_tol",
                   "max_corrector_iterations", "adaptive", "avf_nodes", "grow"},
    "initial": {"kind", "u", "v", "seed", "radius", "velocity_radius", "n_modes"},
    "run": {"T", "stride", "checkpoint_every", "seed", "deterministic", "name"},
    "diagnostics": {"select", "transient", "pairs", "perturbation", "gammas", "difference_T", "attractor_seeds",
                    "attractor_transient", "attractor_horizon", "attractor_stride", "projection_modes",
                    "determining_modes", "n_lin", "equilibrium_tol", "probe_samples", "completeness_N"},
    "sweep": {"parameter", "values", "workers"},
    "output": {"dir", "leading_modes"},
}
DIAGNOSTICS = ("equilibria", "margin", "decay", "quasi_stability", "difference_bound", "determining_modes",
               "attractor", "regularity", "completeness", "probes")
DAMPING_FUNCTIONS = ("sigma0", "sigma10", "sigma11", "g0", "g1", "wave_sigma0", "wave_sigma1")


@dataclass(frozen=True)
class InitialRecipe:
    kind: str = "modes"
    u: tuple = ()
    v: tuple = ()
    seed: int = 0
    radius: float = 1.0
    velocity_radius: float = 0.0
    n_modes: int = 8


@dataclass(frozen=True)
class DiagnosticsConfig:
    select: tuple[str, ...] = ("equilibria", "decay", "regularity")
    transient: float | None = None
    pairs: int = 5
    perturbation: float = 0.05
    gammas: tuple[float, ...] = (0.01, 0.05, 0.1, 0.2)
    difference_T: float = 5.0
    attractor_seeds: tuple[int, ...] = (0, 1, 2)
    attractor_transient: float | None = None
    attractor_horizon: float | None = None
    attractor_stride: float = 0.1
    projection_modes: int = 8
    determining_modes: tuple[int, ...] = (1, 2, 4, 8)
    n_lin: int = 64
    equilibrium_tol: float = 1e-10
    probe_samples: int = 100
    completeness_N: int = 1


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple
    workers: int = 0


@dataclass(frozen=True, eq=False)
class RunConfig:
    domain: DomainSpec
    model: ModelSpec
    damping: DampingSpec
    integrator: IntegratorSettings
    initial: InitialRecipe
    T: float
    stride: float
    checkpoint_every: float = 0.0
    seed: int = 0
    deterministic: bool = False
    name: str = "run"
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    sweep: SweepConfig | None = None
    out_dir: str = "out"
    leading_modes: int = 4
    raw: dict = field(default_factory=dict, repr=False)
    source: str | None = None

    @property
    def operator_kind(self) -> str:
        return self.model.operator_kind

    def problem(self) -> Problem:
        settings = self.integrator
        if self.deterministic:
            settings = replace(settings, adaptive=False)
        return Problem(build_operator(self.domain, self.operator_kind), self.model, self.damping, settings)

    def initial_state(self, problem: Problem | None = None) -> StatePair:
        problem = problem or self.problem()
        rec = self.initial
        if rec.kind == "random":
            return problem.random_state(rec.seed, rec.radius, rec.velocity_radius, rec.n_modes)
        return StatePair(_modal_from_list(self.domain, rec.u, "initial.u"),
                         _modal_from_list(self.domain, rec.v, "initial.v"), 0.0)


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _modal_from_list(domain: DomainSpec, entries, where: str) -> ModalField:
    c = np.zeros(domain.shape)
    for entry in entries:
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise ConfigError("modal-list", f"{where}: each entry must be [index, value], got {entry!r}")
        idx, val = entry
        idx = (idx,) if isinstance(idx, int) else tuple(idx)
        if len(idx) != domain.dimension or any(not isinstance(i, int) or not 1 <= i <= domain.n for i in idx):
            raise ConfigError("modal-list", f"{where}: mode index {list(idx)} outside 1..{domain.n} "
                                            f"in {domain.dimension} dimension(s)")
        c[tuple(i - 1 for i in idx)] += float(val)
    return ModalField(c, domain)


def _pointwise(obj, where: str) -> Pointwise:
    try:
        return Pointwise.from_config(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("pointwise-function", f"{where}: {exc}") from None


def _number(sec: dict, key: str, where: str, default=None, kind=float):
    if key not in sec:
        return default
    val = sec[key]
    if kind is bool:
        if not isinstance(val, bool):
            raise ConfigError("type", f"{where}.{key} must be a boolean, got {val!r}")
        return val
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError("type", f"{where}.{key} must be a number, got {val!r}")
    if kind is int:
        if isinstance(val, float) and not val.is_integer():
            raise ConfigError("type", f"{where}.{key} must be an integer, got {val!r}")
        return int(val)
    if not math.isfinite(val):
        raise ConfigError("type", f"{where}.{key} must be finite")
    return float(val)


def _check_keys(doc: dict):
    for sec, val in doc.items():
        if sec not in SCHEMA:
            raise ConfigError("unknown-key", f"unknown table [{sec}]; expected one of {sorted(SCHEMA)}")
        if not isinstance(val, dict):
            raise ConfigError("type", f"[{sec}] must be a table")
        extra = set(val) - SCHEMA[sec]
        if extra:
            raise ConfigError("unknown-key", f"unknown key(s) {sorted(extra)} in [{sec}]")
    for req in ("domain", "model", "damping", "run"):
        if req not in doc:
            raise ConfigError("missing-table", f"required table [{req}] is missing")


def _domain(sec) -> DomainSpec:
    dim = _number(sec, "dimension", "domain", 2, int)
    lengths = sec.get("lengths", [1.0] * dim)
    if not isinstance(lengths, list) or len(lengths) != dim:
        raise ConfigError("domain-lengths", f"domain.lengths must list {dim} side length(s)")
    try:
        return DomainSpec(dim, tuple(float(x) for x in lengths), _number(sec, "n", "domain", 16, int),
                          _number(sec, "oversample", "domain", 2, int))
    except (ValueError, TypeError) as exc:
        raise ConfigError("domain", str(exc)) from None


def _load(domain: DomainSpec, obj, where: str) -> GridField | None:
    if obj is None:
        return None
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return GridField(np.full(domain.grid_shape, float(obj)), domain)
    if isinstance(obj, dict):
        extra = set(obj) - {"modes", "constant"}
        if extra:
            raise ConfigError("unknown-key", f"unknown key(s) {sorted(extra)} in {where}")
        vals = np.full(domain.grid_shape, float(obj.get("constant", 0.0)))
        if "modes" in obj:
            vals = vals + basis_for(domain).synth(_modal_from_list(domain, obj["modes"], where).coeffs)
        return GridField(vals, domain)
    raise ConfigError("type", f"{where} must be a number or a table with 'constant' / 'modes'")


def _model(sec, domain) -> ModelSpec:
    variant = sec.get("variant")
    if variant is None:
        raise ConfigError("model-variant", "model.variant is required")
    kw = {k: _number(sec, k, "model") for k in ("kappa", "q", "r", "mu", "gamma", "airy_tol") if k in sec}
    if "airy_maxiter" in sec:
        kw["airy_maxiter"] = _number(sec, "airy_maxiter", "model", kind=int)
    if "phi" in sec:
        kw["phi"] = _pointwise(sec["phi"], "model.phi")
    if "airy_bc" in sec:
        kw["airy_bc"] = str(sec["airy_bc"])
    kw["load"] = _load(domain, sec.get("load"), "model.load")
    if "f0" in sec:
        kw["f0"] = _modal_from_list(domain, sec["f0"], "model.f0")
    return ModelSpec(str(variant), **kw)


def _damping(sec) -> DampingSpec:
    kw: dict[str, Any] = {}
    for k in ("theta", "structural_r", "friction_power", "wave_eta"):
        if k in sec:
            kw[k] = _number(sec, k, "damping")
    for k in DAMPING_FUNCTIONS:
        if k in sec:
            kw[k] = _pointwise(sec[k], f"damping.{k}")
    if "test_mode" in sec:
        kw["test_mode"] = _number(sec, "test_mode", "damping", kind=bool)
    return DampingSpec(**kw)


def _integrator(sec) -> IntegratorSettings:
    kw = {}
    for k in ("dt", "dt_min", "dt_max", "tol_step", "residual_budget", "corrector_tol", "grow"):
        if k in sec:
            kw[k] = _number(sec, k, "integrator")
    for k in ("corrector_iterations", "max_corrector_iterations", "avf_nodes"):
        if k in sec:
            kw[k] = _number(sec, k, "integrator", kind=int)
    if "adaptive" in sec:
        kw["adaptive"] = _number(sec, "adaptive", "integrator", kind=bool)
    try:
        return IntegratorSettings(**kw)
    except ValueError as exc:
        raise ConfigError("integrator", str(exc)) from None


def _initial(sec, default_seed: int = 0) -> InitialRecipe:
    kind = sec.get("kind", "modes")
    if kind not in ("modes", "random"):
        raise ConfigError("initial-kind", f"initial.kind must be 'modes' or 'random', got {kind!r}")
    kw = {"kind": kind, "u": tuple(sec.get("u", ())), "v": tuple(sec.get("v", ())), "seed": default_seed}
    for k in ("radius", "velocity_radius"):
        if k in sec:
            kw[k] = _number(sec, k, "initial")
    for k in ("seed", "n_modes"):
        if k in sec:
            kw[k] = _number(sec, k, "initial", kind=int)
    return InitialRecipe(**kw)


def _diagnostics(sec) -> DiagnosticsConfig:
    kw: dict[str, Any] = {}
    if "select" in sec:
        sel = sec["select"]
        if isinstance(sel, str):
            sel = [sel]
        bad = [s for s in sel if s not in DIAGNOSTICS]
        if bad:
            raise ConfigError("diagnostics-select", f"unknown diagnostic(s) {bad}; choose from {list(DIAGNOSTICS)}")
        kw["select"] = tuple(sel)
    for k in ("transient", "perturbation", "difference_T", "attractor_transient", "attractor_horizon",
              "attractor_stride", "equilibrium_tol"):
        if k in sec:
            kw[k] = _number(sec, k, "diagnostics")
    for k in ("pairs", "projection_modes", "n_lin", "probe_samples", "completeness_N"):
        if k in sec:
            kw[k] = _number(sec, k, "diagnostics", kind=int)
    for k, conv in (("gammas", float), ("attractor_seeds", int), ("determining_modes", int)):
        if k in sec:
            kw[k] = tuple(conv(x) for x in sec[k])
    return DiagnosticsConfig(**kw)


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.model.check(cfg.domain)
        cfg.damping.check(cfg.domain, cfg.operator_kind)
    except SpecError as exc:
        raise ConfigError(exc.rule, exc.message) from None
    if not cfg.T > 0:
        raise ConfigError("run-horizon", f"run.T must be positive, got {cfg.T}")
    if not 0 < cfg.stride <= cfg.T:
        raise ConfigError("run-stride", f"run.stride must lie in (0, T], got {cfg.stride}")
    if cfg.checkpoint_every < 0:
        raise ConfigError("run-checkpoint", "run.checkpoint_every must be >= 0")
    if cfg.initial.kind == "modes":
        cfg.initial_state()


def apply_overrides(doc: dict, overrides: dict[str, Any]) -> dict:
    """Set dotted keys such as ``model.gamma`` on a copy of ``doc``."""
    doc = copy.deepcopy(doc)
    for key, val in overrides.items():
        sec, _, name = key.partition(".")
        if not name:
            raise ConfigError("override", f"override key {key!r} must look like 'table.key'")
        doc.setdefault(sec, {})[name] = val
    return doc


def env_overrides(environ=None) -> dict[str, Any]:
    """``DAMPEDPLATE_<TABLE>__<KEY>=<toml value>`` entries as dotted overrides."""
    environ = os.environ if environ is None else environ
    out = {}
    for k, raw in environ.items():
        if not k.startswith(ENV_PREFIX) or "__" not in k[len(ENV_PREFIX):]:
            continue
        sec, _, name = k[len(ENV_PREFIX):].lower().partition("__")
        # env names are case-insensitive; map back onto the schema spelling
        name = next((key for key in SCHEMA.get(sec, ()) if key.lower() == name), name)
        out[f"{sec}.{name}"] = parse_value(raw)
    return out


def parse_value(raw: str):
    try:
        return tomllib.loads(f"x = {raw}")["x"]
    except tomllib.TOMLDecodeError:
        return raw


def build_config(doc: dict, source: str | None = None) -> RunConfig:
    _check_keys(doc)
    domain = _domain(doc["domain"])
    run = doc["run"]
    out = doc.get("output", {})
    sweep = None
    if "sweep" in doc:
        s = doc["sweep"]
        if "parameter" not in s or "values" not in s:
            raise ConfigError("sweep", "sweep needs 'parameter' and 'values'")
        if not isinstance(s["values"], list) or not s["values"]:
            raise ConfigError("sweep", "sweep.values must be a nonempty list")
        sweep = SweepConfig(str(s["parameter"]), tuple(s["values"]), _number(s, "workers", "sweep", 0, int))
    T = _number(run, "T", "run", 10.0)
    seed = _number(run, "seed", "run", 0, int)
    cfg = RunConfig(
        domain=domain,
        model=_model(doc["model"], domain),
        damping=_damping(doc["damping"]),
        integrator=_integrator(doc.get("integrator", {})),
        initial=_initial(doc.get("initial", {}), seed),
        T=T,
        stride=_number(run, "stride", "run", T / 100),
        checkpoint_every=_number(run, "checkpoint_every", "run", 0.0),
        seed=seed,
        deterministic=_number(run, "deterministic", "run", False, bool),
        name=str(run.get("name", Path(source).stem if source else "run")),
        diagnostics=_diagnostics(doc.get("diagnostics", {})),
        sweep=sweep,
        out_dir=str(out.get("dir", "out")),
        leading_modes=_number(out, "leading_modes", "output", 4, int),
        raw=doc,
        source=source,
    )
    _validate(cfg)
    return cfg


def load_document(path: str | os.PathLike) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("io", f"cannot read config {path}: {exc.strerror}", path=str(path)) from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = _decode_position(exc, text)
        raise ConfigError("parse", f"malformed config: {exc}", line, col, str(path)) from None


def _decode_position(exc, text):
    line = getattr(exc, "lineno", None)
    col = getattr(exc, "colno", None)
    if line is None:
        import re

        m = re.search(r"line (\d+), column (\d+)", str(exc))
        if m:
            line, col = int(m.group(1)), int(m.group(2))
    return line, col


def parse_config(path: str | os.PathLike, overrides: dict[str, Any] | None = None, use_env: bool = True) -> RunConfig:
    """Read, override and validate a config file."""
    doc = load_document(path)
    merged = {}
    if use_env:
        merged.update(env_overrides())
    merged.update(overrides or {})
    if merged:
        doc = apply_overrides(doc, merged)
    try:
        return build_config(doc, str(path))
    except ConfigError as exc:
        exc.path = str(path)
        raise


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package."""
    base = Path(__file__).parent / "configs"
    p = base / name
    if not p.exists():
        p = base / f"{name}.cfg"
    if not p.exists():
        raise FileNotFoundError(f"no shipped config named {name!r}")
    return p


def shipped_configs(invalid: bool = False) -> list[Path]:
    base = Path(__file__).parent / "configs"
    return sorted((base / "invalid" if invalid else base).glob("*.cfg"))
