"""Experiment configuration documents (YAML) and bundled presets.

A resolved configuration contains every parameter needed to rebuild the
problem, so a stored record plus its seed reproduces the run.
"""

from __future__ import annotations

import copy
import math
from functools import partial
from importlib import resources
from pathlib import Path

import yaml

from .model import LindbladChannel, LindbladSpec, chain_network, noise_network, target_gate
from .objectives import GateProblem, hamiltonian_problem, markovian_problem
from .optimize import OptimizerOptions

__all__ = [
    "ConfigError",
    "REQUIRED",
    "STANDARD_NOISE_OMEGA",
    "list_presets",
    "load_config",
    "resolve_config",
    "dump_config",
    "build_problem",
    "build_closed_problem",
    "problem_factory",
    "optimizer_options",
]

REQUIRED = ("model", "system_omega", "target", "T", "K", "delta")

# Noise-qubit frequencies, taken in order for as many noise qubits as needed.
STANDARD_NOISE_OMEGA = tuple(
    v for c in (2.14, 2.1, 2.0) for v in (1.0 / (math.pi - c), math.pi - c)
)

_DEFAULTS = {
    "name": "",
    "n_noise": 0,
    "noise_omega": None,
    "system_coupling": 1.0,
    "noise_coupling": 0.0,
    "topology": "round-robin",
    "leakage": False,
    "detuning": 0.0,
    "decoherence": [],
    "rate_convention": "amplitude",
    "method": "auto",
    "warm_start": False,
    "seed": 0,
    "optimizer": {},
    "batch": None,
    "output": None,
}


class ConfigError(ValueError):
    pass


def list_presets() -> list:
    files = resources.files("robustgates").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".yaml"))


def _read_document(source) -> dict:
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        name = str(source)
        if name not in list_presets():
            raise ConfigError(f"no config file or preset named {name!r}")
        text = resources.files("robustgates").joinpath("presets", f"{name}.yaml").read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    return data


def resolve_config(raw: dict) -> dict:
    """Validate a raw mapping and fill every default explicitly."""
    for key in REQUIRED:
        if key not in raw or raw[key] is None:
            raise ConfigError(f"missing required field {key!r}")
    unknown = set(raw) - set(REQUIRED) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
    cfg = copy.deepcopy(_DEFAULTS)
    cfg.update(copy.deepcopy(raw))
    if cfg["model"] not in ("markovian", "hamiltonian"):
        raise ConfigError(f"model must be 'markovian' or 'hamiltonian', got {cfg['model']!r}")
    cfg["system_omega"] = [float(w) for w in cfg["system_omega"]]
    cfg["n_noise"] = int(cfg["n_noise"])
    if cfg["noise_omega"] is None:
        if cfg["n_noise"] > len(STANDARD_NOISE_OMEGA):
            raise ConfigError("too many noise qubits for the standard frequency list")
        cfg["noise_omega"] = list(STANDARD_NOISE_OMEGA[: cfg["n_noise"]])
    cfg["noise_omega"] = [float(w) for w in cfg["noise_omega"]]
    if len(cfg["noise_omega"]) != cfg["n_noise"]:
        raise ConfigError("noise_omega length must equal n_noise")
    if cfg["model"] == "markovian" and cfg["n_noise"]:
        raise ConfigError("markovian model takes no noise qubits")
    if cfg["model"] == "hamiltonian" and cfg["decoherence"]:
        raise ConfigError("decoherence channels need the markovian model")
    for key in ("system_coupling", "noise_coupling", "detuning", "T", "delta"):
        cfg[key] = float(cfg[key])
    cfg["K"] = int(cfg["K"])
    cfg["seed"] = int(cfg["seed"])
    cfg["decoherence"] = [
        {"kind": str(ch["kind"]), "rate": float(ch["rate"]),
         "qubits": None if ch.get("qubits") is None else [int(q) for q in ch["qubits"]]}
        for ch in cfg["decoherence"]
    ]
    try:
        cfg["optimizer"] = optimizer_options(cfg).to_dict()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad optimizer options: {exc}") from None
    if cfg["batch"] is not None:
        b = cfg["batch"]
        for key in ("times", "deltas"):
            if key not in b:
                raise ConfigError(f"missing required field 'batch.{key}'")
        cfg["batch"] = {
            "times": [[float(T), int(K)] for T, K in b["times"]],
            "deltas": [float(d) for d in b["deltas"]],
            "runs": int(b.get("runs", 1)),
        }
    try:
        build_problem(cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(source) -> dict:
    """Load and resolve a YAML file path or a bundled preset name."""
    try:
        return resolve_config(_read_document(source))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)


def optimizer_options(cfg: dict) -> OptimizerOptions:
    return OptimizerOptions(**cfg.get("optimizer") or {})


def _network(cfg: dict, with_noise: bool = True):
    if cfg["model"] == "markovian" or not with_noise or cfg["n_noise"] == 0:
        return chain_network(cfg["system_omega"], cfg["system_coupling"])
    spec = noise_network(cfg["system_omega"], cfg["noise_omega"], cfg["system_coupling"],
                         cfg["noise_coupling"], cfg["topology"], cfg["leakage"])
    if cfg["detuning"]:
        n1 = spec.n_system
        spec = spec.with_changes(omega=spec.omega[:n1] + tuple(w + cfg["detuning"] for w in spec.omega[n1:]))
    return spec


def build_problem(cfg: dict, T: float | None = None, K: int | None = None) -> GateProblem:
    """Problem described by a resolved configuration (T, K only label the problem)."""
    n1 = len(cfg["system_omega"])
    target = target_gate(cfg["target"], n1)
    spec = _network(cfg)
    label = cfg.get("name", "")
    if cfg["model"] == "markovian":
        lind = LindbladSpec(
            [LindbladChannel(ch["kind"], ch["rate"], ch.get("qubits")) for ch in cfg["decoherence"]],
            cfg["rate_convention"],
        )
        method = "augmented" if cfg["method"] == "auto" else cfg["method"]
        return markovian_problem(spec, lind, target, method, label)
    method = "spectral" if cfg["method"] == "auto" else cfg["method"]
    return hamiltonian_problem(spec, target, method, label)


def build_closed_problem(cfg: dict) -> GateProblem:
    """The same system with no decoherence and no noise qubits."""
    spec = _network(cfg, with_noise=False)
    return hamiltonian_problem(spec, target_gate(cfg["target"], spec.n_system), "spectral",
                               cfg.get("name", "") + ":closed")


def _factory(cfg, T, K):
    return build_problem(cfg, T, K)


def problem_factory(cfg: dict):
    """Picklable ``(T, K) -> GateProblem`` callable for batch runs."""
    return partial(_factory, cfg)
