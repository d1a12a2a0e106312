"""Experiment configuration: YAML schema, defaults and validation."""
from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from .fock import HilbertConfig
from .gkp import CodeLattice, GkpStateSpec
from .grape import TrainConfig
from .lindblad import PRESETS, HamiltonianParams, IntegratorConfig, NoiseModel
from .sbs import Engine, Schedule


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_num = (int, float)
_opt_num = (int, float, type(None))

# block -> key -> (allowed types, default)
SCHEMA = {
    "hilbert": {"n_fock": (int, 100)},
    "code": {"lattice": (str, "square"), "l": (_num, 1.0), "delta": (_num, 0.34),
             "label": (str, "+Z"), "max_truncation_loss": (_num, 1e-6)},
    "noise": {"preset": (str, "low"), "lumped_dephasing": (bool, False), "T_s": (_opt_num, None),
              "T_1": (_opt_num, None), "T_2": (_opt_num, None), "T_phi_c_white": (_opt_num, None),
              "T_phi_c_lump": (_opt_num, None), "tau_cycle_us": (_num, 10.0)},
    "hamiltonian": {"chi": (_num, 0.0), "kerr": (_num, 0.0), "enabled": (bool, False)},
    "schedule": {"kind": (str, "standard"), "layer": (_num, 0.05)},
    "integrator": {"dt": (_num, 1.0 / 2000)},
    "circuit": {"alpha_l4": (list, [0.0, 0.0])},
    "policy": {"variant": (str, "standard"), "checkpoint": ((str, type(None)), None),
               "seed": (int, 0), "bias_init": ((int, float, str), 0.01), "zero_output": (bool, False),
               "depth": (int, 4)},
    "run": {"n_cycles": (int, 10), "n_batches": (int, 1), "batch_size": (int, 8), "seed": (int, 0),
            "mode": (str, "stochastic"), "outcomes": ((str, type(None)), None),
            "labels": (list, ["+Z"]), "log_z": (bool, True)},
    "train": {k: (object, None) for k in TrainConfig.__dataclass_fields__} | {
        "policy": (str, "gru"), "resume": ((str, type(None)), None)},
    "evaluate": {"labels": (list, ["-X", "-Y", "+Z"]), "n_cycles": (int, 20), "n_batches": (int, 2),
                 "batch_size": (int, 8), "seed": (int, 0), "policies": (list, ["standard"]),
                 "injection_alphas": (list, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
                 "injection_cycles": (int, 5), "bias": (bool, False)},
    "enumerate": {"n_half_cycles": (int, 4), "optimize_lookup": (bool, False), "maxiter": (int, 200)},
    "prepare": {"wigner_extent": (_num, 6.0), "wigner_points": (int, 61),
                "delta_ladder": (list, [0.5, 0.4, 0.3])},
    "output": {"dir": (str, "runs"), "label": ((str, type(None)), None)},
}

# blocks a command cannot run without
REQUIRED = {"train": ("train",)}


def defaults() -> dict:
    return {b: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for b, keys in SCHEMA.items()
            if b != "train"}


def _check_type(path, value, types):
    if types is object:
        return
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}: expected {types}, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {getattr(types, '__name__', types)}, got {type(value).__name__}")


def _coerce(value, types):
    # YAML 1.1 reads exponent floats without a dot (1e-6) as strings
    if isinstance(value, str) and types in (_num, _opt_num, object):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def merge(raw: dict | None, command: str | None = None) -> dict:
    """Validate ``raw`` against the schema and fill defaults."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a mapping")
    for b in REQUIRED.get(command, ()):
        if b not in raw:
            raise ConfigError(f"{b}: block required by the '{command}' command is missing")
    out = defaults()
    for block, body in raw.items():
        if block not in SCHEMA:
            raise ConfigError(f"{block}: unknown config block")
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError(f"{block}: expected a mapping")
        out.setdefault(block, {})
        for k, v in body.items():
            if k not in SCHEMA[block]:
                raise ConfigError(f"{block}.{k}: unknown key")
            v = _coerce(v, SCHEMA[block][k][0])
            _check_type(f"{block}.{k}", v, SCHEMA[block][k][0])
            out[block][k] = v
    validate(out)
    return out


def validate(c: dict) -> None:
    def bad(path, msg):
        raise ConfigError(f"{path}: {msg}")

    if c["hilbert"]["n_fock"] < 2:
        bad("hilbert.n_fock", "must be >= 2")
    d = c["code"]["delta"]
    if not 0 < d < 1:
        bad("code.delta", f"must lie in (0, 1), got {d}")
    if c["code"]["lattice"] not in ("square", "rectangular", "hexagonal"):
        bad("code.lattice", f"unknown lattice {c['code']['lattice']!r}")
    if c["code"]["label"] not in ("+Z", "-Z", "+X", "-X", "+Y", "-Y"):
        bad("code.label", f"unknown label {c['code']['label']!r}")
    p = c["noise"]["preset"]
    if p not in (*PRESETS, "none", "custom"):
        bad("noise.preset", f"unknown preset {p!r}")
    if c["schedule"]["kind"] not in ("standard", "autonomous", "simplified"):
        bad("schedule.kind", f"unknown schedule {c['schedule']['kind']!r}")
    if not c["integrator"]["dt"] > 0:
        bad("integrator.dt", "must be positive")
    if c["run"]["mode"] not in ("stochastic", "forced", "autonomous", "average"):
        bad("run.mode", f"unknown mode {c['run']['mode']!r}")
    if c["run"]["n_cycles"] < 0:
        bad("run.n_cycles", "must be non-negative")
    for k in ("n_batches", "batch_size"):
        if c["run"][k] < 1:
            bad(f"run.{k}", "must be positive")
    a = c["circuit"]["alpha_l4"]
    if len(a) != 2 or not all(isinstance(x, _num) for x in a):
        bad("circuit.alpha_l4", "expected [re, im]")
    if c["enumerate"]["n_half_cycles"] < 0:
        bad("enumerate.n_half_cycles", "must be non-negative")
    if c["policy"]["variant"] not in ("standard", "constant", "lookup", "fnn", "gru"):
        bad("policy.variant", f"unknown policy {c['policy']['variant']!r}")
    try:
        noise_model(c)
    except ValueError as e:
        raise ConfigError(f"noise: {e}") from None
    if "train" in c:
        try:
            train_config(c)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"train: {e}") from None


def load(path, command: str | None = None) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"<file>: cannot read {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"<file>: malformed YAML: {e}") from None
    return merge(raw, command)


def dump(c: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(c, sort_keys=True))


# -- builders -------------------------------------------------------------------------

def hilbert(c) -> HilbertConfig:
    return HilbertConfig(c["hilbert"]["n_fock"])


def lattice(c) -> CodeLattice:
    return CodeLattice.from_kind(c["code"]["lattice"], c["code"]["l"])


def state_spec(c, label=None, delta=None) -> GkpStateSpec:
    return GkpStateSpec(label or c["code"]["label"], delta or c["code"]["delta"], lattice(c), hilbert(c),
                        c["code"]["max_truncation_loss"])


def noise_model(c) -> NoiseModel:
    n = c["noise"]
    inf = math.inf
    if n["preset"] == "custom":
        return NoiseModel(*(inf if n[k] is None else float(n[k]) for k in
                            ("T_s", "T_1", "T_2", "T_phi_c_white", "T_phi_c_lump")),
                          tau_cycle_us=float(n["tau_cycle_us"]))
    return NoiseModel.preset(n["preset"], n["lumped_dephasing"], float(n["tau_cycle_us"]))


def schedule(c) -> Schedule:
    s = c["schedule"]
    return Schedule.simplified(s["layer"]) if s["kind"] == "simplified" else Schedule.from_kind(s["kind"])


def engine(c) -> Engine:
    h = c["hamiltonian"]
    a = c["circuit"]["alpha_l4"]
    return Engine(hilbert(c), noise_model(c), schedule(c),
                  HamiltonianParams(float(h["chi"]), float(h["kerr"]), bool(h["enabled"])),
                  IntegratorConfig(float(c["integrator"]["dt"])), complex(a[0], a[1]))


def train_config(c) -> TrainConfig:
    t = {k: v for k, v in c.get("train", {}).items()
         if k not in ("policy", "resume") and v is not None}
    t.setdefault("n_fock", c["hilbert"]["n_fock"])
    t.setdefault("delta", c["code"]["delta"])
    t.setdefault("noise_preset", c["noise"]["preset"] if c["noise"]["preset"] in PRESETS else "low")
    t.setdefault("dt", c["integrator"]["dt"])
    t.setdefault("schedule", c["schedule"]["kind"])
    t.setdefault("lumped_dephasing", c["noise"]["lumped_dephasing"])
    t.setdefault("alpha_l4_re", float(c["circuit"]["alpha_l4"][0]))
    t.setdefault("alpha_l4_im", float(c["circuit"]["alpha_l4"][1]))
    t.setdefault("max_truncation_loss", c["code"]["max_truncation_loss"])
    return TrainConfig(**t)
