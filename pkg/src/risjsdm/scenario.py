"""Scenario configuration: defaults, TOML files, dotted overrides, hashing.

A scenario file is TOML.  Only ``name`` is required; every other field
falls back to the default deployment below.  Unknown keys are rejected.

=================  ==========================  ===================================
field              default                     meaning
=================  ==========================  ===================================
carrier_hz         6.5e9                       carrier frequency (Hz)
bs_position        [0, 0, 30]                  BS array center (m)
bs_array           [9, 9]                      BS UPA (vertical, horizontal)
ris_array          [20, 20]                    RIS UPA (vertical, horizontal)
ris_dft_indices    see ``DEFAULT_DFT_INDICES``  BS DFT index (p, q) per RIS
ris_distances      see ``DEFAULT_DISTANCES``   BS -> RIS distance per RIS (m)
horizontal_axis    "y"                         global axis of the array rows
groups             3 rings on the x axis       [[groups]] center/radius/ue_count
ue_height          0.5                         UE height (m)
kappa_b_db         10                          BS-RIS Rician factor (dB, inf ok)
kappa_u_db         10                          RIS-UE Rician factor (dB, inf ok)
n_nlos_paths       8                           NLoS paths per link
noise_dbm          -110                        noise power
p_max_dbm          50                          total transmit power
omit_direct        true                        drop the blocked BS-UE link
pene_loss_db       75                          penetration loss if kept
sigma_offset       0                           RIS position offset std (m)
quant_bits         0                           phase bits (0 = continuous)
pn_variance        0                           additive reflection noise variance
tau                1/sqrt(2)                   in-group gain floor (noise-limited)
bias_step_scale    1                           bias grid step is 2 pi / (M * scale)
bias_in_set        "assigned"                  in-group UEs of the min-max ISR objective
bias_out_set       "group"                     out-of-group UEs of both bias objectives
noise_constraint   "served"                    in-group UEs bound by the gain floor
erank_weights      "sqrt"                      effective-rank weighting
base_seed          20240601                    experiment seed
n_trials           200                         Monte Carlo trials per point
redraw_ues         false                       redraw UE drops every trial
association_cap    1000000                     brute-force search limit
configs            [1, 2, 3, 4]                reflection configurations to run
=================  ==========================  ===================================
"""

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, fields, replace

import tomli
import tomli_w

from .errors import ScenarioError
from .geometry import GroupSpec

__all__ = [
    "Scenario",
    "DEFAULT_DFT_INDICES",
    "DEFAULT_DISTANCES",
    "default_scenario",
    "scenario_from_dict",
    "load_scenario",
    "loads_scenario",
    "dumps_scenario",
    "save_scenario",
    "apply_overrides",
    "parse_override",
]

# Pairs (1, 2), (3, 4), (5, 6) face the group rings at 60, 80 and 100 m.
DEFAULT_DFT_INDICES = ((5, 6), (5, 3), (5, 5), (5, 4), (4, 5), (4, 4))
DEFAULT_DISTANCES = (60.81, 60.81, 80.0, 80.0, 100.0, 100.0)
DEFAULT_GROUPS = (
    GroupSpec((60.0, 0.0, 0.0), 2.0, 3),
    GroupSpec((80.0, 0.0, 0.0), 3.0, 3),
    GroupSpec((100.0, 0.0, 0.0), 4.0, 3),
)


@dataclass(frozen=True)
class Scenario:
    name: str
    carrier_hz: float = 6.5e9
    bs_position: tuple = (0.0, 0.0, 30.0)
    bs_array: tuple = (9, 9)
    ris_array: tuple = (20, 20)
    ris_dft_indices: tuple = DEFAULT_DFT_INDICES
    ris_distances: tuple = DEFAULT_DISTANCES
    horizontal_axis: str = "y"
    groups: tuple = DEFAULT_GROUPS
    ue_height: float = 0.5
    kappa_b_db: float = 10.0
    kappa_u_db: float = 10.0
    n_nlos_paths: int = 8
    noise_dbm: float = -110.0
    p_max_dbm: float = 50.0
    omit_direct: bool = True
    pene_loss_db: float = 75.0
    sigma_offset: float = 0.0
    quant_bits: int = 0
    pn_variance: float = 0.0
    tau: float = 1.0 / math.sqrt(2.0)
    bias_step_scale: float = 1.0
    bias_in_set: str = "assigned"
    bias_out_set: str = "group"
    noise_constraint: str = "served"
    erank_weights: str = "sqrt"
    base_seed: int = 20240601
    n_trials: int = 200
    redraw_ues: bool = False
    association_cap: int = 1_000_000
    configs: tuple = (1, 2, 3, 4)

    def __post_init__(self):
        _validate(self)

    @property
    def K(self):
        return len(self.ris_dft_indices)

    @property
    def N(self):
        return sum(g.ue_count for g in self.groups)

    @property
    def C(self):
        return len(self.groups)

    @property
    def noise_watts(self):
        return dbm_to_watts(self.noise_dbm)

    @property
    def p_max_watts(self):
        return dbm_to_watts(self.p_max_dbm)

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "groups":
                v = [{"center": list(g.center), "radius": g.radius, "ue_count": g.ue_count} for g in v]
            elif f.name == "ris_dft_indices":
                v = [list(p) for p in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def content_hash(self):
        """SHA-256 of the canonical JSON form (stable across runs and machines)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


_KINDS = {
    "name": "str",
    "carrier_hz": "float",
    "bs_position": "vec3",
    "bs_array": "pair",
    "ris_array": "pair",
    "ris_dft_indices": "pairs",
    "ris_distances": "floats",
    "horizontal_axis": "str",
    "groups": "groups",
    "ue_height": "float",
    "kappa_b_db": "float",
    "kappa_u_db": "float",
    "n_nlos_paths": "int",
    "noise_dbm": "float",
    "p_max_dbm": "float",
    "omit_direct": "bool",
    "pene_loss_db": "float",
    "sigma_offset": "float",
    "quant_bits": "int",
    "pn_variance": "float",
    "tau": "float",
    "bias_step_scale": "float",
    "bias_in_set": "str",
    "bias_out_set": "str",
    "noise_constraint": "str",
    "erank_weights": "str",
    "base_seed": "int",
    "n_trials": "int",
    "redraw_ues": "bool",
    "association_cap": "int",
    "configs": "ints",
}
_GROUP_KEYS = {"center", "radius", "ue_count"}


def _fail(msg, text=None, key=None):
    if text is not None and key is not None:
        m = re.search(rf"^[ \t]*{re.escape(key)}[ \t]*=", text, flags=re.MULTILINE)
        if m is None:
            m = re.search(re.escape(key), text)
        if m is not None:
            line = text.count("\n", 0, m.start()) + 1
            msg = f"line {line}: {msg}"
    raise ScenarioError(msg)


def _num(v, key, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{key}: expected a number, got {type(v).__name__} {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ScenarioError(f"{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _convert(key, kind, v):
    if kind == "str":
        if not isinstance(v, str):
            raise ScenarioError(f"{key}: expected a string, got {type(v).__name__}")
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            raise ScenarioError(f"{key}: expected true/false, got {v!r}")
        return v
    if kind == "float":
        return _num(v, key)
    if kind == "int":
        return _num(v, key, integer=True)
    if not isinstance(v, (list, tuple)):
        raise ScenarioError(f"{key}: expected an array, got {type(v).__name__}")
    if kind == "vec3":
        if len(v) != 3:
            raise ScenarioError(f"{key}: expected 3 coordinates, got {len(v)}")
        return tuple(_num(x, key) for x in v)
    if kind == "pair":
        if len(v) != 2:
            raise ScenarioError(f"{key}: expected [vertical, horizontal], got {len(v)} values")
        return tuple(_num(x, key, integer=True) for x in v)
    if kind == "pairs":
        return tuple(_convert(f"{key}[{i}]", "pair", p) for i, p in enumerate(v))
    if kind == "floats":
        return tuple(_num(x, key) for x in v)
    if kind == "ints":
        return tuple(_num(x, key, integer=True) for x in v)
    if kind == "groups":
        out = []
        for i, g in enumerate(v):
            if not isinstance(g, dict):
                raise ScenarioError(f"{key}[{i}]: expected a table")
            extra = set(g) - _GROUP_KEYS
            if extra:
                raise ScenarioError(f"{key}[{i}]: unknown key(s) {sorted(extra)}")
            missing = _GROUP_KEYS - set(g)
            if missing:
                raise ScenarioError(f"{key}[{i}]: missing key(s) {sorted(missing)}")
            try:
                out.append(
                    GroupSpec(
                        _convert(f"{key}[{i}].center", "vec3", g["center"]),
                        _num(g["radius"], f"{key}[{i}].radius"),
                        _num(g["ue_count"], f"{key}[{i}].ue_count", integer=True),
                    )
                )
            except ValueError as exc:
                raise ScenarioError(f"{key}[{i}]: {exc}") from exc
        return tuple(out)
    raise AssertionError(kind)


def _validate(s):
    if not s.name:
        raise ScenarioError("name must be non-empty")
    if len(s.ris_distances) != len(s.ris_dft_indices):
        raise ScenarioError(
            f"ris_distances has {len(s.ris_distances)} entries but ris_dft_indices has {len(s.ris_dft_indices)}"
        )
    if len(set(s.ris_dft_indices)) != len(s.ris_dft_indices):
        raise ScenarioError("ris_dft_indices must be distinct")
    if not s.ris_dft_indices:
        raise ScenarioError("need at least one RIS")
    if s.horizontal_axis not in ("x", "y"):
        raise ScenarioError(f"horizontal_axis must be 'x' or 'y', got {s.horizontal_axis!r}")
    if s.bias_in_set not in ("assigned", "served", "group"):
        raise ScenarioError(f"bias_in_set must be 'assigned', 'served' or 'group', got {s.bias_in_set!r}")
    if s.bias_out_set not in ("served", "group"):
        raise ScenarioError(f"bias_out_set must be 'served' or 'group', got {s.bias_out_set!r}")
    if s.noise_constraint not in ("assigned", "served", "group"):
        raise ScenarioError(
            f"noise_constraint must be 'assigned', 'served' or 'group', got {s.noise_constraint!r}"
        )
    if s.erank_weights not in ("sqrt", "sv"):
        raise ScenarioError(f"erank_weights must be 'sqrt' or 'sv', got {s.erank_weights!r}")
    checks = [
        ("carrier_hz", s.carrier_hz > 0),
        ("bs_array", min(s.bs_array) >= 1),
        ("ris_array", min(s.ris_array) >= 1),
        ("ris_distances", all(d > 0 for d in s.ris_distances)),
        ("groups", len(s.groups) >= 1),
        ("ue_height", s.ue_height >= 0),
        ("bs_position", s.bs_position[2] >= 0),
        ("n_nlos_paths", s.n_nlos_paths >= 1),
        ("kappa_b_db", not math.isnan(s.kappa_b_db)),
        ("kappa_u_db", not math.isnan(s.kappa_u_db)),
        ("pene_loss_db", s.pene_loss_db >= 0),
        ("sigma_offset", s.sigma_offset >= 0),
        ("quant_bits", s.quant_bits >= 0),
        ("pn_variance", s.pn_variance >= 0),
        ("tau", 0 <= s.tau <= 1),
        ("bias_step_scale", s.bias_step_scale > 0),
        ("n_trials", s.n_trials >= 1),
        ("association_cap", s.association_cap >= 1),
        ("configs", len(s.configs) >= 1 and all(c in (1, 2, 3, 4) for c in s.configs)),
    ]
    for key, ok in checks:
        if not ok:
            raise ScenarioError(f"{key}: value {getattr(s, key)!r} out of range")
    if s.K > s.bs_array[0] * s.bs_array[1]:
        raise ScenarioError(f"{s.K} RISs exceed the {s.bs_array[0] * s.bs_array[1]} BS antennas")
    if s.N < s.C:
        raise ScenarioError("fewer UEs than groups")


def scenario_from_dict(raw, text=None):
    """Build a :class:`Scenario` from a parsed mapping; ``text`` gives line context."""
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a table")
    unknown = [k for k in raw if k not in _KINDS]
    if unknown:
        _fail(f"unknown key {unknown[0]!r}", text, unknown[0])
    if "name" not in raw:
        raise ScenarioError("missing required field 'name'")
    kwargs = {}
    for key, v in raw.items():
        try:
            kwargs[key] = _convert(key, _KINDS[key], v)
        except ScenarioError as exc:
            _fail(str(exc), text, key)
    return Scenario(**kwargs)


def default_scenario(name="default"):
    return Scenario(name=name)


def loads_scenario(text, overrides=()):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML parse error: {exc}") from exc
    raw = apply_overrides(raw, overrides)
    return scenario_from_dict(raw, text)


def load_scenario(path, overrides=()):
    """Read a scenario file (``"default"`` selects the built-in deployment)."""
    if str(path) == "default":
        raw = default_scenario().to_dict()
        return scenario_from_dict(apply_overrides(raw, overrides))
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        return loads_scenario(text, overrides)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def dumps_scenario(scenario):
    return tomli_w.dumps(scenario.to_dict())


def save_scenario(scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(scenario))


def parse_override(item):
    """``"a.b.0=3"`` -> ``(["a", "b", 0], 3)``; the value is read as TOML, else as a string."""
    if "=" not in item:
        raise ScenarioError(f"override {item!r} is not KEY=VALUE")
    key, value = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ScenarioError(f"override {item!r} has an empty key")
    path = [int(p) if p.isdigit() else p for p in key.split(".")]
    try:
        parsed = tomli.loads(f"v = {value.strip()}")["v"]
    except tomli.TOMLDecodeError:
        parsed = value.strip()
    return path, parsed


def apply_overrides(raw, overrides):
    """Apply dotted ``KEY=VALUE`` overrides to a raw scenario mapping."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        path, value = parse_override(item)
        if path[0] not in _KINDS:
            raise ScenarioError(f"override: unknown key {path[0]!r}")
        target = raw
        if len(path) > 1 and path[0] not in raw:
            raw[path[0]] = default_scenario().to_dict()[path[0]]
        for i, p in enumerate(path[:-1]):
            try:
                target = target[p]
            except (KeyError, IndexError, TypeError):
                raise ScenarioError(f"override: no element {'.'.join(map(str, path[: i + 1]))}") from None
        last = path[-1]
        try:
            if isinstance(target, list):
                target[last] = value
            elif isinstance(target, dict):
                if target is not raw and last not in target and last not in _GROUP_KEYS:
                    raise ScenarioError(f"override: unknown key {last!r}")
                target[last] = value
            else:
                raise TypeError
        except (IndexError, TypeError):
            raise ScenarioError(f"override: cannot set {'.'.join(map(str, path))}") from None
    return raw
