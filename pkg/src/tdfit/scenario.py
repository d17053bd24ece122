"""Scenario files: the experiment description consumed by ``bench`` and ``crlb``.

A scenario is a flat YAML mapping with a ``schema: 1`` key, for example::

    schema: 1
    delays_ns: [100, 175, 310]
    band_centers_mhz: [100, 120, 160]
    bandwidth_mhz: 20
    subcarriers: 64
    snr_db: [0, 10, 20, 30]
    trials: 200

Errors are reported against the line of the offending key.
"""

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from .errors import ArgumentError, ConfigError
from .frontend import ProbeConfig
from .hankel import default_q_cols
from .model import BandPlan, MultipathChannel, check_delays

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

ESTIMATOR_NAMES = ("proposed", "proposed_unweighted", "esprit", "mresprit", "mimusic")
DEFAULT_ESTIMATORS = ["proposed", "esprit", "mresprit", "mimusic"]

_MISSING = object()

# Descriptive names accepted for the full-scale presets
PRESET_ALIASES = {
    "wideband_snr": "paper_fig2a",
    "wideband_snapshots": "paper_fig2b",
    "wideband_unequal_snr": "paper_fig2c",
    "wideband_unequal_snapshots": "paper_fig2d",
}


def _number(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError("expected a number")
    return float(value)


def _integer(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError("expected an integer")
    return int(value)


def _boolean(value) -> bool:
    if not isinstance(value, bool):
        raise TypeError("expected true or false")
    return value


def _string(value) -> str:
    if not isinstance(value, str):
        raise TypeError("expected a string")
    return value


def _number_list(value) -> List[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if not isinstance(value, list) or not value:
        raise TypeError("expected a non-empty list of numbers")
    return [_number(v) for v in value]


def _integer_list(value) -> List[int]:
    if not isinstance(value, list) or not value:
        raise TypeError("expected a non-empty list of integers")
    return [_integer(v) for v in value]


def _string_list(value) -> List[str]:
    if not isinstance(value, list) or not value:
        raise TypeError("expected a non-empty list of names")
    return [_string(v) for v in value]


def _optional_integer(value) -> Optional[int]:
    return None if value is None else _integer(value)


def _optional_number(value) -> Optional[float]:
    return None if value is None else _number(value)


def _optional_integer_list(value) -> Optional[List[int]]:
    return None if value is None else _integer_list(value)


# key -> (parser, default); _MISSING marks required keys
SCENARIO_KEYS: Dict[str, Tuple[Callable[[Any], Any], Any]] = {
    "schema": (_integer, _MISSING),
    "name": (_string, None),
    "delays_ns": (_number_list, _MISSING),
    "delay_grid_ps": (_optional_number, None),
    "rician_k_db": (_number, 5.0),
    "fixed_gains": (_boolean, False),
    "band_centers_mhz": (_number_list, _MISSING),
    "bandwidth_mhz": (_number, _MISSING),
    "subcarriers": (_integer, _MISSING),
    "pilots": (_string, "zadoff-chu"),
    "cp_fraction": (_number, 0.25),
    "axis": (_string, "snr"),
    "snr_db": (_number_list, _MISSING),
    "snapshots": (_integer, 10),
    "snapshot_axis": (_optional_integer_list, None),
    "offsets_db": (_number_list, None),
    "trials": (_integer, _MISSING),
    "estimators": (_string_list, list(DEFAULT_ESTIMATORS)),
    "q_cols": (_optional_integer, None),
    "music_grid_factor": (_integer, 10),
    "master_seed": (_integer, 0),
}


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated Monte-Carlo experiment."""

    name: str
    delays: np.ndarray
    plan: BandPlan
    snr_db: List[float]
    trials: int
    offsets_db: np.ndarray
    snapshots: int = 10
    axis: str = "snr"
    snapshot_axis: Optional[List[int]] = None
    rician_k_db: float = 5.0
    fixed_gains: bool = False
    pilots: str = "zadoff-chu"
    cp_fraction: float = 0.25
    estimators: List[str] = field(default_factory=lambda: list(DEFAULT_ESTIMATORS))
    q_cols: Optional[int] = None
    music_grid_factor: int = 10
    master_seed: int = 0
    delay_grid_ps: Optional[float] = None
    source: Optional[str] = None

    @property
    def k_paths(self) -> int:
        return int(self.delays.size)

    @property
    def axis_values(self) -> List[float]:
        if self.axis == "snapshots":
            return [int(s) for s in self.snapshot_axis]
        return list(self.snr_db)

    def snr_at(self, axis_index: int) -> float:
        return self.snr_db[axis_index] if self.axis == "snr" else self.snr_db[0]

    def snapshots_at(self, axis_index: int) -> int:
        return self.snapshot_axis[axis_index] if self.axis == "snapshots" else self.snapshots

    def probe(self) -> ProbeConfig:
        return ProbeConfig.default(self.plan, pilots=self.pilots, cp_fraction=self.cp_fraction)

    def channel(self, gains: np.ndarray) -> MultipathChannel:
        return MultipathChannel(gains=gains, delays=self.delays)

    def to_dict(self) -> Dict[str, Any]:
        """Flat key/value form, loadable again by :func:`load_scenario`."""
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "delays_ns": [float(t * 1e9) for t in self.delays],
            "delay_grid_ps": self.delay_grid_ps,
            "rician_k_db": float(self.rician_k_db),
            "fixed_gains": bool(self.fixed_gains),
            "band_centers_mhz": [float(f / 1e6) for f in self.plan.band_centers_hz],
            "bandwidth_mhz": float(self.plan.bandwidth / 1e6),
            "subcarriers": self.plan.n_subcarriers,
            "pilots": self.pilots,
            "cp_fraction": float(self.cp_fraction),
            "axis": self.axis,
            "snr_db": [float(s) for s in self.snr_db],
            "snapshots": int(self.snapshots),
            "snapshot_axis": None if self.snapshot_axis is None else list(self.snapshot_axis),
            "offsets_db": [float(o) for o in self.offsets_db],
            "trials": int(self.trials),
            "estimators": list(self.estimators),
            "q_cols": self.q_cols,
            "music_grid_factor": int(self.music_grid_factor),
            "master_seed": int(self.master_seed),
        }


def draw_gains(k_paths: int, rician_k_db: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-mean-power gains: Rician LOS (first path), Rayleigh for the rest."""
    scatter = (rng.standard_normal(k_paths) + 1j * rng.standard_normal(k_paths)) / np.sqrt(2.0)
    kappa = 10.0 ** (rician_k_db / 10.0)
    los_phase = np.exp(2j * np.pi * rng.random())
    gains = scatter.copy()
    los = np.sqrt(kappa / (kappa + 1.0)) * los_phase
    gains[0] = los + np.sqrt(1.0 / (kappa + 1.0)) * scatter[0]
    return gains


def preset_names() -> List[str]:
    """Names of the scenario files shipped with the package."""
    presets = resources.files("tdfit") / "presets"
    return sorted(p.name[: -len(".cfg")] for p in presets.iterdir() if p.name.endswith(".cfg"))


def resolve_config(name_or_path: Union[str, Path]) -> Path:
    """Path of a scenario file, or of the shipped preset with that name."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    stem = path.name[: -len(".cfg")] if path.name.endswith(".cfg") else path.name
    stem = PRESET_ALIASES.get(stem, stem)
    if path.parent == Path(".") and stem in preset_names():
        return Path(str(resources.files("tdfit") / "presets" / f"{stem}.cfg"))
    raise ConfigError(
        f"no such scenario file or preset (presets: {', '.join(preset_names())})",
        path=name_or_path,
    )


def _key_lines(text: str, path: str) -> Dict[str, int]:
    try:
        root = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"invalid YAML: {exc.problem}", path, line) from exc
    if root is None:
        return {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("a scenario must be a mapping of keys to values", path, 1)
    return {key.value: key.start_mark.line + 1 for key, _ in root.value}


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Parse and validate a scenario file."""
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc.strerror}", source) from exc
    lines = _key_lines(text, source)
    raw = yaml.safe_load(text) or {}
    return scenario_from_dict(raw, source=source, lines=lines, default_name=path.stem)


def scenario_from_dict(
    raw: Dict[str, Any],
    source: Optional[str] = None,
    lines: Optional[Dict[str, int]] = None,
    default_name: str = "scenario",
) -> Scenario:
    """Validate a flat key/value mapping into a :class:`Scenario`."""
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigError("a scenario must be a mapping of keys to values", source, 1)

    def fail(key: Optional[str], message: str):
        raise ConfigError(message, source, lines.get(key) if key else None)

    values: Dict[str, Any] = {}
    for key in raw:
        if key not in SCENARIO_KEYS:
            fail(key, f"unknown key '{key}'")
    for key, (parse, default) in SCENARIO_KEYS.items():
        if key not in raw:
            if default is _MISSING:
                fail(None, f"missing required key '{key}'")
            values[key] = default
            continue
        try:
            values[key] = parse(raw[key])
        except TypeError as exc:
            fail(key, f"'{key}': {exc}, got {raw[key]!r}")

    if values["schema"] != SCHEMA_VERSION:
        fail("schema", f"unsupported schema {values['schema']} (expected {SCHEMA_VERSION})")

    try:
        plan = BandPlan.from_centers(
            [f * 1e6 for f in values["band_centers_mhz"]],
            values["bandwidth_mhz"] * 1e6,
            values["subcarriers"],
        )
    except ArgumentError as exc:
        fail("band_centers_mhz", f"invalid band plan: {exc}")

    delays_ns = np.asarray(values["delays_ns"])
    if np.any(np.diff(delays_ns) <= 0):
        fail("delays_ns", "delays must be strictly increasing")
    grid = values["delay_grid_ps"]
    if grid is not None:
        if grid <= 0:
            fail("delay_grid_ps", f"delay grid must be positive, got {grid}")
        taps = delays_ns * 1e3 / grid
        if np.any(np.abs(taps - np.rint(taps)) > 1e-6):
            fail("delays_ns", f"delays are not on the {grid:g} ps grid")
    delays = delays_ns * 1e-9
    try:
        check_delays(delays, plan)
    except ArgumentError as exc:
        fail("delays_ns", str(exc))

    if values["trials"] < 1:
        fail("trials", f"trials must be >= 1, got {values['trials']}")
    if values["snapshots"] < 1:
        fail("snapshots", f"snapshots must be >= 1, got {values['snapshots']}")
    if values["axis"] not in ("snr", "snapshots"):
        fail("axis", f"axis must be 'snr' or 'snapshots', got '{values['axis']}'")
    if values["axis"] == "snapshots":
        if values["snapshot_axis"] is None:
            fail("axis", "a snapshot sweep needs 'snapshot_axis'")
        if min(values["snapshot_axis"]) < 1:
            fail("snapshot_axis", "snapshot counts must be >= 1")
    if values["pilots"] not in ("zadoff-chu", "ones"):
        fail("pilots", f"pilots must be 'zadoff-chu' or 'ones', got '{values['pilots']}'")
    if not 0 <= values["cp_fraction"] <= 1:
        fail("cp_fraction", f"cp_fraction must be in [0, 1], got {values['cp_fraction']}")
    for name in values["estimators"]:
        if name not in ESTIMATOR_NAMES:
            fail("estimators", f"unknown estimator '{name}' (one of {', '.join(ESTIMATOR_NAMES)})")
    if values["music_grid_factor"] < 10:
        fail("music_grid_factor", "music_grid_factor must be >= 10")

    offsets = values["offsets_db"]
    if offsets is None:
        offsets = [0.0] * plan.n_bands
    if len(offsets) != plan.n_bands:
        fail("offsets_db", f"{len(offsets)} offsets given for {plan.n_bands} bands")

    k_paths = delays.size
    try:
        q_cols = values["q_cols"]
        if q_cols is None:
            default_q_cols(plan.n_subcarriers, k_paths)
        else:
            p_rows = plan.n_subcarriers - q_cols + 1
            if q_cols < k_paths or p_rows - 1 <= k_paths:
                raise ArgumentError(f"q_cols = {q_cols} is incompatible with K = {k_paths}")
    except ArgumentError as exc:
        fail("q_cols" if values["q_cols"] is not None else "subcarriers", str(exc))

    scenario = Scenario(
        name=values["name"] or default_name,
        delays=delays,
        plan=plan,
        snr_db=values["snr_db"],
        trials=values["trials"],
        offsets_db=np.asarray(offsets, dtype=float),
        snapshots=values["snapshots"],
        axis=values["axis"],
        snapshot_axis=values["snapshot_axis"],
        rician_k_db=values["rician_k_db"],
        fixed_gains=values["fixed_gains"],
        pilots=values["pilots"],
        cp_fraction=values["cp_fraction"],
        estimators=values["estimators"],
        q_cols=values["q_cols"],
        music_grid_factor=values["music_grid_factor"],
        master_seed=values["master_seed"],
        delay_grid_ps=grid,
        source=source,
    )
    logger.info(
        "scenario '%s': K=%d L=%d N=%d, %d %s points, %d trials",
        scenario.name,
        k_paths,
        plan.n_bands,
        plan.n_subcarriers,
        len(scenario.axis_values),
        scenario.axis,
        scenario.trials,
    )
    return scenario
