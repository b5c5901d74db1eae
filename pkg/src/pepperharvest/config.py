"""Run configuration: TOML loading, profiles, validation and mapping onto pipeline parameters.

Layering, lowest to highest precedence: packaged defaults, an optional
profile (``paper_defaults``), a user TOML file, then explicit overrides
(usually command-line flags). Every layer uses the same ``section.key``
layout and unknown keys are rejected at load time.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from .color import GaussianColorModel
from .detect import DetectParams
from .errors import ConfigError
from .grasp import GraspWeights
from .peduncle import FilterParams, PatchClassifier
from .sim.harvest import HarvestParams, Tolerances
from .sim.scene import SceneSpec
from .sim.trajectory import TrajectoryOffsets

PROFILE_TABLE = "paper_defaults"
SCORERS = ("gaussian", "scoremap", "patch")
SCENARIOS = ("unmodified", "modified")

# keys that may be zero; everything numeric not listed here (or in _ANY) must be > 0
_NON_NEGATIVE = {
    "scene.leaf_occlusion_fraction",
    "scene.color_noise",
    "scene.depth_noise",
    "scene.background_leaves_per_plant",
    "scene.difficult_pepper_fraction",
    "scene.difficult_peduncle_fraction",
    "scene.unripe_fraction",
    "scene.pepper_count",
    "color.mu",
    "trajectory.seal_offset",
    "tolerances.difficult_attach_failure",
    "grasp.weights",
    "peduncle.mu",
    "peduncle.threshold",
}
_ANY = {"color.threshold"}
_UNIT = {
    "peduncle.threshold",
    "tolerances.difficult_attach_failure",
    "scene.leaf_occlusion_fraction",
    "scene.difficult_pepper_fraction",
    "scene.difficult_peduncle_fraction",
    "scene.unripe_fraction",
}


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _packaged() -> dict:
    with resources.files("pepperharvest").joinpath("data/default.toml").open("rb") as fh:
        return tomli.load(fh)


def default_document() -> tuple[dict, dict]:
    """Packaged defaults and profiles, as two nested dicts."""
    doc = _packaged()
    profiles = {PROFILE_TABLE: doc.pop(PROFILE_TABLE)}
    return doc, profiles


def _check_type(name: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
        if ok and default and not isinstance(default[0], str):
            ok = len(value) == len(default) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
            )
            value = [float(v) for v in value] if ok else value
        elif ok:
            ok = all(isinstance(v, str) for v in value)
    else:  # pragma: no cover - defaults only hold the types above
        ok = False
    if not ok:
        raise ConfigError(f"{name}: expected {type(default).__name__} like {default!r}, got {value!r}")
    return value


def merge(base: dict, layer: dict, source: str = "config") -> dict:
    """Overlay ``layer`` onto ``base``; unknown sections or keys raise ConfigError."""
    out = copy.deepcopy(base)
    for section, table in layer.items():
        if section not in out:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        for key, value in table.items():
            if key not in out[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            out[section][key] = _check_type(f"{section}.{key}", value, base[section][key])
    return out


def _validate(values: dict) -> None:
    for section, table in values.items():
        for key, value in table.items():
            name = f"{section}.{key}"
            if name in _ANY or isinstance(value, str) or (isinstance(value, list) and value and isinstance(value[0], str)):
                continue
            nums = value if isinstance(value, list) else [value]
            if any(not math.isfinite(v) for v in nums):
                raise ConfigError(f"{name}: values must be finite, got {value!r}")
            if name in _NON_NEGATIVE:
                if any(v < 0 for v in nums):
                    raise ConfigError(f"{name}: must be non-negative, got {value!r}")
            elif any(v <= 0 for v in nums):
                raise ConfigError(f"{name}: must be positive, got {value!r}")
            if name in _UNIT and any(v > 1 for v in nums):
                raise ConfigError(f"{name}: must lie in [0, 1], got {value!r}")

    w = values["grasp"]["weights"]
    if abs(sum(w) - 1.0) > 1e-9:
        raise ConfigError(f"grasp.weights must sum to 1, got {w} (sum {sum(w):.6g})")
    if values["grasp"]["angle_threshold"] > math.pi / 2:
        raise ConfigError("grasp.angle_threshold must not exceed pi/2")
    for section in ("detect", "peduncle"):
        if values[section]["cluster_min"] > values[section]["cluster_max"]:
            raise ConfigError(f"{section}: cluster_min exceeds cluster_max")
    for section in ("color", "peduncle"):
        mu = values[section]["mu"]
        if mu[0] >= 360.0 or mu[1] > 1.0 or mu[2] > 1.0:
            raise ConfigError(f"{section}.mu: hue must be in [0, 360) and s, v in [0, 1], got {mu}")
    ped = values["peduncle"]
    if ped["scorer"] not in SCORERS:
        raise ConfigError(f"peduncle.scorer must be one of {SCORERS}, got {ped['scorer']!r}")
    if ped["scorer"] == "patch" and not ped["patch_model"]:
        raise ConfigError("peduncle.scorer = 'patch' needs peduncle.patch_model")
    scen = values["sim"]["scenarios"]
    if not scen or any(s not in SCENARIOS for s in scen) or len(set(scen)) != len(scen):
        raise ConfigError(f"sim.scenarios must be a non-empty subset of {SCENARIOS}, got {scen}")
    try:
        _scene_spec(values)
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from exc


def _scene_spec(values: dict, seed: int = 0) -> SceneSpec:
    sc = dict(values["scene"])
    sc["pepper_size_range"] = tuple(sc["pepper_size_range"])
    sc["pepper_height_range"] = tuple(sc["pepper_height_range"])
    return SceneSpec(rng_seed=seed, **sc)


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value`` with a TOML value (``grasp.weights=[0.3,0.4,0.3]``)."""
    name, sep, raw = text.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot or not key:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()  # bare strings, e.g. peduncle.scorer=gaussian
    return section, key, value


@dataclass(frozen=True)
class RunConfig:
    """Validated nested configuration values (``section -> key -> value``)."""

    values: dict
    profile: str | None = None

    @classmethod
    def load(cls, path=None, profile: str | None = None, overrides=None) -> "RunConfig":
        """Build a config from defaults, ``profile``, the TOML at ``path`` and ``overrides``.

        ``overrides`` maps ``"section.key"`` to a value, or is a list of
        ``section.key=value`` strings; either way they win over the file.
        A top-level ``profile = "..."`` key in the file selects a profile
        unless ``profile`` is given explicitly.
        """
        values, profiles = default_document()
        user = _read_toml(path) if path is not None else {}
        file_profile = user.pop("profile", None)
        if PROFILE_TABLE in user:
            # a file may restate or edit the profile table; it only applies when selected
            table = user.pop(PROFILE_TABLE)
            if not isinstance(table, dict):
                raise ConfigError(f"{path}: [{PROFILE_TABLE}] must be a table")
            merge(values, table, f"{path} [{PROFILE_TABLE}]")
            profiles[PROFILE_TABLE] = copy.deepcopy(profiles[PROFILE_TABLE])
            for section, keys in table.items():
                profiles[PROFILE_TABLE].setdefault(section, {}).update(keys)
        profile = profile if profile is not None else file_profile
        if profile is not None:
            if profile not in profiles:
                raise ConfigError(f"unknown profile {profile!r}; available: {sorted(profiles)}")
            values = merge(values, profiles[profile], f"profile {profile}")
        values = merge(values, user, str(path))
        layer: dict = {}
        items = overrides.items() if isinstance(overrides, dict) else (
            ((f"{s}.{k}", v) for s, k, v in map(parse_override, overrides or ()))
        )
        for name, value in items:
            section, _, key = name.partition(".")
            layer.setdefault(section, {})[key] = value
        values = merge(values, layer, "override")
        _validate(values)
        return cls(values, profile)

    def get(self, name: str):
        section, _, key = name.partition(".")
        return self.values[section][key]

    def dumps(self) -> str:
        return json.dumps({"profile": self.profile, "values": self.values}, indent=2, sort_keys=True) + "\n"

    # mapping onto pipeline parameter objects

    def pepper_model(self) -> GaussianColorModel:
        c = self.values["color"]
        return GaussianColorModel(c["mu"], c["sigma"])

    def peduncle_model(self) -> GaussianColorModel:
        p = self.values["peduncle"]
        return GaussianColorModel(p["mu"], p["sigma"])

    def detect_params(self) -> DetectParams:
        d = self.values["detect"]
        return DetectParams(
            threshold=self.values["color"]["threshold"],
            downsample_radius=d["downsample_radius"],
            cluster_tolerance=d["cluster_tolerance"],
            cluster_min=d["cluster_min"],
            cluster_max=d["cluster_max"],
            sor_k=d["sor_k"],
            sor_stddev_mult=d["sor_stddev_mult"],
        )

    def filter_params(self) -> FilterParams:
        p = self.values["peduncle"]
        return FilterParams(
            threshold=p["threshold"],
            color_threshold=self.values["color"]["threshold"],
            downsample_radius=p["downsample_radius"],
            cluster_tolerance=p["cluster_tolerance"],
            cluster_min=p["cluster_min"],
            cluster_max=p["cluster_max"],
        )

    def grasp_weights(self) -> GraspWeights:
        return GraspWeights(*self.values["grasp"]["weights"])

    def scene_spec(self, seed: int = 0, modified: bool = False) -> SceneSpec:
        """Scene for ``seed``; the modified scenario removes the occluding leaves."""
        spec = _scene_spec(self.values, seed)
        return spec.with_(leaf_occlusion_fraction=0.0) if modified else spec

    def harvest_params(self) -> HarvestParams:
        v = self.values
        p = v["peduncle"]
        patch = None
        if p["scorer"] == "patch":
            try:
                patch = PatchClassifier.load(p["patch_model"])
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError(f"cannot load peduncle.patch_model {p['patch_model']!r}: {exc}") from exc
        return HarvestParams(
            pepper_model=self.pepper_model(),
            peduncle_model=self.peduncle_model(),
            detect=self.detect_params(),
            filter=self.filter_params(),
            h_offset=p["h_offset"],
            weights=self.grasp_weights(),
            patch_radius=v["grasp"]["patch_size"],
            angle_threshold=v["grasp"]["angle_threshold"],
            max_attempts=v["grasp"]["max_attempts"],
            standoff=v["viewpoint"]["standoff"],
            vertical_offset=v["viewpoint"]["vertical_offset"],
            long_range_standoff=v["viewpoint"]["long_range_standoff"],
            camera_height=v["viewpoint"]["camera_height"],
            platform_step=v["sim"]["platform_step"],
            reach_half_width=v["sim"]["reach_half_width"],
            offsets=TrajectoryOffsets(**v["trajectory"]),
            tolerances=Tolerances(**v["tolerances"]),
            scorer=p["scorer"],
            patch_scorer=patch,
            timing={k: tuple(val) for k, val in v["timing"].items()},
        )


def write_default_config(path) -> None:
    """Copy the packaged default TOML (including the profile) to ``path``."""
    Path(path).write_bytes(resources.files("pepperharvest").joinpath("data/default.toml").read_bytes())
