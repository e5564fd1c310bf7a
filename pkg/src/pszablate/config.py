"""YAML run configuration.

Sections mirror the modules: ``geometry``, ``room``, ``atf``, ``filters``,
``metrics``, ``ablation`` and ``output``. Every section and key is
optional; unknown keys are rejected so typos cannot silently fall back
to defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .atf import STAGES, FrequencyGrid, check_stage
from .geometry import Listener, Loudspeaker, Scene, default_scene
from .room import RoomSpec
from .specfun import SeriesControl


class ConfigError(ValueError):
    pass


SCHEMA = {
    "geometry": {
        "preset", "array_center", "array_width", "row_separation", "listener_distance",
        "listener_offset", "head_radius", "control_points_per_ear", "control_ring_radius",
        "woofer_radius", "tweeter_radius", "speakers", "listeners", "speed_of_sound", "sample_rate",
    },
    "room": {"dimensions", "reflectances", "max_image_order", "rir_length"},
    "atf": {"n_fft", "max_order", "term_tol", "fr_dir", "synthetic_fr", "directivity", "hrtf"},
    "filters": {"lambda", "filter_length", "modeling_delay", "crossover_bins", "band_masks", "taper"},
    "metrics": {"epsilon"},
    "ablation": {"plan_id", "stages", "eval_stage"},
    "output": {"dir", "formats"},
}

PRESET_KEYS = SCHEMA["geometry"] - {"preset", "speakers", "listeners", "sample_rate", "speed_of_sound"}


@dataclass
class RunConfig:
    scene: Scene = field(default_factory=default_scene)
    n_fft: int = 16384
    ctl: SeriesControl = field(default_factory=SeriesControl)
    fr_dir: Path | None = None
    synthetic_fr: bool = True
    directivity: bool = True
    hrtf: bool = True
    lam: float = 1e-3
    filter_length: int = 4096
    modeling_delay: int | None = None
    crossover_bins: int = 2
    band_masks: bool = True
    taper: int | None = None
    epsilon: float | None = None
    plan_id: str = "ablation"
    stages: tuple = STAGES
    eval_stage: str = "C3"
    out_dir: Path = Path("out")
    formats: tuple = ("csv", "json")
    source: str | None = None

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(fs=self.scene.sample_rate, n_fft=self.n_fft)


def _key_lines(text):
    """Map dotted key paths to 1-based line numbers."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    walk(root, "")
    return lines


def parse_stages(value) -> tuple:
    items = value.split(",") if isinstance(value, str) else list(value)
    stages = tuple(s.strip() for s in items if str(s).strip())
    for s in stages:
        check_stage(s)
    return stages


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    lines = _key_lines(text)

    def where(key):
        ln = lines.get(key)
        return f"{path}:{ln}: '{key}'" if ln else f"{path}: '{key}'"

    for sec, body in data.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{where(sec)}: unknown section (expected one of {', '.join(SCHEMA)})")
        if body is None:
            data[sec] = {}
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{where(sec)}: section must be a mapping")
        for key in body:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{where(f'{sec}.{key}')}: unknown key")

    g, r, a = data.get("geometry", {}), data.get("room", {}), data.get("atf", {})
    f, m, ab, o = data.get("filters", {}), data.get("metrics", {}), data.get("ablation", {}), data.get("output", {})
    cfg = RunConfig(source=str(path))
    base = path.parent

    def field_(key, fn):
        try:
            return fn()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"{where(key)}: {exc}") from None

    room = field_("room", lambda: RoomSpec(**{"dimensions": (6.0, 5.0, 3.0), **r}))
    preset = g.get("preset", "default")
    common = {k: g[k] for k in ("speed_of_sound", "sample_rate") if k in g}
    if preset == "default":
        for k in ("speakers", "listeners"):
            if k in g:
                raise ConfigError(f"{where('geometry.' + k)}: only allowed with preset: custom")
        kw = {k: g[k] for k in PRESET_KEYS if k in g}
        cfg.scene = field_("geometry", lambda: default_scene(room=room, **kw, **common))
    elif preset == "custom":
        for k in PRESET_KEYS:
            if k in g:
                raise ConfigError(f"{where('geometry.' + k)}: not used with preset: custom")
        for k in ("speakers", "listeners"):
            if k not in g:
                raise ConfigError(f"{path}: geometry.{k} is required with preset: custom")
        speakers = field_("geometry.speakers", lambda: [Loudspeaker(**s) for s in g["speakers"]])
        listeners = field_("geometry.listeners", lambda: [Listener(**x) for x in g["listeners"]])
        cfg.scene = field_("geometry", lambda: Scene(room=room, speakers=speakers, listeners=listeners, **common))
    else:
        raise ConfigError(f"{where('geometry.preset')}: must be 'default' or 'custom'")

    if "n_fft" in a:
        cfg.n_fft = field_("atf.n_fft", lambda: FrequencyGrid(n_fft=a["n_fft"]).n_fft)
    cfg.ctl = field_("atf", lambda: SeriesControl(
        max_order=a.get("max_order", 80), term_tol=float(a.get("term_tol", 1e-9))))
    if a.get("fr_dir") is not None:
        p = Path(a["fr_dir"])
        p = p if p.is_absolute() else base / p
        if not p.is_dir():
            raise ConfigError(f"{where('atf.fr_dir')}: directory not found: {p}")
        cfg.fr_dir = p
    for key in ("synthetic_fr", "directivity", "hrtf"):
        if key in a:
            if not isinstance(a[key], bool):
                raise ConfigError(f"{where('atf.' + key)}: expected true/false")
            setattr(cfg, key, a[key])

    if "lambda" in f:
        cfg.lam = field_("filters.lambda", lambda: float(f["lambda"]))
    for key in ("filter_length", "modeling_delay", "crossover_bins", "taper"):
        if key in f:
            setattr(cfg, key, f[key])
    if "band_masks" in f:
        cfg.band_masks = bool(f["band_masks"])
    if m.get("epsilon") is not None:
        cfg.epsilon = field_("metrics.epsilon", lambda: float(m["epsilon"]))

    if "plan_id" in ab:
        cfg.plan_id = str(ab["plan_id"])
    if "stages" in ab:
        cfg.stages = field_("ablation.stages", lambda: parse_stages(ab["stages"]))
    if "eval_stage" in ab:
        cfg.eval_stage = field_("ablation.eval_stage", lambda: check_stage(ab["eval_stage"]))

    if "dir" in o:
        p = Path(o["dir"])
        cfg.out_dir = p if p.is_absolute() else base / p
    if "formats" in o:
        fm = tuple(o["formats"])
        if not fm or any(x not in ("csv", "json") for x in fm):
            raise ConfigError(f"{where('output.formats')}: formats must be a subset of [csv, json]")
        cfg.formats = fm
    return cfg


def with_sample_rate(cfg: RunConfig, fs: float) -> RunConfig:
    return replace(cfg, scene=replace(cfg.scene, sample_rate=float(fs)))
