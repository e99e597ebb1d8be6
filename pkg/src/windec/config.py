"""Experiment configuration: JSON in, validated dataclasses out.

A config file mirrors :class:`ExperimentConfig`; CLI flags override file
values.  Parsing reports the offending dotted field path on every error.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .generators import BOUNDARIES, GridPde, InitialCondition
from .tensor import Shape

_DATASET_KINDS = ("advection", "burgers", "heat")
_PREDICTOR_KINDS = ("identity", "upwind", "diffusion", "stencil", "global")


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}.{key}: missing required field")
    return mapping[key]


def _number(value, where: str, positive: bool = False) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    v = float(value)
    if positive and v <= 0:
        raise ConfigError(f"{where}: must be positive, got {v}")
    return v


def _integer(value, where: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _check_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")


@dataclass(frozen=True)
class IcConfig:
    kind: str = "sine"
    freq: float | None = None
    n_bumps: int | None = None
    bandwidth: float | None = None
    base_freq: float = 0.5
    envelope_sigma: float | None = None
    width_fraction_range: tuple[float, float] = (0.05, 0.15)
    center_margin: float = 0.15

    @classmethod
    def parse(cls, raw: dict, where: str) -> "IcConfig":
        _check_keys(
            raw,
            {"kind", "freq", "n_bumps", "bandwidth", "base_freq", "envelope_sigma",
             "width_fraction_range", "center_margin"},
            where,
        )
        kind = raw.get("kind", "sine")
        if kind not in ("sine", "bumps", "harmonics"):
            raise ConfigError(f"{where}.kind: unknown initial condition {kind!r}")
        widths = raw.get("width_fraction_range", [0.05, 0.15])
        if not isinstance(widths, (list, tuple)) or len(widths) != 2:
            raise ConfigError(f"{where}.width_fraction_range: expected [low, high]")
        widths = tuple(
            _number(v, f"{where}.width_fraction_range[{i}]", True)
            for i, v in enumerate(widths)
        )
        margin = _number(raw.get("center_margin", 0.15), f"{where}.center_margin", True)
        if margin >= 0.5:
            raise ConfigError(f"{where}.center_margin: must be < 0.5, got {margin}")
        return cls(
            kind=kind,
            freq=None if "freq" not in raw else _number(raw["freq"], f"{where}.freq", True),
            n_bumps=None if "n_bumps" not in raw else _integer(raw["n_bumps"], f"{where}.n_bumps", 1),
            bandwidth=None
            if "bandwidth" not in raw
            else _number(raw["bandwidth"], f"{where}.bandwidth", True),
            base_freq=_number(raw.get("base_freq", 0.5), f"{where}.base_freq", True),
            envelope_sigma=None
            if raw.get("envelope_sigma") is None
            else _number(raw["envelope_sigma"], f"{where}.envelope_sigma", True),
            width_fraction_range=widths,
            center_margin=margin,
        )

    def build(self) -> InitialCondition:
        return InitialCondition(
            kind=self.kind,
            freq=self.freq,
            n_bumps=self.n_bumps,
            bandwidth=self.bandwidth,
            base_freq=self.base_freq,
            envelope_sigma=self.envelope_sigma,
            width_fraction_range=self.width_fraction_range,
            center_margin=self.center_margin,
        )


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    batch: int
    extents: tuple[int, ...]
    channels: int
    dx: float
    dt: float
    c: tuple[float, ...] | None = None
    nu: float = 0.0
    alpha: float = 0.0
    boundary: str = "periodic"
    ic: IcConfig = field(default_factory=IcConfig)
    n_steps: int = 10
    seed: int = 0

    @classmethod
    def parse(cls, raw: dict, where: str = "dataset") -> "DatasetConfig":
        _check_keys(
            raw,
            {"kind", "batch", "extents", "channels", "dx", "dt", "c", "nu",
             "alpha", "boundary", "ic", "n_steps", "seed"},
            where,
        )
        kind = _require(raw, "kind", where)
        if kind not in _DATASET_KINDS:
            raise ConfigError(f"{where}.kind: unknown dataset kind {kind!r}")
        extents = _require(raw, "extents", where)
        if not isinstance(extents, list) or not extents:
            raise ConfigError(f"{where}.extents: expected a non-empty list")
        extents = tuple(_integer(n, f"{where}.extents[{i}]", 1) for i, n in enumerate(extents))
        c = raw.get("c")
        if c is not None:
            if not isinstance(c, list) or len(c) != len(extents):
                raise ConfigError(f"{where}.c: expected {len(extents)} speeds")
            c = tuple(_number(v, f"{where}.c[{i}]") for i, v in enumerate(c))
        boundary = raw.get("boundary", "periodic")
        if boundary not in BOUNDARIES:
            raise ConfigError(f"{where}.boundary: unknown boundary {boundary!r}")
        return cls(
            kind=kind,
            batch=_integer(raw.get("batch", 1), f"{where}.batch", 1),
            extents=extents,
            channels=_integer(raw.get("channels", 1), f"{where}.channels", 1),
            dx=_number(_require(raw, "dx", where), f"{where}.dx", True),
            dt=_number(_require(raw, "dt", where), f"{where}.dt", True),
            c=c,
            nu=_number(raw.get("nu", 0.0), f"{where}.nu"),
            alpha=_number(raw.get("alpha", 0.0), f"{where}.alpha"),
            boundary=boundary,
            ic=IcConfig.parse(raw.get("ic", {}), f"{where}.ic"),
            n_steps=_integer(raw.get("n_steps", 10), f"{where}.n_steps", 0),
            seed=_integer(raw.get("seed", 0), f"{where}.seed", 0),
        )

    def grid(self) -> Shape:
        return Shape(self.batch, self.extents, self.channels)

    def pde(self) -> GridPde:
        return GridPde(
            dx=self.dx, dt=self.dt, c=self.c, nu=self.nu, alpha=self.alpha,
            boundary=self.boundary,
        )


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "stencil"
    ridge_lambda: float = 1e-8
    sample_budget: int = 4096

    @classmethod
    def parse(cls, raw: dict, where: str = "predictor") -> "PredictorConfig":
        _check_keys(raw, {"kind", "ridge_lambda", "sample_budget"}, where)
        kind = raw.get("kind", "stencil")
        if kind not in _PREDICTOR_KINDS:
            raise ConfigError(f"{where}.kind: unknown predictor kind {kind!r}")
        lam = _number(raw.get("ridge_lambda", 1e-8), f"{where}.ridge_lambda")
        if lam < 0:
            raise ConfigError(f"{where}.ridge_lambda: must be >= 0, got {lam}")
        return cls(
            kind=kind,
            ridge_lambda=lam,
            sample_budget=_integer(raw.get("sample_budget", 4096), f"{where}.sample_budget", 1),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    window: tuple[int, ...] | str = "auto"
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    split_fraction: float = 0.5
    seed: int = 0
    out_dir: str = "results"

    @classmethod
    def parse(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("top level: expected a JSON object")
        _check_keys(
            raw,
            {"dataset", "window", "predictor", "split_fraction", "seed", "out_dir"},
            "top level",
        )
        dataset_raw = _require(raw, "dataset", "top level")
        if not isinstance(dataset_raw, dict):
            raise ConfigError("dataset: expected an object")
        window = raw.get("window", "auto")
        if window != "auto":
            if not isinstance(window, list) or not window:
                raise ConfigError('window: expected "auto" or a list of odd sizes')
            window = tuple(_integer(w, f"window[{i}]", 3) for i, w in enumerate(window))
            for i, w in enumerate(window):
                if w % 2 == 0:
                    raise ConfigError(f"window[{i}]: sizes must be odd, got {w}")
        split = _number(raw.get("split_fraction", 0.5), "split_fraction")
        if not 0 < split < 1:
            raise ConfigError(f"split_fraction: must be in (0, 1), got {split}")
        return cls(
            dataset=DatasetConfig.parse(dataset_raw),
            window=window,
            predictor=PredictorConfig.parse(raw.get("predictor", {})),
            split_fraction=split,
            seed=_integer(raw.get("seed", 0), "seed", 0),
            out_dir=str(raw.get("out_dir", "results")),
        )

    def snapshot(self) -> dict:
        """JSON-serializable copy of the effective configuration."""
        d = asdict(self)
        if isinstance(self.window, tuple):
            d["window"] = list(self.window)
        return d


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return ExperimentConfig.parse(raw)
