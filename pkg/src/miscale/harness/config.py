"""Experiment configuration: JSON schema, defaults and override resolution."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..estimator import TrainConfig
from ..exceptions import ConfigError
from ..gmrf import FAMILIES
from ..grid import GridShape

KINDS = ("gmrf_analytic", "gmrf_estimate", "data_estimate", "gaussian_fit", "entanglement")
DATA_FORMATS = ("idx", "matrix")
ESTIMATE_READOUTS = ("direct", "dv")


def parse_ls(value):
    """Parse ``"1-26"``, ``"2,4,6"``, ``"1-5,8"`` or a list into sorted unique ints."""
    if isinstance(value, (list, tuple)):
        out = [int(v) for v in value]
    else:
        out = []
        for part in str(value).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    return sorted(set(out))


@dataclass
class ExperimentConfig:
    """Everything a :func:`~miscale.harness.run.run` invocation depends on.

    ``data`` names an IDX image file (or comma-separated list of them) or a
    MISM/CSV sample matrix. ``source_shape`` and ``channels`` describe matrix
    rows of raw pixels; ``crop`` centre-crops prepared images. Kinds that
    accept data fall back to sampling the configured GMRF when ``data`` is
    empty. ``Ls`` defaults to every side length leaving a border of
    outer cells on all four sides.
    """

    kind: str = "gmrf_analytic"
    family: str = "nearest_neighbor"
    q: float = -0.227
    shape: str = "28x28"
    # None resolves to 1..min(h, w) - 2
    Ls: list = None
    n_samples: int = 10_000
    trials: int = 1
    readout: str = "direct"
    seed: int = 0
    family_seed: int = 0
    out: str = "out"
    threads: int = 1
    data: str = ""
    data_format: str = "idx"
    source_shape: str = ""
    channels: int = 1
    crop: str = ""
    max_rows: int = 0
    ridge: float = 1e-4
    n_bins: int = 2
    plot: bool = True
    train: dict = field(default_factory=lambda: TrainConfig().to_dict())

    def __post_init__(self):
        self.validate()

    @property
    def grid(self):
        return GridShape.parse(self.shape)

    def train_config(self):
        cfg = dict(self.train)
        cfg["seed"] = int(self.seed)
        return TrainConfig(**cfg)

    def validate(self):
        try:
            for name in ("q", "ridge"):
                setattr(self, name, float(getattr(self, name)))
            for name in ("n_samples", "trials", "seed", "family_seed", "threads", "channels", "max_rows", "n_bins"):
                value = getattr(self, name)
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(f"{name} must be an integer")
                setattr(self, name, int(value))
            self.plot = bool(self.plot)
            self.data = str(self.data or "")
            self.out = str(self.out)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        try:
            grid = self.grid
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape {self.shape!r}: {exc}") from None
        self.shape = str(grid)
        if self.Ls is None:
            # inner square bordered on every side: 1..26 on 28x28
            self.Ls = list(range(1, max(1, min(grid.height, grid.width) - 2) + 1))
        try:
            self.Ls = parse_ls(self.Ls)
        except ValueError as exc:
            raise ConfigError(f"bad L list: {exc}") from None
        if not self.Ls:
            raise ConfigError("L list is empty")
        bad = [L for L in self.Ls if not 1 <= L <= grid.max_inner_length]
        if bad:
            raise ConfigError(f"L values {bad} invalid for a {grid} grid (need 1..{grid.max_inner_length})")
        for name in ("n_samples", "trials", "threads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.max_rows < 0:
            raise ConfigError("max_rows must be nonnegative (0 keeps every row)")
        if self.seed < 0 or self.seed >= 2**64 or self.family_seed < 0:
            raise ConfigError("seeds must be unsigned 64-bit integers")
        if self.kind in ("gmrf_estimate", "data_estimate") and self.readout not in ESTIMATE_READOUTS:
            raise ConfigError(f"readout for {self.kind} must be one of {ESTIMATE_READOUTS}")
        if self.kind == "data_estimate" and not self.data:
            raise ConfigError("data_estimate needs a data path")
        if self.data_format not in DATA_FORMATS:
            raise ConfigError(f"data_format must be one of {DATA_FORMATS}")
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")
        if self.n_bins < 2:
            raise ConfigError("n_bins must be at least 2")
        for name in ("source_shape", "crop"):
            value = getattr(self, name)
            if value:
                try:
                    setattr(self, name, str(GridShape.parse(value)))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad {name} {value!r}: {exc}") from None
        if not isinstance(self.train, dict):
            raise ConfigError("train must be an object")
        unknown = set(self.train) - {f.name for f in fields(TrainConfig)}
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        try:
            self.train = {**TrainConfig().to_dict(), **self.train}
            self.train = self.train_config().to_dict()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train block: {exc}") from None
        self.train["seed"] = int(self.seed)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def _merge(base, updates, where):
    unknown = set(updates) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    out = dict(base)
    for k, v in updates.items():
        if k == "train":
            if not isinstance(v, dict):
                raise ConfigError(f"{where}: train must be an object")
            out["train"] = {**out.get("train", {}), **v}
        else:
            out[k] = v
    return out


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def resolve_config(path=None, overrides=None, base=None):
    """Defaults, then the JSON file at ``path``, then ``overrides`` (flags).

    ``base`` supplies per-subcommand defaults layered under the file.
    """
    merged = {**ExperimentConfig().to_dict(), "Ls": None}
    if base:
        merged = _merge(merged, base, "defaults")
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        merged = _merge(merged, load_config_file(path), str(path))
    if overrides:
        merged = _merge(merged, {k: v for k, v in overrides.items() if v is not None}, "flags")
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
