"""Run configuration: JSON file <-> validated dataclass, strict about keys."""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .data import SplitSpec
from .errors import ContractViolation
from .model import ModelConfig
from .ode import SolverConfig

# paper-protocol defaults, keyed by graph flavor
LR_CONTACT = 0.0001
LR_EVENT = 0.00009
ALPHA_CONTACT = 0.002
ALPHA_EVENT = 0.7


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Everything a run needs; every field has a documented default.

    lr and alpha default to the protocol values for the dataset's graph
    flavor (duration-bearing vs contact-sequence) when left null.
    """

    # data
    dataset: str = ""
    has_duration: Optional[bool] = None
    out_dir: str = "runs/default"
    # task
    task: str = "link_prediction"
    co_train_classifier: bool = False
    # splits
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    unseen_frac: float = 0.10
    # model
    dim: int = 172
    time_dim: int = 172
    heads: int = 2
    layers: int = 1
    n_neighbors: int = 10
    ode_hidden: int = 172
    clf_hidden: int = 80
    clf_dropout: float = 0.1
    # solver
    solver_method: str = "rk4"
    solver_steps: int = 8
    rtol: float = 1e-5
    atol: float = 1e-7
    t_max: float = 2.0
    # training
    batch_size: int = 200
    lr: Optional[float] = None
    alpha: Optional[float] = None
    patience: int = 5
    max_epochs: int = 50
    seed: int = 0
    # ablations
    duration_blind: bool = False

    def __post_init__(self):
        if self.task not in ("link_prediction", "node_classification"):
            raise ConfigError(f"task: unknown value {self.task!r}")
        for key in ("batch_size", "dim", "time_dim", "heads", "layers",
                    "n_neighbors", "ode_hidden", "clf_hidden", "patience",
                    "max_epochs", "solver_steps"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError("lr: must be positive")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("alpha: must be non-negative")
        if not (0.0 <= self.clf_dropout < 1.0):
            raise ConfigError("clf_dropout: must be in [0,1)")

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_frac, self.val_frac, self.test_frac,
                         self.unseen_frac)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.solver_method, self.solver_steps,
                            self.rtol, self.atol)

    def model_config(self, edge_dim: int, has_duration: bool) -> ModelConfig:
        return ModelConfig(dim=self.dim, time_dim=self.time_dim,
                           edge_dim=edge_dim, heads=self.heads,
                           layers=self.layers, n_neighbors=self.n_neighbors,
                           ode_hidden=self.ode_hidden,
                           solver=self.solver_config(), t_max=self.t_max,
                           clf_hidden=self.clf_hidden,
                           clf_dropout=self.clf_dropout,
                           duration_blind=self.duration_blind,
                           has_duration=has_duration)

    def resolved(self, has_duration: bool) -> "TrainConfig":
        """Fill lr/alpha from the dataset flavor when unset."""
        out = TrainConfig(**asdict(self))
        if out.lr is None:
            out.lr = LR_EVENT if has_duration else LR_CONTACT
        if out.alpha is None:
            out.alpha = ALPHA_EVENT if has_duration else ALPHA_CONTACT
        out.has_duration = has_duration
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


_FIELD_NAMES = {f.name for f in fields(TrainConfig)}


def load_config(path) -> TrainConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(raw) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    try:
        return TrainConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
