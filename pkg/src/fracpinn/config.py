"""Run configuration: one JSON document, every field defaulted, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fracpinn.data import NoiseSpec
from fracpinn.fracsolver import SolverConfig
from fracpinn.loss import LossWeights
from fracpinn.model import EpidemicParams, SimplexState
from fracpinn.optim import AdamConfig, EarlyStopConfig, LbfgsConfig, LineSearchConfig
from fracpinn.trainer import TrainConfig


MPOX_RATE_BOUNDS = {"beta": [0.1, 0.3], "sigma": [0.077, 0.2], "gamma": [0.036, 0.071], "mu": [0.001, 0.03]}


class ConfigError(Exception):
    """Invalid, unreadable or inconsistent configuration."""


@dataclass(frozen=True)
class ModelSection:
    alpha_min: float = 0.5
    beta_max: float = 1.0
    # admissible box per rate; defaults to the Mpox literature ranges, null for plain softplus
    rate_bounds: dict | None = field(default_factory=lambda: dict(MPOX_RATE_BOUNDS))


@dataclass(frozen=True)
class GridSection:
    dt: float = 0.5
    T: float = 300.0

    @property
    def n_steps(self) -> int:
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError(f"T={self.T} is not a whole number of dt={self.dt} steps")
        return n


@dataclass(frozen=True)
class TruthSection:
    beta: float = 0.25
    sigma: float = 0.13
    gamma: float = 0.052
    mu: float = 0.005
    alpha: float = 1.0


@dataclass(frozen=True)
class IcSection:
    s: float = 0.98
    e: float = 0.01
    i: float = 0.01
    r: float = 0.0
    d: float = 0.0


@dataclass(frozen=True)
class NetworkSection:
    hidden: tuple[int, ...] = (64, 64, 64)
    head: str = "softmax"


@dataclass(frozen=True)
class LineSearchSection:
    c1: float = 1e-4
    c2: float = 0.9
    max_evals: int = 25


@dataclass(frozen=True)
class LbfgsSection:
    memory: int = 10
    max_iters: int = 500
    gtol: float = 1e-12
    ftol: float = 1e-15
    line_search: LineSearchSection = field(default_factory=LineSearchSection)


@dataclass(frozen=True)
class AdamSection:
    lr0: float = 1e-3
    decay_rate: float = 0.5
    decay_every: int = 3000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 8000


@dataclass(frozen=True)
class EarlyStopSection:
    tol: float = 1e-8
    patience: int = 500


@dataclass(frozen=True)
class LambdaSection:
    data: float = 1.0
    phys: float = 1.0
    ic: float = 10.0
    # only used with the softplus head; null picks 1 for softplus, 0 for softmax
    cons: float | None = None
    reg_theta: float = 1e-6
    reg_params: float = 0.0


@dataclass(frozen=True)
class TrainSection:
    pretrain_iters: int = 2000
    pretrain_lr: float = 1e-3
    adam: AdamSection = field(default_factory=AdamSection)
    lbfgs: LbfgsSection = field(default_factory=LbfgsSection)
    early_stop: EarlyStopSection = field(default_factory=EarlyStopSection)
    lambdas: LambdaSection = field(default_factory=LambdaSection)
    alpha_init: float = 0.99
    init_rates: dict | None = None
    colloc_n: int | None = None


@dataclass(frozen=True)
class NoiseSection:
    sigma_noise: float = 0.0
    seed: int = 0
    clip_to_simplex: bool = False
    per_compartment: tuple[float, ...] | None = None
    every: int = 1


@dataclass(frozen=True)
class DataSection:
    population: int | None = None
    exposed_multiplier: float = 2.0
    dt: float = 1.0


@dataclass(frozen=True)
class AnalysisSection:
    alpha_grid: tuple[float, ...] = (0.8, 0.85, 0.9, 0.95, 1.0)
    n_replicates: int = 50
    bootstrap_seed: int = 0
    disable: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverConfig = field(default_factory=SolverConfig)
    truth: TruthSection = field(default_factory=TruthSection)
    ic: IcSection = field(default_factory=IcSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainSection = field(default_factory=TrainSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    data: DataSection = field(default_factory=DataSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    out_dir: str = "out"

    # -- conversions to library objects

    def truth_params(self) -> EpidemicParams:
        t = self.truth
        return EpidemicParams(t.beta, t.sigma, t.gamma, t.mu, t.alpha)

    def initial_state(self) -> SimplexState:
        return SimplexState(self.ic.s, self.ic.e, self.ic.i, self.ic.r, self.ic.d)

    def noise_spec(self) -> NoiseSpec:
        n = self.noise
        return NoiseSpec(n.sigma_noise, n.seed, n.clip_to_simplex, n.per_compartment)

    def rate_bounds(self) -> dict | None:
        if self.model.rate_bounds is None:
            return None
        rename = {"gamma": "gamma_r"}
        return {rename.get(k, k): tuple(v) for k, v in self.model.rate_bounds.items()}

    def train_config(self) -> TrainConfig:
        t = self.train
        lam = t.lambdas
        cons = lam.cons if lam.cons is not None else (1.0 if self.network.head == "softplus" else 0.0)
        init = None
        if t.init_rates is not None:
            init = {("gamma_r" if k == "gamma" else k): v for k, v in t.init_rates.items()}
        return TrainConfig(
            seed=self.seed,
            adam=AdamConfig(**dataclasses.asdict(t.adam)),
            lbfgs=LbfgsConfig(
                memory=t.lbfgs.memory,
                max_iters=t.lbfgs.max_iters,
                gtol=t.lbfgs.gtol,
                ftol=t.lbfgs.ftol,
                line_search=LineSearchConfig(**dataclasses.asdict(t.lbfgs.line_search)),
            ),
            pretrain_iters=t.pretrain_iters,
            pretrain_lr=t.pretrain_lr,
            early_stop=EarlyStopConfig(**dataclasses.asdict(t.early_stop)),
            lambdas=LossWeights(lam.data, lam.phys, lam.ic, cons, lam.reg_theta, lam.reg_params),
            alpha_min=self.model.alpha_min,
            beta_max=self.model.beta_max,
            rate_bounds=self.rate_bounds(),
            init_rates=init,
            alpha_init=t.alpha_init,
            hidden=tuple(self.network.hidden),
            head=self.network.head,
            colloc_n=t.colloc_n,
        )

    # -- serialization

    def to_dict(self) -> dict:
        return _to_jsonable(dataclasses.asdict(self))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _unwrap_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(tp, value, where: str):
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where}: null is not allowed")
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return _build(tp, value, where)
    origin = typing.get_origin(tp)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        inner = typing.get_args(tp)[0]
        return tuple(_coerce(inner, v, f"{where}[{k}]") for k, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return value
    # Literal and other annotations: accept as-is and let the target validate
    return value


def _build(cls, data: dict, where: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}" if where else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return _build(RunConfig, data, "")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` overrides; keys must already exist in the schema."""
    schema = RunConfig().to_dict()
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node, ref = data, schema
        for part in parts[:-1]:
            if not isinstance(ref, dict) or part not in ref:
                raise ConfigError(f"override {key!r}: no such key in the config schema")
            ref = ref[part]
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {part} is not an object")
        if not isinstance(ref, dict) or parts[-1] not in ref:
            raise ConfigError(f"override {key!r}: no such key in the config schema")
        node[parts[-1]] = _parse_value(text)
    return data


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {p}: {exc.strerror or exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)
