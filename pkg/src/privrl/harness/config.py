"""JSON experiment configuration and agent construction."""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..agent_linear import VARIANTS, LsviUcbBatch, lsvi_params
from ..agent_mixture import UcrlVtr, UcrlVtrPlus, calibrate_vtr, calibrate_vtrplus
from ..envs import FAMILIES, make_env
from ..errors import ConfigError

ALGORITHMS = ("ucrl_vtr", "ucrl_vtr_plus", "lsvi_ucb_batch")
EMIT_FORMATS = ("csv", "json")


@dataclass(frozen=True)
class EnvSpec:
    family: str
    S: int
    A: int
    H: int
    seed: int = 0

    def build(self):
        return make_env(self.family, self.S, self.A, self.H, self.seed)


@dataclass(frozen=True)
class AgentSpec:
    algorithm: str
    regime: str = "jdp"
    dist: str = "gaussian"
    epsilon: float = 1.0
    delta: float = 0.1
    p: float = 0.1
    scale_override: float = 1.0
    variant: str = "approx_jdp"


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    agent: AgentSpec
    K: int
    seeds: tuple
    output: str = "out"
    emit: tuple = EMIT_FORMATS
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        out["emit"] = list(self.emit)
        out.pop("extra")
        return out

    def with_changes(self, **changes):
        """Copy with top-level (K, seeds, output) or agent-level fields replaced."""
        top = {k: changes.pop(k) for k in ("K", "seeds", "output") if k in changes}
        raw = self.to_dict()
        raw.update(top)
        raw["agent"].update(changes)
        return config_from_dict(raw)


def _require(block, key, where):
    if key not in block:
        raise ConfigError(f"missing field {where}.{key}")
    return block[key]


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def config_from_dict(raw):
    """Validate a parsed JSON object and return an ExperimentConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    env_raw = _require(raw, "env", "config")
    agent_raw = _require(raw, "agent", "config")
    unknown = set(agent_raw) - set(AgentSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown agent fields: {sorted(unknown)}")
    env = EnvSpec(
        family=_require(env_raw, "family", "env"),
        S=_positive_int(_require(env_raw, "S", "env"), "env.S"),
        A=_positive_int(_require(env_raw, "A", "env"), "env.A"),
        H=_positive_int(_require(env_raw, "H", "env"), "env.H"),
        seed=int(env_raw.get("seed", 0)),
    )
    if env.family not in FAMILIES:
        raise ConfigError(f"env.family must be one of {FAMILIES}")
    agent = AgentSpec(**agent_raw)
    if agent.algorithm not in ALGORITHMS:
        raise ConfigError(f"agent.algorithm must be one of {ALGORITHMS}")
    if agent.regime not in ("none", "jdp", "ldp"):
        raise ConfigError("agent.regime must be none, jdp or ldp")
    if agent.dist not in ("gaussian", "laplace"):
        raise ConfigError("agent.dist must be gaussian or laplace")
    if agent.algorithm == "lsvi_ucb_batch":
        if agent.regime == "ldp":
            raise ConfigError("lsvi_ucb_batch has no LDP variant")
        if agent.variant not in VARIANTS:
            raise ConfigError(f"agent.variant must be one of {VARIANTS}")
    so = agent.scale_override
    if not isinstance(so, (int, float)) or not (so > 0) or not math.isfinite(so):
        raise ConfigError("agent.scale_override must be a positive number")
    K = _positive_int(_require(raw, "K", "config"), "K")
    seeds = _require(raw, "seeds", "config")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list")
    for s in seeds:
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError(f"seeds must be non-negative integers, got {s!r}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    emit = raw.get("emit", list(EMIT_FORMATS))
    if isinstance(emit, dict):
        emit = [k for k, v in emit.items() if v]
    if not emit or any(f not in EMIT_FORMATS for f in emit):
        raise ConfigError(f"emit must be a non-empty subset of {EMIT_FORMATS}")
    return ExperimentConfig(env=env, agent=agent, K=K, seeds=tuple(seeds),
                            output=str(raw.get("output", "out")), emit=tuple(emit))


def load_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def calibrate(agent, env_spec, K):
    """Calibration object for ``agent`` on an environment of shape ``env_spec``."""
    S, A, H = env_spec.S, env_spec.A, env_spec.H
    if agent.algorithm == "lsvi_ucb_batch":
        variant = agent.variant
        regime = agent.regime
        if agent.dist == "laplace" and variant == "approx_jdp":
            variant = "pure_jdp"
        base = lsvi_params(K, H, S * A, agent.epsilon, agent.delta, agent.p, variant, regime)
        return base.scaled(agent.scale_override) if agent.scale_override != 1 else base
    d = S * S * A
    c_w = S * math.sqrt(A)
    fn = calibrate_vtr if agent.algorithm == "ucrl_vtr" else calibrate_vtrplus
    return fn(regime=agent.regime, dist=agent.dist, epsilon=agent.epsilon, delta=agent.delta,
              d=d, H=H, K=K, p=agent.p, c_w=c_w, scale_override=agent.scale_override)


def derived_params(config):
    """Every derived parameter of the configured agent, JSON-ready."""
    cal = calibrate(config.agent, config.env, config.K)
    out = {"algorithm": config.agent.algorithm, "scale_override": config.agent.scale_override}
    out.update(cal.to_dict())
    if config.agent.algorithm == "lsvi_ucb_batch" and cal.scale_override != 1:
        out["unscaled"] = cal.scaled(1.0).to_dict()
    out["d"] = cal.d
    return out


def build_agent(mdp, agent, K, seed):
    env_spec = EnvSpec("random-dense", mdp.S, mdp.A, mdp.H)
    cal = calibrate(agent, env_spec, K)
    if agent.algorithm == "ucrl_vtr":
        return UcrlVtr(mdp, cal, seed)
    if agent.algorithm == "ucrl_vtr_plus":
        return UcrlVtrPlus(mdp, cal, seed)
    return LsviUcbBatch(mdp, cal, seed)
