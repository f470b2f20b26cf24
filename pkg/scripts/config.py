"""Run configuration: defaults <- preset <- scenario <- JSON file <- CLI flags.

Every key is validated; an unknown or invalid key raises ConfigError naming the
dotted key so the CLI can fail fast with exit code 1.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from scripts.learner import Hyperparams, LearnerKind
from scripts.pose_geometry import LossWeights


PROCESSED_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "processed")
OUT_ENV_VAR = "GRASP_SSL_OUT"

SCENARIOS = ["static", "dynamic_linear", "dynamic_sliding", "dynamic_rotating"]
SHAPES = ["sphere", "box"]
PRESETS = ["desk", "natural"]

LEARNER_FLAGS = {
    "ssl": LearnerKind.SSL_ONLINE,
    "supervised": LearnerKind.SUPERVISED_FROZEN,
    "reward": LearnerKind.REWARD_BASELINE,
}

SCENARIO_PATTERN = {
    "static": "static",
    "dynamic_linear": "linear",
    "dynamic_sliding": "sliding",
    "dynamic_rotating": "rotating",
}

SCENARIO_WORLD = {
    "static": {"speed": 0.0, "speed_jitter": 0.0, "angular_speed": 0.0},
    "dynamic_linear": {"speed": 0.15, "speed_jitter": 0.5, "angular_speed": 0.0},
    "dynamic_sliding": {"speed": 0.15, "speed_jitter": 0.5, "angular_speed": 0.0, "change_interval": 1.0},
    "dynamic_rotating": {"speed": 0.0, "speed_jitter": 0.0, "angular_speed": 1.5},
}

PRESET_WORLD = {
    "desk": {},
    "natural": {"depth_sigma": 0.01, "wrench_sigma": 0.3, "force_sigma": 0.3},
}


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class WorldConfig:
    shapes: tuple = ("sphere", "box")
    size_range: tuple = (0.03, 0.05)
    workspace: float = 0.15
    speed: float = 0.0
    speed_jitter: float = 0.0
    angular_speed: float = 0.0
    change_interval: float = 1.0
    dt: float = 0.05
    latency: float = 0.15
    attempt_time: float = 0.5
    approach_offset: float = 0.05
    r_pos: float = 0.03
    r_ang: float = 0.35
    tau_threshold: float = None
    depth_sigma: float = 0.002
    wrench_sigma: float = 0.05
    force_sigma: float = 0.05
    contact_points: int = 8
    base_grip_force: float = 2.5
    patch_half_size: float = 0.01
    pressure_falloff: float = 0.0
    resolution: int = 32
    camera_height: float = 1.0
    fov: float = 0.7
    far_value: float = 1.5


@dataclass(frozen=True)
class PredictorConfig:
    hidden: tuple = (64, 32)


@dataclass(frozen=True)
class MetricsConfig:
    target_rate: float = 0.7
    window: int = 50
    final_window: int = 100


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "static"
    learner: LearnerKind = LearnerKind.SSL_ONLINE
    episodes: int = 500
    seed: int = 0
    preset: str = "desk"
    log_observations: bool = False
    learners: tuple = ("ssl", "supervised", "reward")
    seeds: tuple = tuple(range(10))
    speeds: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    world: WorldConfig = field(default_factory=WorldConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    @property
    def pattern(self):
        return SCENARIO_PATTERN[self.scenario]

    @property
    def learner_flag(self):
        return learner_flag(self.learner)


def learner_flag(kind):
    for flag, k in LEARNER_FLAGS.items():
        if k == kind:
            return flag
    raise ConfigError("learner", f"unknown learner kind {kind!r}")


def _number(key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _merge(base, update, prefix=""):
    merged = dict(base)
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(dotted, "unknown configuration key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(dotted, "expected an object")
            merged[key] = _merge(base[key], value, prefix=f"{dotted}.")
        else:
            merged[key] = value
    return merged


def _build_world(raw):
    values = {}
    for f in fields(WorldConfig):
        key = f"world.{f.name}"
        value = raw[f.name]
        if f.name == "shapes":
            if not isinstance(value, (list, tuple)) or not value or any(s not in SHAPES for s in value):
                raise ConfigError(key, f"expected a non-empty list drawn from {SHAPES}")
            value = tuple(value)
        elif f.name == "size_range":
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(key, "expected [min, max]")
            lo, hi = _number(key, value[0]), _number(key, value[1])
            if not 0 < lo <= hi:
                raise ConfigError(key, "sizes must satisfy 0 < min <= max")
            value = (lo, hi)
        elif f.name == "tau_threshold":
            if value is not None:
                value = _number(key, value)
                if value <= 0:
                    raise ConfigError(key, "must be positive or null")
        elif f.name in ("contact_points", "resolution"):
            value = _number(key, value, int)
            if value < 1 or (f.name == "contact_points" and value % 2):
                raise ConfigError(key, "must be a positive (even, for contact_points) integer")
        else:
            value = _number(key, value)
            if value < 0:
                raise ConfigError(key, "must be nonnegative")
        values[f.name] = value
    for name in ("dt", "latency", "r_pos", "r_ang", "far_value", "fov", "patch_half_size", "camera_height"):
        if values[name] <= 0:
            raise ConfigError(f"world.{name}", "must be positive")
    if values["speed_jitter"] > 1:
        raise ConfigError("world.speed_jitter", "must lie in [0, 1]")
    return WorldConfig(**values)


def _build_hyperparams(raw):
    eta = _number("hyperparams.eta", raw["eta"])
    if eta <= 0:
        raise ConfigError("hyperparams.eta", "must be positive")
    pose_eta = _number("hyperparams.pose_eta", raw["pose_eta"])
    if pose_eta <= 0:
        raise ConfigError("hyperparams.pose_eta", "must be positive")
    lam = _number("hyperparams.lambda", raw["lambda"])
    if lam < 0:
        raise ConfigError("hyperparams.lambda", "must be nonnegative")
    eps = _number("hyperparams.epsilon_explore", raw["epsilon_explore"])
    if not 0 <= eps <= 1:
        raise ConfigError("hyperparams.epsilon_explore", "must lie in [0, 1]")
    epochs = _number("hyperparams.pretrain_epochs", raw["pretrain_epochs"], int)
    samples = _number("hyperparams.pretrain_samples", raw["pretrain_samples"], int)
    if epochs < 0 or samples < 1:
        raise ConfigError("hyperparams.pretrain_epochs", "epochs must be >= 0 and samples >= 1")
    return Hyperparams(
        eta=eta,
        pose_eta=pose_eta,
        weights=LossWeights(lam),
        epsilon_explore=eps,
        pretrain_epochs=epochs,
        pretrain_samples=samples,
        explore_position_sigma=_number("hyperparams.explore_position_sigma", raw["explore_position_sigma"]),
        explore_angle_sigma=_number("hyperparams.explore_angle_sigma", raw["explore_angle_sigma"]),
    )


def default_dict():
    hp = Hyperparams()
    return {
        "scenario": "static",
        "learner": "ssl",
        "episodes": 500,
        "seed": 0,
        "preset": "desk",
        "log_observations": False,
        "learners": ["ssl", "supervised", "reward"],
        "seeds": list(range(10)),
        "speeds": [0.0, 0.05, 0.1, 0.15, 0.2],
        "world": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(WorldConfig()).items()},
        "predictor": {"hidden": list(PredictorConfig().hidden)},
        "hyperparams": {
            "eta": hp.eta,
            "pose_eta": hp.pose_eta,
            "lambda": hp.weights.lam,
            "epsilon_explore": hp.epsilon_explore,
            "pretrain_epochs": hp.pretrain_epochs,
            "pretrain_samples": hp.pretrain_samples,
            "explore_position_sigma": hp.explore_position_sigma,
            "explore_angle_sigma": hp.explore_angle_sigma,
        },
        "metrics": asdict(MetricsConfig()),
    }


def build_config(raw):
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {SCENARIOS}, got {scenario!r}")
    if raw["learner"] not in LEARNER_FLAGS:
        raise ConfigError("learner", f"expected one of {sorted(LEARNER_FLAGS)}, got {raw['learner']!r}")
    if raw["preset"] not in PRESETS:
        raise ConfigError("preset", f"expected one of {PRESETS}, got {raw['preset']!r}")
    episodes = _number("episodes", raw["episodes"], int)
    if episodes < 1:
        raise ConfigError("episodes", "must be >= 1")
    seed = _number("seed", raw["seed"], int)
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    if not isinstance(raw["log_observations"], bool):
        raise ConfigError("log_observations", "expected true or false")
    learners = tuple(raw["learners"])
    if not learners or any(name not in LEARNER_FLAGS for name in learners):
        raise ConfigError("learners", f"expected a non-empty list drawn from {sorted(LEARNER_FLAGS)}")
    seeds = tuple(_number("seeds", s, int) for s in raw["seeds"])
    if not seeds or min(seeds) < 0:
        raise ConfigError("seeds", "expected a non-empty list of nonnegative integers")
    speeds = tuple(_number("speeds", s) for s in raw["speeds"])
    if not speeds or min(speeds) < 0:
        raise ConfigError("speeds", "expected a non-empty list of nonnegative speeds")

    hidden = raw["predictor"]["hidden"]
    if not isinstance(hidden, (list, tuple)) or not hidden:
        raise ConfigError("predictor.hidden", "expected a non-empty list of layer widths")
    hidden = tuple(_number("predictor.hidden", h, int) for h in hidden)
    if min(hidden) < 1:
        raise ConfigError("predictor.hidden", "layer widths must be >= 1")

    metrics = raw["metrics"]
    target = _number("metrics.target_rate", metrics["target_rate"])
    if not 0 < target <= 1:
        raise ConfigError("metrics.target_rate", "must lie in (0, 1]")
    window = _number("metrics.window", metrics["window"], int)
    final_window = _number("metrics.final_window", metrics["final_window"], int)
    if window < 1 or final_window < 1:
        raise ConfigError("metrics.window", "windows must be >= 1")

    return ScenarioConfig(
        scenario=scenario,
        learner=LEARNER_FLAGS[raw["learner"]],
        episodes=episodes,
        seed=seed,
        preset=raw["preset"],
        log_observations=raw["log_observations"],
        learners=learners,
        seeds=seeds,
        speeds=speeds,
        world=_build_world(raw["world"]),
        predictor=PredictorConfig(hidden),
        hyperparams=_build_hyperparams(raw["hyperparams"]),
        metrics=MetricsConfig(target, window, final_window),
    )


def load_config(path=None, overrides=None):
    """Resolve a ScenarioConfig from an optional JSON file and CLI overrides (nested dicts)."""
    user = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = json.load(f)
        except OSError as e:
            raise ConfigError("config", f"cannot read {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON in {path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError("config", "top level must be a JSON object")

    raw = _merge(default_dict(), user)
    raw = _merge(raw, overrides or {})
    preset = raw["preset"]
    scenario = raw["scenario"]
    if preset not in PRESETS:
        raise ConfigError("preset", f"expected one of {PRESETS}, got {preset!r}")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {SCENARIOS}, got {scenario!r}")

    # scenario and preset values sit under whatever the user wrote explicitly
    world = dict(default_dict()["world"])
    world.update(PRESET_WORLD[preset])
    world.update(SCENARIO_WORLD[scenario])
    world = _merge(world, user.get("world", {}), prefix="world.")
    world = _merge(world, (overrides or {}).get("world", {}), prefix="world.")
    raw["world"] = world
    return build_config(raw)


def scenario_world(scenario, base=None):
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {SCENARIOS}, got {scenario!r}")
    return replace(base or WorldConfig(), **SCENARIO_WORLD[scenario])


def with_scenario(config, scenario, **world_overrides):
    """Same run, another scenario: scenario world defaults applied over the current world."""
    world = scenario_world(scenario, config.world)
    if world_overrides:
        world = replace(world, **world_overrides)
    return replace(config, scenario=scenario, world=world)


def config_to_dict(config):
    hp = config.hyperparams
    return {
        "scenario": config.scenario,
        "learner": config.learner_flag,
        "episodes": config.episodes,
        "seed": config.seed,
        "preset": config.preset,
        "log_observations": config.log_observations,
        "world": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config.world).items()},
        "predictor": {"hidden": list(config.predictor.hidden)},
        "hyperparams": {
            "eta": hp.eta,
            "pose_eta": hp.pose_eta,
            "lambda": hp.weights.lam,
            "epsilon_explore": hp.epsilon_explore,
            "pretrain_epochs": hp.pretrain_epochs,
            "pretrain_samples": hp.pretrain_samples,
            "explore_position_sigma": hp.explore_position_sigma,
            "explore_angle_sigma": hp.explore_angle_sigma,
        },
        "metrics": asdict(config.metrics),
    }


def output_dir(cli_value=None):
    if cli_value:
        return cli_value
    return os.environ.get(OUT_ENV_VAR, PROCESSED_DIR)
