"""Episode loop, experiments, metrics and result files.

Per run directory:
    episodes.jsonl     header line, then one line per episode (stable key order)
    success_curve.csv  per-episode success with rolling and cumulative rates
    summary.json       MetricsSummary, always derived from the episode lines
    timing.csv         wall time per decision (not part of the determinism contract)
    params.json        final predictor parameters
"""

import csv
import functools
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from scripts.config import LEARNER_FLAGS, MetricsConfig, config_to_dict, with_scenario
from scripts.learner import Learner, LearnerKind, supervised_pretrain
from scripts.predictor import Architecture, featurize, init_params, save_params
from scripts.pose_geometry import GraspPose
from scripts.seeding import rng_stream
from scripts.sensing import ZERO_WRENCH, needs_adjustment
from scripts.world import World, oracle_grasp_pose


FORMAT_VERSION = 1
MAX_RETRIES = 1
SEED_STRIDE = 1000
SPEED_BIN = 0.05
NOT_REACHED = "not reached"

EPISODE_LOG = "episodes.jsonl"
CURVE_FILE = "success_curve.csv"
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.csv"
PARAMS_FILE = "params.json"
COMPARISON_FILE = "comparison.csv"
SWEEP_FILE = "velocity_sweep.csv"

CURVE_FIELDS = ["episode", "success", "rolling_success", "cumulative_success"]
TIMING_FIELDS = ["episode", "attempts", "decision_seconds"]
COMPARISON_FIELDS = [
    "scenario", "learner", "seed", "episodes",
    "success_rate", "first_window_rate", "final_window_rate", "adaptation_time",
]
SWEEP_FIELDS = ["learner", "speed", "seeds", "final_window_rate", "success_rate"]

# published success rates, printed as context only
REFERENCE_RATES = [
    ("ssl_online", "static", 0.85),
    ("ssl_online", "dynamic", 0.78),
    ("reward_baseline", "dynamic", 0.65),
    ("supervised_frozen", "dynamic", 0.60),
]
REFERENCE_IMPROVEMENT = {"supervised_frozen": 18.0, "reward_baseline": 13.0}

logger = logging.getLogger(__name__)


@dataclass
class EpisodeRecord:
    episode: int
    observation: dict
    predicted_pose: GraspPose
    executed_pose: GraspPose
    outcome: object
    success_prob: float
    success_objective: float
    pose_loss: Optional[float]
    retries: int
    pseudo_label: bool
    fallback: bool
    object_state: object
    attempts: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def success(self):
        return self.outcome.success

    def to_dict(self):
        o = self.outcome
        return {
            "type": "episode",
            "episode": self.episode,
            "success": o.success,
            "geometric": o.geometric,
            "position_error": o.position_error,
            "orientation_error": o.orientation_error,
            "stability": o.stability,
            "quality": o.quality,
            "retries": self.retries,
            "pseudo_label": self.pseudo_label,
            "fallback": self.fallback,
            "success_prob": self.success_prob,
            "success_objective": self.success_objective,
            "pose_loss": self.pose_loss,
            "object_speed": self.object_state.linear_velocity.norm(),
            "predicted_pose": self.predicted_pose.to_dict(),
            "executed_pose": self.executed_pose.to_dict(),
            "wrench": o.wrench.as_list(),
            "contacts": len(o.contacts),
            "object": self.object_state.to_dict(),
            "attempts": self.attempts,
            "observation": self.observation,
        }


@dataclass(frozen=True)
class MetricsSummary:
    learner: str
    scenario: str
    seed: int
    episodes: int
    success_rate: float
    first_window_rate: float
    final_window_rate: float
    adaptation_time: Optional[int]
    target_rate: float
    window: int
    final_window: int
    mean_quality: float
    regrasps: int
    pseudo_labels: int
    fallbacks: int
    velocity_table: list
    tau_threshold: Optional[float] = None
    curve: list = field(default_factory=list, compare=False, repr=False)

    def to_dict(self):
        return {
            "learner": self.learner,
            "scenario": self.scenario,
            "seed": self.seed,
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "first_window_rate": self.first_window_rate,
            "final_window_rate": self.final_window_rate,
            "adaptation_time": NOT_REACHED if self.adaptation_time is None else self.adaptation_time,
            "target_rate": self.target_rate,
            "window": self.window,
            "final_window": self.final_window,
            "mean_quality": self.mean_quality,
            "regrasps": self.regrasps,
            "tau_threshold": self.tau_threshold,
            "pseudo_labels": self.pseudo_labels,
            "fallbacks": self.fallbacks,
            "velocity_table": self.velocity_table,
        }


def _attempt_dict(outcome, pose, step):
    return {
        "success": outcome.success,
        "geometric": outcome.geometric,
        "position_error": outcome.position_error,
        "orientation_error": outcome.orientation_error,
        "stability": outcome.stability,
        "quality": outcome.quality,
        "pose": pose.to_dict(),
        "pseudo_label": step.pseudo_label is not None,
        "success_objective": step.success_objective,
        "pose_loss": step.pose_loss,
    }


def _observation(depth, state, wrench, full):
    obs = {
        "depth_min": float(depth.depths.min()),
        "depth_mean": float(depth.depths.mean()),
        "hit_pixels": int((depth.depths < depth.far_value).sum()),
        "object_position": state.position.as_list(),
        "object_velocity": state.linear_velocity.as_list(),
    }
    if full:
        obs["depth"] = depth.to_list()
        obs["wrench"] = wrench.as_list()
    return obs


def run_episode(learner, world, sensors, rng, episode=1, log_observations=False):
    """One spawn, one attempt after closure latency, at most one regrasp when S_F exceeds tau.

    The record's pose, success and loss fields all describe the final attempt; `attempts`
    keeps every attempt.
    """
    latency = world.config.latency
    state = world.advance(world.spawn(rng), world.config.attempt_time, rng)

    start = time.perf_counter()
    depth = sensors.observe([state], rng)
    x = featurize(depth, ZERO_WRENCH, state)
    out, pose = learner.act(x)
    wall_time = time.perf_counter() - start
    observation = _observation(depth, state, ZERO_WRENCH, log_observations)

    closure = world.advance(state, latency, rng)
    outcome = world.attempt(pose, closure, rng)
    step = learner.learn(x, outcome, pose, episode)
    attempts = [_attempt_dict(outcome, pose, step)]
    fallback = out.fallback

    retries = 0
    while retries < MAX_RETRIES and needs_adjustment(outcome.stability, world.tau_threshold):
        retries += 1
        start = time.perf_counter()
        depth = sensors.observe([closure], rng)
        x = featurize(depth, outcome.wrench, closure)
        out, pose = learner.act(x)
        wall_time += time.perf_counter() - start
        fallback = fallback or out.fallback

        closure = world.advance(closure, latency, rng)
        outcome = world.attempt(pose, closure, rng)
        step = learner.learn(x, outcome, pose, episode)
        attempts.append(_attempt_dict(outcome, pose, step))

    if step.pseudo_label is not None:
        logger.debug("episode %d: pseudo-label from attempt %d", episode, retries + 1)
    return EpisodeRecord(
        episode=episode,
        observation=observation,
        predicted_pose=out.pose,
        executed_pose=pose,
        outcome=outcome,
        success_prob=out.success_prob,
        success_objective=step.success_objective,
        pose_loss=step.pose_loss,
        retries=retries,
        pseudo_label=step.pseudo_label is not None,
        fallback=fallback,
        object_state=closure,
        attempts=attempts,
        wall_time=wall_time,
    )


@functools.lru_cache(maxsize=32)
def _pretrained(world_config, hidden, hyperparams, seed):
    world = World(world_config, "static", tau_threshold=math.inf)
    dataset = []
    for k in range(hyperparams.pretrain_samples):
        rng = rng_stream(seed, "pretrain", k)
        state = world.spawn(rng)
        depth = world.observe(state, rng)
        dataset.append((featurize(depth, ZERO_WRENCH, state), oracle_grasp_pose(state, world_config.approach_offset)))
    architecture = Architecture.for_resolution(world_config.resolution, hidden=hidden)
    params = init_params(architecture, rng_stream(seed, "init"))
    return supervised_pretrain(params, dataset, hyperparams)


def pretrained_params(config, seed=None):
    """Shared starting point of every learner for a seed: supervised fit on static oracle grasps."""
    seed = config.seed if seed is None else seed
    world = with_scenario(config, "static").world
    return _pretrained(world, config.predictor.hidden, config.hyperparams, seed).copy()


def simulate(config, params=None):
    """Run config.episodes sequential episodes. Returns (header, records, learner)."""
    world = World.from_config(config.world, config.pattern, config.seed)
    params = pretrained_params(config) if params is None else params
    learner = Learner(config.learner, params, config.hyperparams, rng_stream(config.seed, "learner"))
    header = {
        "type": "header",
        "format_version": FORMAT_VERSION,
        "learner": config.learner.label,
        "scenario": config.scenario,
        "seed": config.seed,
        "tau_threshold": world.tau_threshold,
        "tolerances": {"r_pos": world.tolerances.r_pos, "r_ang": world.tolerances.r_ang},
        "config": config_to_dict(config),
    }
    records = []
    for i in range(1, config.episodes + 1):
        rng = rng_stream(config.seed, "episode", i)
        records.append(run_episode(learner, world, world.sensors, rng, i, config.log_observations))
    logger.info(
        "%s on %s, seed %d: %d episodes, %d successes",
        config.learner.value, config.scenario, config.seed, len(records), sum(r.success for r in records),
    )
    return header, records, learner


def adaptation_time(records, target_rate, window):
    """Smallest episode e >= window whose trailing window succeeds at >= target_rate; None if never."""
    if not 0 < target_rate <= 1 or window < 1:
        raise ValueError("target_rate must lie in (0, 1] and window must be >= 1")
    flags = _flags(records)
    counts = np.concatenate([[0], np.cumsum(flags)])
    for e in range(window, len(flags) + 1):
        if (counts[e] - counts[e - window]) / window >= target_rate:
            return e
    return None


def _flags(records):
    if isinstance(records, pd.DataFrame):
        return records["success"].astype(int).to_numpy()
    return np.array([int(r.success if hasattr(r, "success") else r) for r in records], dtype=int)


def rolling_curve(flags, window):
    s = pd.Series(flags, dtype=float)
    return s.rolling(window, min_periods=1).mean().tolist()


def velocity_table(frame, bin_width=SPEED_BIN):
    bins = np.floor(frame["object_speed"].to_numpy() / bin_width + 1e-9).astype(int)
    table = []
    for b in sorted(set(bins.tolist())):
        mask = bins == b
        table.append({
            "speed_from": round(b * bin_width, 6),
            "episodes": int(mask.sum()),
            "success_rate": float(frame["success"].to_numpy()[mask].mean()),
        })
    return table


def summarize(frame, metrics, learner="", scenario="", seed=0, tau_threshold=None):
    """MetricsSummary from episode rows (a DataFrame of episode log lines)."""
    flags = frame["success"].astype(int).to_numpy()
    n = len(flags)
    k = min(metrics.final_window, n)
    adapt = adaptation_time(frame, metrics.target_rate, metrics.window)
    return MetricsSummary(
        learner=learner,
        scenario=scenario,
        seed=seed,
        episodes=n,
        success_rate=float(flags.mean()),
        first_window_rate=float(flags[:k].mean()),
        final_window_rate=float(flags[-k:].mean()),
        adaptation_time=adapt,
        target_rate=metrics.target_rate,
        window=metrics.window,
        final_window=metrics.final_window,
        mean_quality=float(frame["quality"].mean()),
        regrasps=int(frame["retries"].sum()),
        pseudo_labels=int(frame["pseudo_label"].sum()),
        fallbacks=int(frame["fallback"].sum()),
        velocity_table=velocity_table(frame),
        tau_threshold=tau_threshold,
        curve=rolling_curve(flags, metrics.window),
    )


def records_frame(records):
    return pd.DataFrame([r.to_dict() for r in records])


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_run(out_dir, header, records, summary, params):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, EPISODE_LOG), "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header) + "\n")
        for r in records:
            f.write(json.dumps(r.to_dict()) + "\n")

    successes = 0
    curve_rows = []
    for r, rolling in zip(records, summary.curve):
        successes += int(r.success)
        curve_rows.append({
            "episode": r.episode,
            "success": int(r.success),
            "rolling_success": round(rolling, 6),
            "cumulative_success": round(successes / r.episode, 6),
        })
    _write_csv(os.path.join(out_dir, CURVE_FILE), CURVE_FIELDS, curve_rows)
    _write_csv(os.path.join(out_dir, TIMING_FILE), TIMING_FIELDS, [
        {"episode": r.episode, "attempts": r.retries + 1, "decision_seconds": round(r.wall_time, 6)}
        for r in records
    ])
    with open(os.path.join(out_dir, SUMMARY_FILE), "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary.to_dict(), f, indent=2)
        f.write("\n")
    save_params(params, os.path.join(out_dir, PARAMS_FILE))


def run_experiment(config, out_dir=None, params=None):
    header, records, learner = simulate(config, params)
    summary = summarize(
        records_frame(records), config.metrics, config.learner.label, config.scenario, config.seed,
        header["tau_threshold"],
    )
    if out_dir is not None:
        write_run(out_dir, header, records, summary, learner.params)
    return summary


def _final_rates(config, seeds, out_dir=None, tag=""):
    rows = []
    for seed in seeds:
        run_config = replace(config, seed=seed)
        run_dir = None
        if out_dir is not None:
            run_dir = os.path.join(out_dir, "runs", tag, config.learner.value, f"seed_{seed}")
        rows.append(run_experiment(run_config, run_dir))
    return rows


def velocity_sweep(config, speeds=None, learners=None, seeds=None, out_dir=None):
    """Linear motion at each fixed speed (no jitter); speed index i runs seeds offset by i * SEED_STRIDE.

    Returns {(learner flag, speed): [MetricsSummary per seed]}.
    """
    speeds = list(config.speeds if speeds is None else speeds)
    learners = list(config.learners if learners is None else learners)
    seeds = list(config.seeds if seeds is None else seeds)
    if any(s < 0 for s in speeds):
        raise ValueError("speeds must be nonnegative")

    results = {}
    rows = []
    for flag in learners:
        for i, speed in enumerate(speeds):
            run_config = with_scenario(config, "dynamic_linear", speed=float(speed), speed_jitter=0.0)
            run_config = replace(run_config, learner=LEARNER_FLAGS[flag])
            summaries = _final_rates(run_config, [s + i * SEED_STRIDE for s in seeds])
            results[(flag, speed)] = summaries
            rows.append({
                "learner": run_config.learner.label,
                "speed": speed,
                "seeds": len(summaries),
                "final_window_rate": round(float(np.mean([s.final_window_rate for s in summaries])), 6),
                "success_rate": round(float(np.mean([s.success_rate for s in summaries])), 6),
            })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, SWEEP_FILE), SWEEP_FIELDS, rows)
    print_sweep_summary(rows, out_dir)
    return results


def compare_learners(config, learners=None, seeds=None, scenarios=None, out_dir=None, keep_logs=False):
    """Identical scenarios and seeds for every learner; per-seed rows plus means.

    Returns {(scenario, learner flag): [MetricsSummary per seed]}.
    """
    learners = list(config.learners if learners is None else learners)
    seeds = list(config.seeds if seeds is None else seeds)
    scenarios = [config.scenario] if scenarios is None else list(scenarios)

    results = {}
    rows = []
    for scenario in scenarios:
        for flag in learners:
            run_config = replace(with_scenario(config, scenario), learner=LEARNER_FLAGS[flag])
            summaries = _final_rates(run_config, seeds, out_dir if keep_logs else None, scenario)
            results[(scenario, flag)] = summaries
            for s in summaries:
                rows.append({
                    "scenario": scenario,
                    "learner": run_config.learner.label,
                    "seed": s.seed,
                    "episodes": s.episodes,
                    "success_rate": s.success_rate,
                    "first_window_rate": s.first_window_rate,
                    "final_window_rate": s.final_window_rate,
                    "adaptation_time": NOT_REACHED if s.adaptation_time is None else s.adaptation_time,
                })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, COMPARISON_FILE), COMPARISON_FIELDS, rows)
    print_comparison_summary(results, out_dir)
    return results


def mean_final_rate(summaries):
    return float(np.mean([s.final_window_rate for s in summaries]))


def read_run(out_dir):
    """(header, episode DataFrame) from a run directory's JSONL log."""
    path = os.path.join(out_dir, EPISODE_LOG)
    with open(path, "r", encoding="utf-8") as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("type") != "header":
        raise ValueError(f"{path}: first line must be the run header")
    return lines[0], pd.DataFrame(lines[1:])


def report(out_dir, metrics=None):
    """Recompute the summary from the JSONL and re-check every logged success flag.

    Returns (summary, problems); problems is empty when the log is self-consistent.
    """
    header, frame = read_run(out_dir)
    if metrics is None:
        metrics = MetricsConfig(**header["config"]["metrics"])
    problems = []
    if frame.empty:
        return None, ["log has no episodes"]

    episodes = frame["episode"].to_numpy()
    if np.any(np.diff(episodes) <= 0):
        problems.append("episode indices are not strictly increasing")

    r_pos = header["tolerances"]["r_pos"]
    r_ang = header["tolerances"]["r_ang"]
    tau = header["tau_threshold"]
    for row in frame.itertuples(index=False):
        expected = row.position_error <= r_pos and row.orientation_error <= r_ang and row.stability <= tau
        if bool(row.success) != expected:
            problems.append(f"episode {row.episode}: logged success {row.success}, criterion gives {expected}")
        if row.pseudo_label and not row.success:
            problems.append(f"episode {row.episode}: pseudo-label on a failed attempt")
        if row.retries > MAX_RETRIES:
            problems.append(f"episode {row.episode}: {row.retries} retries")

    summary = summarize(frame, metrics, header["learner"], header["scenario"], header["seed"], tau)
    summary_path = os.path.join(out_dir, SUMMARY_FILE)
    if os.path.exists(summary_path):
        with open(summary_path, "r", encoding="utf-8") as f:
            stored = json.load(f)
        recomputed = json.loads(json.dumps(summary.to_dict()))
        for key in recomputed:
            if stored.get(key) != recomputed[key]:
                problems.append(f"summary.{key}: stored {stored.get(key)!r}, recomputed {recomputed[key]!r}")
    return summary, problems


def _fmt_adapt(value):
    return NOT_REACHED if value is None else str(value)


def print_run_summary(summary, out_dir=None):
    print("\n=== run Summary ===")
    print(f"  Learner               : {summary.learner}")
    print(f"  Scenario              : {summary.scenario}")
    print(f"  Seed                  : {summary.seed}")
    print(f"  Episodes              : {summary.episodes}")
    if summary.tau_threshold is not None:
        print(f"  tau_threshold         : {summary.tau_threshold:.4f}")
    print(f"  Success rate          : {summary.success_rate:.1%}")
    print(f"  First {summary.final_window:<4d} episodes  : {summary.first_window_rate:.1%}")
    print(f"  Last {summary.final_window:<4d} episodes   : {summary.final_window_rate:.1%}")
    print(f"  Adaptation time       : {_fmt_adapt(summary.adaptation_time)}"
          f" (rate {summary.target_rate:.0%}, window {summary.window})")
    print(f"  Mean quality Q(G)     : {summary.mean_quality:.6f}")
    print(f"  Regrasps              : {summary.regrasps}")
    print(f"  Pseudo-labels         : {summary.pseudo_labels}")
    print(f"  Quaternion fallbacks  : {summary.fallbacks}")

    print(f"\n  {'Speed from':>10s} {'Episodes':>9s} {'Success':>8s}")
    print(f"  {'-'*10} {'-'*9} {'-'*8}")
    for row in summary.velocity_table:
        print(f"  {row['speed_from']:>10.2f} {row['episodes']:>9d} {row['success_rate']:>8.1%}")
    if out_dir:
        print(f"\n  Output: {out_dir}")


def print_comparison_summary(results, out_dir=None):
    print("\n=== compare Summary ===")
    print(f"\n  {'Scenario':<18s} {'Learner':<30s} {'Seeds':>5s} {'First':>7s} {'Final':>7s} {'Overall':>8s}")
    print(f"  {'-'*18} {'-'*30} {'-'*5} {'-'*7} {'-'*7} {'-'*8}")
    means = {}
    for (scenario, flag), summaries in results.items():
        kind = LEARNER_FLAGS[flag]
        means[(scenario, kind.value)] = mean_final_rate(summaries)
        print(f"  {scenario:<18s} {kind.label:<30s} {len(summaries):>5d} "
              f"{np.mean([s.first_window_rate for s in summaries]):>7.1%} "
              f"{means[(scenario, kind.value)]:>7.1%} "
              f"{np.mean([s.success_rate for s in summaries]):>8.1%}")

    for scenario in dict.fromkeys(s for s, _ in means):
        ssl = means.get((scenario, LearnerKind.SSL_ONLINE.value))
        if ssl is None:
            continue
        for baseline, reference in REFERENCE_IMPROVEMENT.items():
            other = means.get((scenario, baseline))
            if other is not None:
                print(f"  {scenario}: ssl_online over {LearnerKind(baseline).label}: "
                      f"{100 * (ssl - other):+.1f} pts (published {reference:+.0f})")

    print("\n  Published reference rates (context only, not asserted):")
    for learner, setting, rate in REFERENCE_RATES:
        print(f"    {learner:<20s} {setting:<8s} {rate:.0%}")
    if out_dir:
        print(f"\n  Output: {os.path.join(out_dir, COMPARISON_FILE)}")


def print_sweep_summary(rows, out_dir=None):
    print("\n=== sweep Summary ===")
    print(f"\n  {'Learner':<30s} {'Speed':>6s} {'Seeds':>5s} {'Final':>7s} {'Overall':>8s}")
    print(f"  {'-'*30} {'-'*6} {'-'*5} {'-'*7} {'-'*8}")
    for r in rows:
        print(f"  {r['learner']:<30s} {r['speed']:>6.2f} {r['seeds']:>5d} "
              f"{r['final_window_rate']:>7.1%} {r['success_rate']:>8.1%}")
    if out_dir:
        print(f"\n  Output: {os.path.join(out_dir, SWEEP_FILE)}")


def print_report_summary(summary, problems, out_dir):
    print("\n=== report Summary ===")
    print(f"  Log                   : {os.path.join(out_dir, EPISODE_LOG)}")
    if summary is not None:
        print(f"  Episodes              : {summary.episodes}")
        print(f"  Success rate          : {summary.success_rate:.1%}")
        print(f"  Last {summary.final_window:<4d} episodes   : {summary.final_window_rate:.1%}")
        print(f"  Adaptation time       : {_fmt_adapt(summary.adaptation_time)}")
    print(f"  Consistency problems  : {len(problems)}")
    for p in problems[:20]:
        print(f"    {p}")
