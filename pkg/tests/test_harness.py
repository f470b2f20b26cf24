import json
import os
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from scripts.config import MetricsConfig, load_config, with_scenario
from scripts.harness import (
    COMPARISON_FILE,
    CURVE_FILE,
    EPISODE_LOG,
    MAX_RETRIES,
    PARAMS_FILE,
    SUMMARY_FILE,
    SWEEP_FILE,
    adaptation_time,
    compare_learners,
    pretrained_params,
    read_run,
    report,
    run_episode,
    run_experiment,
    simulate,
    summarize,
    velocity_sweep,
)
from scripts.learner import LearnStep, LearnerKind, self_label
from scripts.pose_geometry import GraspPose, Vec3
from scripts.predictor import FEATURE_LENGTH_UNIT
from scripts.seeding import rng_stream
from scripts.world import APPROACH_OFFSET, TOP_DOWN, World


DETERMINISTIC_FILES = [EPISODE_LOG, CURVE_FILE, SUMMARY_FILE, PARAMS_FILE]


class OracleLearner:
    """Grasps straight above the observed object position; never learns."""

    def act(self, x):
        position = Vec3.from_array(x[-6:-3] * FEATURE_LENGTH_UNIT)
        pose = GraspPose(position + Vec3(0.0, 0.0, APPROACH_OFFSET), TOP_DOWN)
        return SimpleNamespace(pose=pose, success_prob=1.0, fallback=False), pose

    def learn(self, x, outcome, executed_pose, episode=None):
        return LearnStep(self_label(outcome, executed_pose, episode), 0.0, None)


class CountingLearner(OracleLearner):
    """Oracle grasps whose outputs carry the attempt number."""

    def __init__(self):
        self.calls = 0

    def act(self, x):
        _, pose = super().act(x)
        self.calls += 1
        return SimpleNamespace(pose=pose, success_prob=0.1 * self.calls, fallback=False), pose

    def learn(self, x, outcome, executed_pose, episode=None):
        return LearnStep(self_label(outcome, executed_pose, episode), float(self.calls), 10.0 + self.calls)


class TestAdaptationTime:
    def test_all_successes(self):
        assert adaptation_time([True] * 20, 0.7, 10) == 10

    def test_never_reached(self):
        assert adaptation_time([False] * 20, 0.7, 10) is None

    def test_alternating(self):
        assert adaptation_time([True, False] * 10, 0.5, 10) == 10

    def test_late_start(self):
        flags = [False] * 10 + [True] * 10
        assert adaptation_time(flags, 0.7, 10) == 17

    def test_shorter_than_window(self):
        assert adaptation_time([True] * 5, 0.5, 10) is None

    def test_accepts_a_frame(self):
        frame = pd.DataFrame({"success": [False, True, True, True]})
        assert adaptation_time(frame, 1.0, 3) == 4

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            adaptation_time([True], 0.0, 1)
        with pytest.raises(ValueError):
            adaptation_time([True], 0.5, 0)


class TestSummarize:
    def test_windows_and_velocity_bins(self):
        frame = pd.DataFrame({
            "success": [False, False, True, True],
            "quality": [0.0, 0.0, 0.002, 0.004],
            "retries": [0, 1, 0, 1],
            "pseudo_label": [False, False, True, True],
            "fallback": [False, False, False, False],
            "object_speed": [0.0, 0.02, 0.07, 0.12],
        })
        summary = summarize(frame, MetricsConfig(target_rate=1.0, window=2, final_window=2))
        assert summary.success_rate == 0.5
        assert summary.first_window_rate == 0.0
        assert summary.final_window_rate == 1.0
        assert summary.adaptation_time == 4
        assert summary.regrasps == 2
        assert summary.pseudo_labels == 2
        assert summary.mean_quality == pytest.approx(0.0015)
        assert [row["episodes"] for row in summary.velocity_table] == [2, 1, 1]
        assert [row["success_rate"] for row in summary.velocity_table] == [0.0, 1.0, 1.0]


class TestRunEpisode:
    def test_oracle_learner_always_succeeds(self, quiet_world):
        world = World(quiet_world, "static")
        for i in range(1, 21):
            record = run_episode(OracleLearner(), world, world.sensors, rng_stream(0, "episode", i), i)
            assert record.success, f"episode {i}: {record.outcome}"
            assert record.retries == 0
            assert record.pseudo_label

    def test_regrasp_when_unstable(self, quiet_world):
        world = World(replace(quiet_world, wrench_sigma=5.0), "static", tau_threshold=1e-6)
        record = run_episode(OracleLearner(), world, world.sensors, rng_stream(0, "episode", 1), 1)
        assert record.retries == MAX_RETRIES
        assert len(record.attempts) == 2
        assert not record.success

    def test_record_fields_come_from_the_final_attempt(self, quiet_world):
        world = World(replace(quiet_world, wrench_sigma=5.0), "static", tau_threshold=1e-6)
        record = run_episode(CountingLearner(), world, world.sensors, rng_stream(0, "episode", 1), 1)
        assert record.retries == 1
        assert record.success_prob == pytest.approx(0.2)
        assert record.success_objective == 2.0
        assert record.pose_loss == 12.0
        assert record.predicted_pose == record.executed_pose
        first, last = record.attempts
        assert (first["success_objective"], first["pose_loss"]) == (1.0, 11.0)
        assert (last["success_objective"], last["pose_loss"]) == (2.0, 12.0)
        assert last["pose"] == record.executed_pose.to_dict()

    def test_full_observation_logging(self, quiet_world):
        world = World(quiet_world, "static")
        record = run_episode(OracleLearner(), world, world.sensors, rng_stream(0, "episode", 1), 1,
                             log_observations=True)
        assert len(record.observation["depth"]) == 64
        assert len(record.observation["wrench"]) == 6


class TestSimulate:
    def test_episode_invariants(self, small_config):
        header, records, _ = simulate(small_config)
        assert header["type"] == "header"
        assert [r.episode for r in records] == list(range(1, small_config.episodes + 1))
        for r in records:
            assert r.retries <= MAX_RETRIES
            assert r.pseudo_label == r.success
            assert r.success == (r.outcome.geometric and r.outcome.stability <= header["tau_threshold"])

    def test_frozen_learner_keeps_its_parameters(self, small_config):
        config = replace(small_config, learner=LearnerKind.SUPERVISED_FROZEN)
        _, _, learner = simulate(config)
        assert np.array_equal(learner.params.flatten(), pretrained_params(config).flatten())

    def test_pretraining_is_shared_across_scenarios(self, small_config):
        static = with_scenario(small_config, "static")
        assert np.array_equal(pretrained_params(small_config).flatten(), pretrained_params(static).flatten())


class TestRunExperiment:
    def test_same_seed_same_files(self, small_config, tmp_path):
        run_experiment(small_config, str(tmp_path / "a"))
        run_experiment(small_config, str(tmp_path / "b"))
        for name in DETERMINISTIC_FILES:
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"

    def test_single_episode(self, small_config, tmp_path):
        summary = run_experiment(replace(small_config, episodes=1), str(tmp_path))
        assert summary.success_rate in (0.0, 1.0)
        lines = (tmp_path / CURVE_FILE).read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert lines[0] == "episode,success,rolling_success,cumulative_success"

    def test_log_layout(self, small_config, tmp_path):
        run_experiment(small_config, str(tmp_path))
        header, frame = read_run(str(tmp_path))
        assert header["seed"] == small_config.seed
        assert len(frame) == small_config.episodes
        assert list(frame["episode"]) == list(range(1, small_config.episodes + 1))

    def test_summary_carries_the_run_tau(self, small_config, tmp_path):
        summary = run_experiment(small_config, str(tmp_path))
        header, _ = read_run(str(tmp_path))
        calibrated = World.from_config(small_config.world, small_config.pattern, small_config.seed).tau_threshold
        assert summary.tau_threshold == header["tau_threshold"] == calibrated
        stored = json.loads((tmp_path / SUMMARY_FILE).read_text(encoding="utf-8"))
        assert stored["tau_threshold"] == calibrated

    def test_configured_tau_is_reported(self, small_config):
        config = replace(small_config, world=replace(small_config.world, tau_threshold=0.5))
        assert run_experiment(config).tau_threshold == 0.5


class TestReport:
    def test_clean_log(self, small_config, tmp_path):
        stored = run_experiment(small_config, str(tmp_path))
        summary, problems = report(str(tmp_path))
        assert problems == []
        assert summary.success_rate == stored.success_rate
        assert summary.adaptation_time == stored.adaptation_time

    def test_tampered_success_flag_detected(self, small_config, tmp_path):
        run_experiment(small_config, str(tmp_path))
        path = tmp_path / EPISODE_LOG
        lines = path.read_text(encoding="utf-8").splitlines()
        row = json.loads(lines[1])
        row["success"] = not row["success"]
        lines[1] = json.dumps(row)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _, problems = report(str(tmp_path))
        assert any(p.startswith("episode 1:") for p in problems)
        assert any(p.startswith("summary.") for p in problems)

    def test_missing_header(self, tmp_path):
        (tmp_path / EPISODE_LOG).write_text('{"type": "episode"}\n', encoding="utf-8")
        with pytest.raises(ValueError):
            report(str(tmp_path))


class TestExperiments:
    def test_sweep_rows(self, small_config, tmp_path):
        results = velocity_sweep(small_config, speeds=[0.0, 0.1], learners=["ssl", "supervised"], seeds=[0],
                                 out_dir=str(tmp_path))
        assert sorted(results) == [("ssl", 0.0), ("ssl", 0.1), ("supervised", 0.0), ("supervised", 0.1)]
        lines = (tmp_path / SWEEP_FILE).read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 4

    def test_zero_speed_matches_static(self, small_config):
        results = velocity_sweep(small_config, speeds=[0.0], learners=["ssl"], seeds=[0])
        swept = results[("ssl", 0.0)][0].to_dict()
        static = run_experiment(replace(with_scenario(small_config, "static"), seed=0)).to_dict()
        swept.pop("scenario")
        static.pop("scenario")
        assert swept == static

    def test_compare_single_learner(self, small_config, tmp_path):
        results = compare_learners(small_config, learners=["ssl"], seeds=[0, 1], out_dir=str(tmp_path))
        assert list(results) == [("dynamic_linear", "ssl")]
        assert [s.seed for s in results[("dynamic_linear", "ssl")]] == [0, 1]
        lines = (tmp_path / COMPARISON_FILE).read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3

    def test_learners_see_identical_scenes(self, small_config, tmp_path):
        compare_learners(small_config, learners=["ssl", "supervised"], seeds=[4], out_dir=str(tmp_path),
                         keep_logs=True)
        runs = tmp_path / "runs" / "dynamic_linear"
        header_a, frame_a = read_run(str(runs / "ssl_online" / "seed_4"))
        header_b, frame_b = read_run(str(runs / "supervised_frozen" / "seed_4"))
        assert header_a["seed"] == header_b["seed"] == 4
        assert header_a["tau_threshold"] == header_b["tau_threshold"]
        positions_a = [obs["object_position"] for obs in frame_a["observation"]]
        positions_b = [obs["object_position"] for obs in frame_b["observation"]]
        assert positions_a == positions_b


@pytest.mark.slow
class TestLearningCurves:
    SEEDS = range(10)

    def summaries(self, learner):
        config = load_config(overrides={"scenario": "dynamic_linear", "learner": learner, "episodes": 500})
        return [run_experiment(replace(config, seed=seed)) for seed in self.SEEDS]

    def test_ssl_improves_online(self):
        runs = self.summaries("ssl")
        first = np.mean([s.first_window_rate for s in runs])
        last = np.mean([s.final_window_rate for s in runs])
        assert last > first, f"last 100 {last:.3f} vs first 100 {first:.3f}"

    def test_ssl_beats_frozen_supervised(self):
        ssl = np.mean([s.final_window_rate for s in self.summaries("ssl")])
        frozen = np.mean([s.final_window_rate for s in self.summaries("supervised")])
        assert ssl > frozen, f"ssl {ssl:.3f} vs supervised {frozen:.3f}"

    def test_frozen_supervised_degrades_with_speed(self):
        config = load_config(overrides={"learner": "supervised", "episodes": 200})
        results = velocity_sweep(config, learners=["supervised"], seeds=list(self.SEEDS))
        rates = [np.mean([s.success_rate for s in results[("supervised", speed)]]) for speed in config.speeds]
        for slower, faster in zip(rates, rates[1:]):
            assert faster <= slower + 0.02, rates
        assert rates[-1] < rates[0], rates
