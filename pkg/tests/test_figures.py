import pandas as pd

from scripts.figures import (
    comparison_figure,
    success_curve_figure,
    velocity_sweep_figure,
    velocity_table_figure,
)
from scripts.harness import REFERENCE_RATES


def test_success_curve_has_rolling_cumulative_and_outcomes():
    curve = pd.DataFrame({
        "episode": [1, 2, 3],
        "success": [0, 1, 1],
        "rolling_success": [0.0, 0.5, 0.666667],
        "cumulative_success": [0.0, 0.5, 0.666667],
    })
    fig = success_curve_figure(curve, target_rate=0.7, adaptation=3)
    assert [t.name for t in fig.data] == ["Rolling", "Cumulative", "Success"]


def test_comparison_marks_reference_rates():
    comparison = pd.DataFrame({
        "scenario": ["dynamic_linear"] * 4,
        "learner": ["ssl_online", "ssl_online", "supervised_frozen", "supervised_frozen"],
        "seed": [0, 1, 0, 1],
        "final_window_rate": [1.0, 0.5, 0.5, 0.5],
    })
    fig = comparison_figure(comparison)
    bars = [t for t in fig.data if t.type == "bar"]
    assert sorted(float(b.y[0]) for b in bars) == [0.5, 0.75]
    assert len(fig.data) - len(bars) == len(REFERENCE_RATES)


def test_sweep_lines_per_learner():
    sweep = pd.DataFrame({
        "learner": ["ssl_online", "ssl_online", "supervised_frozen", "supervised_frozen"],
        "speed": [0.0, 0.1, 0.0, 0.1],
        "final_window_rate": [0.9, 0.7, 0.8, 0.4],
    })
    assert len(velocity_sweep_figure(sweep).data) == 2


def test_velocity_table_bars():
    table = pd.DataFrame({"speed_from": [0.0, 0.05], "episodes": [10, 4], "success_rate": [0.9, 0.5]})
    assert list(velocity_table_figure(table).data[0].y) == [0.9, 0.5]
