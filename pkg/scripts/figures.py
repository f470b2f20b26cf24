"""Plotly figures over the result CSVs. Pure functions of DataFrames; app.py only lays them out."""

import plotly.express as px
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from scripts.harness import REFERENCE_RATES


BRAND_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

LEARNER_COLORS = {
    "ssl_online": "#2ca02c",
    "supervised_frozen": "#1f77b4",
    "reward_baseline (simplified)": "#ff7f0e",
}


def success_curve_figure(curve, target_rate=None, adaptation=None):
    fig = make_subplots(rows=2, cols=1, shared_xaxes=True, row_heights=[0.75, 0.25],
                        subplot_titles=["Success Rate", "Outcome per Episode"], vertical_spacing=0.1)
    fig.add_trace(go.Scatter(x=curve["episode"], y=curve["rolling_success"], mode="lines",
                             name="Rolling", line=dict(color=BRAND_COLORS[2])), row=1, col=1)
    fig.add_trace(go.Scatter(x=curve["episode"], y=curve["cumulative_success"], mode="lines",
                             name="Cumulative", line=dict(color=BRAND_COLORS[0], dash="dot")), row=1, col=1)
    if target_rate is not None:
        fig.add_hline(y=target_rate, line_dash="dash", line_color="gray", row=1, col=1)
    if adaptation is not None:
        fig.add_vline(x=adaptation, line_dash="dash", line_color=BRAND_COLORS[3])
    fig.add_trace(go.Bar(x=curve["episode"], y=curve["success"], name="Success",
                         marker_color=BRAND_COLORS[2], showlegend=False), row=2, col=1)
    fig.update_yaxes(range=[0, 1.05], row=1, col=1)
    fig.update_layout(height=520, xaxis2_title="Episode", margin=dict(l=0, r=0, t=30, b=0))
    return fig


def comparison_figure(comparison):
    means = (comparison.groupby(["scenario", "learner"], sort=False)["final_window_rate"]
             .mean().reset_index())
    fig = px.bar(means, x="learner", y="final_window_rate", color="learner", facet_col="scenario",
                 color_discrete_map=LEARNER_COLORS, labels={"final_window_rate": "Final-window success"})
    for learner, setting, rate in REFERENCE_RATES:
        fig.add_trace(go.Scatter(
            x=[learner if learner != "reward_baseline" else "reward_baseline (simplified)"], y=[rate],
            mode="markers", marker=dict(symbol="diamond-open", size=12, color="black"),
            name=f"published ({setting})", showlegend=False,
        ))
    fig.update_yaxes(range=[0, 1.05])
    fig.update_layout(height=450, margin=dict(l=0, r=0, t=30, b=0))
    return fig


def seed_spread_figure(comparison):
    fig = px.strip(comparison, x="learner", y="final_window_rate", color="learner",
                   hover_data=["seed", "scenario"], color_discrete_map=LEARNER_COLORS)
    fig.update_layout(height=400, showlegend=False, margin=dict(l=0, r=0, t=10, b=0))
    return fig


def velocity_sweep_figure(sweep):
    fig = px.line(sweep, x="speed", y="final_window_rate", color="learner", markers=True,
                  color_discrete_map=LEARNER_COLORS,
                  labels={"speed": "Object speed (m/s)", "final_window_rate": "Final-window success"})
    fig.update_yaxes(range=[0, 1.05])
    fig.update_layout(height=450, margin=dict(l=0, r=0, t=10, b=0))
    return fig


def velocity_table_figure(table):
    fig = go.Figure(go.Bar(x=table["speed_from"], y=table["success_rate"], text=table["episodes"],
                           marker_color=BRAND_COLORS[0]))
    fig.update_layout(height=350, xaxis_title="Object speed bin (m/s)", yaxis_title="Success rate",
                      yaxis=dict(range=[0, 1.05]), margin=dict(l=0, r=0, t=10, b=0))
    return fig


def timing_figure(timing):
    fig = px.histogram(timing, x="decision_seconds", nbins=40, color_discrete_sequence=[BRAND_COLORS[4]])
    fig.update_layout(height=350, xaxis_title="Decision wall time (s)", margin=dict(l=0, r=0, t=10, b=0))
    return fig
