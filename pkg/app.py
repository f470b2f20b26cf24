import json
import os

import pandas as pd
import streamlit as st

from scripts.config import output_dir
from scripts.figures import (
    comparison_figure,
    seed_spread_figure,
    success_curve_figure,
    timing_figure,
    velocity_sweep_figure,
    velocity_table_figure,
)
from scripts.harness import COMPARISON_FILE, CURVE_FILE, SUMMARY_FILE, SWEEP_FILE, TIMING_FILE

DATA_DIR = output_dir()

st.set_page_config(
    page_title="selfgrasp – Grasp Learning Results",
    page_icon="🤖",
    layout="wide",
    initial_sidebar_state="expanded",
)


@st.cache_data
def load_csv(path):
    return pd.read_csv(path)


def load_csv_safe(path):
    if os.path.exists(path):
        return load_csv(path)
    return pd.DataFrame()


def load_json_safe(path):
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    return {}


st.sidebar.title("selfgrasp")
st.sidebar.caption("Self-supervised grasping in dynamic scenes")
data_dir = st.sidebar.text_input("Results directory", DATA_DIR)
page = st.sidebar.radio("Navigate", ["Run", "Learner Comparison", "Velocity Sweep"], index=0)


def page_run():
    st.title("Single Run")
    summary = load_json_safe(os.path.join(data_dir, SUMMARY_FILE))
    curve = load_csv_safe(os.path.join(data_dir, CURVE_FILE))
    if not summary or curve.empty:
        st.info("No run found. Produce one with `python main.py run --out <dir>`.")
        return

    c1, c2, c3, c4, c5 = st.columns(5)
    c1.metric("Learner", summary["learner"])
    c2.metric("Scenario", summary["scenario"])
    c3.metric("Success Rate", f"{summary['success_rate']:.1%}")
    c4.metric("Final Window", f"{summary['final_window_rate']:.1%}",
              delta=f"{100 * (summary['final_window_rate'] - summary['first_window_rate']):+.1f} pts vs first")
    c5.metric("Adaptation Time", str(summary["adaptation_time"]))

    adaptation = summary["adaptation_time"] if isinstance(summary["adaptation_time"], int) else None
    tab1, tab2, tab3 = st.tabs(["Success Curve", "By Object Speed", "Decision Time"])
    with tab1:
        st.plotly_chart(success_curve_figure(curve, summary["target_rate"], adaptation), use_container_width=True)
        m1, m2, m3 = st.columns(3)
        m1.metric("Regrasps", summary["regrasps"])
        m2.metric("Pseudo-labels", summary["pseudo_labels"])
        m3.metric("Mean Q(G)", f"{summary['mean_quality']:.6f}")
    with tab2:
        table = pd.DataFrame(summary["velocity_table"])
        st.plotly_chart(velocity_table_figure(table), use_container_width=True)
        st.dataframe(table, use_container_width=True, hide_index=True)
    with tab3:
        timing = load_csv_safe(os.path.join(data_dir, TIMING_FILE))
        if timing.empty:
            st.info("No timing file in this directory.")
        else:
            st.plotly_chart(timing_figure(timing), use_container_width=True)
            st.caption(f"Median decision time {timing['decision_seconds'].median() * 1000:.2f} ms")


def page_comparison():
    st.title("Learner Comparison")
    comparison = load_csv_safe(os.path.join(data_dir, COMPARISON_FILE))
    if comparison.empty:
        st.info("No comparison found. Produce one with `python main.py compare --out <dir>`.")
        return
    st.markdown("Diamonds mark published success rates; they are context, not targets.")
    tab1, tab2 = st.tabs(["Mean Final-Window Success", "Per Seed"])
    with tab1:
        st.plotly_chart(comparison_figure(comparison), use_container_width=True)
        means = (comparison.groupby(["scenario", "learner"], sort=False)
                 [["first_window_rate", "final_window_rate", "success_rate"]].mean().reset_index())
        st.dataframe(means, use_container_width=True, hide_index=True)
    with tab2:
        st.plotly_chart(seed_spread_figure(comparison), use_container_width=True)
        st.dataframe(comparison, use_container_width=True, hide_index=True)


def page_sweep():
    st.title("Velocity Sweep")
    sweep = load_csv_safe(os.path.join(data_dir, SWEEP_FILE))
    if sweep.empty:
        st.info("No sweep found. Produce one with `python main.py sweep --out <dir>`.")
        return
    st.plotly_chart(velocity_sweep_figure(sweep), use_container_width=True)
    st.dataframe(sweep, use_container_width=True, hide_index=True)


PAGES = {
    "Run": page_run,
    "Learner Comparison": page_comparison,
    "Velocity Sweep": page_sweep,
}

PAGES[page]()
