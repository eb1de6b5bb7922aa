"""Figure rendering for run and campaign artifacts.

Reads the delimited outputs of a run directory and renders matplotlib figures
(PNG) next to them: station profiles (mean, RMS, shear stress), particle CDFs,
and the campaign pressure-drop / impact comparisons.
"""

from __future__ import annotations

import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .statistics import profiles_from_csv  # noqa: E402

_STATION_COLORS = ("tab:red", "tab:green", "tab:blue", "tab:orange", "tab:purple")


def _read_cdf(path):
    values, cdf = [], []
    with open(path) as f:
        for row in csv.DictReader(f):
            values.append(float(row["value"]))
            cdf.append(float(row["cdf"]))
    return values, cdf


def render_profile_figures(run_dir, out_dir=None) -> list:
    """Mean/RMS/shear-stress profile figures from profiles.csv."""
    out_dir = out_dir or run_dir
    path = os.path.join(run_dir, "profiles.csv")
    if not os.path.exists(path):
        return []
    profiles = profiles_from_csv(path)
    written = []
    panels = [
        ("U_mean", "u_mean", r"$U/U_a$"),
        ("V_mean", "v_mean", r"$V/U_a$"),
        ("u_rms", "u_rms", r"$u'_{rms}/U_a$"),
        ("v_rms", "v_rms", r"$v'_{rms}/U_a$"),
        ("uv_stress", "uv_stress", r"$\langle u'v' \rangle/U_a^2$"),
    ]
    for name, attr, label in panels:
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for i, p in enumerate(profiles):
            ax.plot(p.y_over_Da, getattr(p, attr),
                    color=_STATION_COLORS[i % len(_STATION_COLORS)],
                    label=rf"$x/D_a = {p.station:g}$")
        ax.set_xlabel(r"$y/D_a$")
        ax.set_ylabel(label)
        ax.axhline(0.0, lw=0.5, color="0.6")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = os.path.join(out_dir, f"fig_profile_{name}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written


def render_cdf_figures(run_dir, out_dir=None) -> list:
    """One figure per particle kind: radial-location, impacts and KE CDFs."""
    out_dir = out_dir or run_dir
    written = []
    for kind in ("carrier", "fine"):
        paths = sorted(glob.glob(os.path.join(run_dir, f"cdf_{kind}_*.csv")))
        if not paths:
            continue
        fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
        for path in paths:
            stem = os.path.basename(path)[len(f"cdf_{kind}_"):-4]
            values, cdf = _read_cdf(path)
            if stem.startswith("radial"):
                axes[0].plot(values, cdf, label=stem.replace("radial_", ""))
            elif stem == "impacts":
                axes[1].step(values, cdf, where="post")
            elif stem == "impact_ke":
                axes[2].plot(values, cdf)
        axes[0].set_xlabel(r"$r/D_a$")
        axes[0].set_ylabel("CDF")
        if axes[0].lines:
            axes[0].legend(fontsize=8)
        axes[1].set_xlabel("wall impacts per particle")
        axes[2].set_xlabel("mean impact KE [J]")
        for ax in axes:
            ax.set_ylim(0, 1.02)
        fig.suptitle(f"{kind} particles")
        fig.tight_layout()
        out = os.path.join(out_dir, f"fig_cdf_{kind}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written


def render_campaign_figures(campaign_dir, out_dir=None) -> list:
    """Pressure-drop and impact-median bars across the campaign table."""
    out_dir = out_dir or campaign_dir
    path = os.path.join(campaign_dir, "campaign_summary.csv")
    if not os.path.exists(path):
        return []
    with open(path) as f:
        rows = [r for r in csv.DictReader(f) if r.get("status") == "ok"]
    if not rows:
        return []
    written = []
    labels = [r["label"] for r in rows]
    for column, ylabel, stem in (
        ("pressure_drop_pa", "pressure drop [Pa]", "pressure_drop"),
        ("carrier_median_impacts", "median wall impacts", "impacts"),
        ("carrier_median_impact_ke", "median impact KE [J]", "impact_ke"),
    ):
        vals = [float(r.get(column, "nan") or "nan") for r in rows]
        fig, ax = plt.subplots(figsize=(5.2, 3.2))
        ax.bar(range(len(labels)), vals, color="tab:blue")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        out = os.path.join(out_dir, f"fig_campaign_{stem}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written


def render_all(run_dir, out_dir=None) -> list:
    """Render every figure the directory's artifacts support."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    written = []
    written += render_profile_figures(run_dir, out_dir)
    written += render_cdf_figures(run_dir, out_dir)
    written += render_campaign_figures(run_dir, out_dir)
    for sub in sorted(glob.glob(os.path.join(run_dir, "*", "profiles.csv"))):
        sub_dir = os.path.dirname(sub)
        target = os.path.join(out_dir, os.path.basename(sub_dir)) \
            if out_dir != run_dir else sub_dir
        os.makedirs(target, exist_ok=True)
        written += render_profile_figures(sub_dir, target)
        written += render_cdf_figures(sub_dir, target)
    return written
