"""Figure rendering for the CLI report paths.

Every report command that writes a CSV can also render a PNG next to it.
Uses the Agg backend so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_sigma_histogram(sigmas, path, bins=20):
    """Histogram of per-tensor post-shift standard deviations."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(sigmas), bins=bins, color="tab:blue", alpha=0.8, edgecolor="black")
    ax.set_xlabel("standard deviation of softmax input")
    ax.set_ylabel("tensors")
    ax.set_title("Calibration standard deviations")
    _save(fig, path)


def plot_clip_curves(curve, c_analytic, c_empirical, analytic_curve, path, title=""):
    """Empirical and analytic MSE vs clipping value, with both minima marked."""
    cs = [c for c, _ in curve]
    emp = [v for _, v in curve]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.plot(cs, emp, label="simulation", color="tab:orange")
    if analytic_curve is not None:
        ax.plot([c for c, _ in analytic_curve], [v for _, v in analytic_curve],
                label="analysis", color="tab:blue", linestyle="--")
    ax.axvline(c_empirical, color="tab:orange", alpha=0.5, linewidth=1)
    ax.axvline(c_analytic, color="tab:blue", alpha=0.5, linewidth=1)
    ax.set_xlabel("clipping value C")
    ax.set_ylabel("post-exponent MSE")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_fit(sigmas, c_stars, model, path):
    """Solved optimal clips and the fitted line across the sigma range."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sigmas, c_stars, "o", label="solved optimum", color="tab:blue", markersize=4)
    line = model.slope * np.asarray(sigmas) + model.intercept
    ax.plot(sigmas, line,
            label=f"fit {model.slope:.3f}*sigma{model.intercept:+.3f}", color="tab:red")
    ax.set_xlabel("sigma")
    ax.set_ylabel("optimal clipping value")
    ax.set_title(f"{model.bits}-bit linear clip model")
    ax.legend()
    _save(fig, path)


def plot_mse_report(rows, path):
    """Grouped bars of exp-domain and output MSE per kernel from report rows."""
    tensors = sorted({r["tensor"] for r in rows})
    kernels = sorted({r["kernel"] for r in rows})
    idx = np.arange(len(tensors))
    width = 0.8 / max(len(kernels), 1)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for metric, ax in zip(("exp_mse", "output_mse"), axes):
        for k, kern in enumerate(kernels):
            vals = []
            for t in tensors:
                match = [r[metric] for r in rows if r["tensor"] == t and r["kernel"] == kern]
                vals.append(match[0] if match else np.nan)
            ax.bar(idx + k * width, vals, width, label=kern)
        ax.set_yscale("log")
        ax.set_xticks(idx + width * (len(kernels) - 1) / 2)
        ax.set_xticklabels(tensors, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
    _save(fig, path)
