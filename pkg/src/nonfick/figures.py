"""Matplotlib renderings for the CLI report paths (PNG, Agg backend).

Figures are written next to the delimited output and kept byte-stable by
suppressing the PNG date metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 130, "metadata": {"Date": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def render_compare(stats, pdf_third, pdf_fick, pdf_steady, path, title=""):
    """Paper-style two-panel comparison: linear on top, semilog below."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6.4, 7.2), sharex=True)
    bc = stats.bin_centers
    for ax in (ax0, ax1):
        ax.plot(bc, stats.density, "o", ms=3, mfc="none", color="tab:blue",
                label="Monte Carlo")
        ax.plot(pdf_third.x, pdf_third.values, "-", color="black",
                label="third-order equilibrium")
        ax.plot(pdf_fick.x, pdf_fick.values, "--", color="tab:red",
                label="Fick (FPE) equilibrium")
        if pdf_steady is not None:
            ax.plot(pdf_steady.x, pdf_steady.values, ":", color="tab:green",
                    label="PDE steady state")
        ax.set_xlim(bc[0], bc[-1])
    ax1.set_yscale("log")
    floor = max(stats.density[stats.density > 0].min() / 3, 1e-12)
    ax1.set_ylim(floor, None)
    ax0.set_ylabel("P(x)")
    ax1.set_ylabel("P(x)")
    ax1.set_xlabel("x")
    ax0.legend(fontsize=8)
    if title:
        ax0.set_title(title, fontsize=10)
    _finish(fig, path)


def render_sweep(gamma_tau, curves, path):
    """R vs gamma*tau, one curve per delta (log-log)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for delta, r in curves.items():
        ax.loglog(gamma_tau, r, label=f"delta = {delta:g}")
    ax.set_xlabel(r"gamma * tau")
    ax.set_ylabel("R")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    _finish(fig, path)


def render_trajectory(times, xs, path, title=""):
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.plot(times, xs, lw=0.4, color="tab:blue")
    ax.set_xlabel("t")
    ax.set_ylabel("x(t)")
    if title:
        ax.set_title(title, fontsize=10)
    _finish(fig, path)


def render_pdfs(pdfs, labels, path, logscale=True):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for pdf, lab in zip(pdfs, labels):
        ax.plot(pdf.x, pdf.values, label=lab)
    if logscale:
        ax.set_yscale("log")
        peak = max(float(np.max(p.values)) for p in pdfs)
        ax.set_ylim(peak * 1e-10, peak * 2)
    ax.set_xlabel("x")
    ax.set_ylabel("P(x)")
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_histogram(stats, path, curve=None, label="histogram"):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(stats.bin_centers, stats.density, "o", ms=3, mfc="none",
            label=label)
    if curve is not None:
        ax.plot(curve.x, curve.values, "-", color="black",
                label="equilibrium")
    ax.set_yscale("log")
    dens = stats.density[stats.density > 0]
    if dens.size:
        ax.set_ylim(dens.min() / 3, dens.max() * 3)
    ax.set_xlabel("x")
    ax.set_ylabel("P(x)")
    ax.legend(fontsize=8)
    _finish(fig, path)


def render_evolution(times, snapshots, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    cmap = plt.get_cmap("viridis")
    for i, (t, pdf) in enumerate(zip(times, snapshots)):
        ax.plot(pdf.x, pdf.values, color=cmap(i / max(len(times) - 1, 1)),
                label=f"t = {t:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("P(x;t)")
    ax.legend(fontsize=7)
    _finish(fig, path)
