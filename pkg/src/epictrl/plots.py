"""SVG figure emission. Every plotted series is also written to CSV by the
CLI with full precision; the figures are derived artifacts, never the source
of truth. SVG metadata dates are suppressed for reproducible bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


_SAVE = dict(format="svg", metadata={"Date": None})


def _region_labels(K):
    return [f"city {i + 1}" for i in range(K)]


def plot_states(trajectory, scenario, path):
    t = trajectory.times
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2), constrained_layout=True)
    labels = _region_labels(scenario.K)
    for i in range(scenario.K):
        axes[0].plot(t, trajectory.s[:, i], label=labels[i])
        axes[1].plot(t, trajectory.x[:, 0, i])
    axes[2].plot(t, trajectory.V, label="V")
    axes[2].plot(t, scenario.shipments.smoothed(t), "--", label=r"$D_\epsilon$")
    axes[0].set_ylabel("susceptible proportion")
    axes[1].set_ylabel("infectious proportion")
    axes[2].set_ylabel("cumulative vaccinations")
    for ax in axes:
        ax.set_xlabel("time (days)")
    axes[0].legend(fontsize=7)
    axes[2].legend(fontsize=7)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_controls(trajectory, scenario, path):
    """Per-region realized vaccination rates u_i s_i (doses/day)."""
    t = trajectory.times
    us = trajectory.u_realized * trajectory.s
    K = scenario.K
    fig, axes = plt.subplots(K, 1, figsize=(6, 1.3 * K), sharex=True,
                             constrained_layout=True)
    axes = [axes] if K == 1 else list(axes)
    for i, ax in enumerate(axes):
        ax.step(t, us[:, i], where="post", lw=1)
        ax.axhline(scenario.v_max[i], color="gray", ls=":", lw=0.8)
        ax.set_ylabel(f"$u_{{{i + 1}}} s^{{({i + 1})}}$", fontsize=8)
        for w in range(1, scenario.n_weeks):
            ax.axvline(7 * w, color="gray", lw=0.5, alpha=0.5)
    axes[-1].set_xlabel("time (days)")
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_infectious(trajectory, scenario, path, baseline=None):
    t = trajectory.times
    fig, ax = plt.subplots(figsize=(6, 3.2), constrained_layout=True)
    total = trajectory.infectious() @ scenario.n
    ax.plot(t, total, label="optimized")
    if baseline is not None:
        ax.plot(t, baseline.infectious() @ scenario.n, "--", label="no vaccination")
    ax.set_xlabel("time (days)")
    ax.set_ylabel("total infectious proportion")
    ax.legend(fontsize=8)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_adjoint(adjoint, scenario, path):
    t = adjoint.times
    fig, ax = plt.subplots(figsize=(6, 3.2), constrained_layout=True)
    for i in range(scenario.K):
        ax.plot(t, adjoint.psi_s[:, i], label=rf"$\psi^s_{{{i + 1}}}$")
    ax.set_xlabel("time (days)")
    ax.set_ylabel("susceptible costates")
    ax.legend(fontsize=8, ncol=2)
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_compare(report, path_prefix):
    """Four panels: effort, total infectious, cumulative doses, running
    cost difference; one SVG per panel, mirroring the comparison layout."""
    t = report["times"]
    panels = [
        ("effort", "vaccination effort (doses/day)",
         [("linear", report["effort_linear"]), ("quadratic", report["effort_quadratic"])]),
        ("infectious", "total infectious proportion",
         [("linear", report["infectious_linear"]), ("quadratic", report["infectious_quadratic"])]),
        ("cumulative", "cumulative vaccinations",
         [("linear", report["cumulative_linear"]), ("quadratic", report["cumulative_quadratic"])]),
        ("difference", r"running $J_{quad} - J_{lin}$",
         [("difference", report["running_difference"])]),
    ]
    paths = []
    for key, ylabel, series in panels:
        fig, ax = plt.subplots(figsize=(5, 3), constrained_layout=True)
        for label, y in series:
            ax.plot(t, y, label=label)
        ax.set_xlabel("time (days)")
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(fontsize=8)
        p = f"{path_prefix}_{key}.svg"
        fig.savefig(p, **_SAVE)
        plt.close(fig)
        paths.append(p)
    return paths
