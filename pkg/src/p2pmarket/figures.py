"""Matplotlib rendering of pipeline reports and consensus traces.

The CLI report path saves these figures next to the JSON/CSV outputs:
negotiation convergence, masked-state convergence, the implied price per
agent per round, and the per-prosumer trade bars.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .graph import Role

_SELLER_COLOR = "tab:orange"
_BUYER_COLOR = "tab:blue"


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_price_negotiation(trace, path: Path) -> Path:
    """Per-agent lower/upper band endpoints against the round index."""
    states = trace.states
    rounds = np.arange(states.shape[0])
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in range(states.shape[1]):
        ax.plot(rounds, states[:, i, 0], color=_BUYER_COLOR, lw=0.6, alpha=0.5)
        ax.plot(rounds, states[:, i, 1], color=_SELLER_COLOR, lw=0.6, alpha=0.5)
    ax.plot([], [], color=_BUYER_COLOR, label="lower bounds")
    ax.plot([], [], color=_SELLER_COLOR, label="upper bounds")
    ax.set_xlabel("round")
    ax.set_ylabel("price")
    ax.set_title("Negotiation of the common price range")
    ax.legend()
    return _save(fig, path)


def plot_masked_states(trace, path: Path) -> Path:
    """Both components of every agent's state during the masked run."""
    states = trace.states
    rounds = np.arange(states.shape[0])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    labels = ("weighted intercepts", "inverse curvatures")
    for c, (ax, label) in enumerate(zip(axes, labels)):
        for i in range(states.shape[1]):
            ax.plot(rounds, states[:, i, c], lw=0.6, alpha=0.6)
        ax.set_xlabel("round")
        ax.set_title(label)
    axes[0].set_ylabel("state value")
    fig.suptitle("Masked consensus of agent states")
    return _save(fig, path)


def plot_price_convergence(trace, lambda_star: float, path: Path) -> Path:
    """Each agent's implied price (component ratio) per round."""
    states = trace.states
    rounds = np.arange(states.shape[0])
    fig, ax = plt.subplots(figsize=(7, 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = states[:, :, 0] / states[:, :, 1]
    for i in range(states.shape[1]):
        ax.plot(rounds, ratio[:, i], lw=0.6, alpha=0.6)
    ax.axhline(lambda_star, color="k", ls="--", lw=1, label=f"clearing price {lambda_star:.2f}")
    ax.set_xlabel("round")
    ax.set_ylabel("implied price")
    ax.set_title("Masked negotiation of the clearing price")
    ax.legend()
    return _save(fig, path)


def plot_trades(report, path: Path, compare=None) -> Path:
    """Per-prosumer total trade bars, colored by role.

    ``compare`` overlays a second trade map (amplification runs).
    """
    prosumers = sorted(report.prosumers, key=lambda p: p.id)
    ids = [p.id for p in prosumers]
    trades = [p.trade for p in prosumers]
    colors = [_SELLER_COLOR if p.role is Role.SELLER else _BUYER_COLOR for p in prosumers]
    fig, ax = plt.subplots(figsize=(9, 4))
    if compare is None:
        ax.bar(ids, trades, color=colors)
    else:
        ax.bar(ids, [compare[p.id] for p in prosumers], width=0.8, color=colors, alpha=0.35,
               label="amplified")
        ax.bar(ids, trades, width=0.45, color=colors, label="base")
        ax.legend()
    for p in prosumers:
        bound = p.bound_kw
        ax.plot([p.id - 0.4, p.id + 0.4], [bound, bound], color="k", lw=0.8)
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xlabel("prosumer id")
    ax.set_ylabel("total trade (kW)")
    ax.set_title("Total trading power (limits as black ticks)")
    return _save(fig, path)


def render_report_figures(report, outdir: str | Path) -> list[Path]:
    """Render the standard figure set for one pipeline report."""
    outdir = Path(outdir)
    written = []
    if report.step1_trace is not None:
        written.append(plot_price_negotiation(report.step1_trace, outdir / "fig_price_negotiation.png"))
    if report.step3_trace is not None:
        written.append(plot_masked_states(report.step3_trace, outdir / "fig_masked_states.png"))
        written.append(
            plot_price_convergence(report.step3_trace, report.lambda_star, outdir / "fig_masked_price.png")
        )
    written.append(plot_trades(report, outdir / "fig_trades.png"))
    return written


def plot_amplification(report, amp, path: Path) -> Path:
    """Base vs amplified trades for an amplification experiment."""
    return plot_trades(report, path, compare=amp.trades_after)
