"""Static plots: scaling curves from benchmark CSVs and trajectory overlays
from episode traces."""

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import ParseError


def _read_csv(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if not rows:
        raise ParseError(f"{path}: empty CSV")
    return rows


def plot_scaling(csv_path, out_path) -> None:
    """Log-log mean solve time vs obstacle count, one curve per method."""
    rows = _read_csv(csv_path)
    required = {"n_points", "method", "objective", "time_s"}
    if not required.issubset(rows[0]):
        raise ParseError(f"{csv_path}: not a scaling CSV (missing {required})")
    series = {}
    for row in rows:
        key = (row["method"], row["objective"])
        series.setdefault(key, {}).setdefault(int(row["n_points"]), []).append(
            float(row["time_s"])
        )
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (method, objective), by_count in sorted(series.items()):
        counts = sorted(by_count)
        means = [np.mean(by_count[c]) for c in counts]
        name = method if objective in ("-", "") else f"{method} ({objective})"
        ax.plot(counts, means, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("obstacle points")
    ax.set_ylabel("mean solve time [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def _parse_kv(parts):
    out = {}
    for p in parts:
        if "=" in p:
            k, v = p.split("=", 1)
            out[k] = v
    return out


def parse_trace(path):
    """Trace records grouped by type: states, planes, reach, targets."""
    states, planes, reaches, targets = [], [], [], []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if not lines:
        raise ParseError(f"{path}: empty trace")
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        kind = parts[0]
        kv = _parse_kv(parts[1:])
        if kind == "state":
            states.append(
                (
                    float(kv["t"]), int(kv["agent"]),
                    float(kv["x"]), float(kv["y"]),
                    float(kv["psi"]), float(kv["v"]), int(kv["alive"]),
                )
            )
        elif kind == "planes":
            payload = parts[-1]
            items = [
                tuple(float(x) for x in chunk.split(","))
                for chunk in payload.split(";")
            ]
            planes.append((float(kv["t"]), int(kv["agent"]), items))
        elif kind == "reach":
            payload = parts[-1]
            items = [
                tuple(float(x) for x in chunk.split(","))
                for chunk in payload.split(";")
            ]
            reaches.append((float(kv["t"]), int(kv["agent"]), items))
        elif kind == "target":
            x, y = parts[-1].split(",")
            targets.append((float(kv["t"]), int(kv["agent"]), float(x), float(y)))
    if not states:
        raise ParseError(f"{path}: no state records")
    return states, planes, reaches, targets


def plot_trace(trace_path, out_path, scenario=None, timestamp=None) -> None:
    """Trajectory overlay; at ``timestamp`` also draws the safe-region
    planes, reach boxes and planner target recorded nearest to it."""
    states, planes, reaches, targets = parse_trace(trace_path)

    fig, ax = plt.subplots(figsize=(8, 8))
    if scenario is not None:
        for boundary in (scenario.track.inner_boundary, scenario.track.outer_boundary):
            ring = np.vstack([boundary, boundary[:1]])
            ax.plot(ring[:, 0], ring[:, 1], color="steelblue", lw=1.0)
        for obs in scenario.static_obstacles:
            ring = np.vstack([obs.polygon, obs.polygon[:1]])
            ax.fill(ring[:, 0], ring[:, 1], color="gray", alpha=0.6)

    agents = sorted({s[1] for s in states})
    cmap = plt.get_cmap("tab10")
    for i in agents:
        tr = np.array([(s[2], s[3]) for s in states if s[1] == i])
        ax.plot(tr[:, 0], tr[:, 1], color=cmap(i % 10), lw=1.2, label=f"agent {i}")

    if timestamp is not None:
        times = sorted({s[0] for s in states})
        t_sel = min(times, key=lambda t: abs(t - timestamp))
        for t, agent, items in planes:
            if abs(t - t_sel) > 1e-9:
                continue
            pos = next(
                (s[2], s[3]) for s in states if s[0] == t and s[1] == agent
            )
            for ax_, ay_, b in items:
                a = np.array([ax_, ay_])
                tang = np.array([-ay_, ax_])
                foot = b * a
                lam = float(tang @ (np.array(pos) - foot))
                c = foot + lam * tang
                seg = np.array([c - 3.0 * tang, c + 3.0 * tang])
                ax.plot(seg[:, 0], seg[:, 1], color="black", lw=1.0)
        for t, agent, items in reaches:
            if abs(t - t_sel) > 1e-9:
                continue
            for lx, ly, hx, hy in items:
                ax.add_patch(
                    plt.Rectangle(
                        (lx, ly), hx - lx, hy - ly,
                        fill=False, edgecolor="green", lw=0.7, alpha=0.8,
                    )
                )
        for t, agent, x, y in targets:
            if abs(t - t_sel) <= 1e-9:
                ax.plot([x], [y], marker="o", color="red", ms=6)
        for s in states:
            if abs(s[0] - t_sel) <= 1e-9:
                ax.plot([s[2]], [s[3]], marker="s",
                        color=cmap(s[1] % 10), ms=6)

    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot(input_path, kind: str, out_path, scenario=None, timestamp=None) -> None:
    """Dispatch on plot kind: 'scaling' (CSV) or 'trace' (episode trace)."""
    if kind == "scaling":
        plot_scaling(input_path, out_path)
    elif kind == "trace":
        plot_trace(input_path, out_path, scenario=scenario, timestamp=timestamp)
    else:
        raise ParseError(f"unknown plot kind {kind!r}; have scaling, trace")
