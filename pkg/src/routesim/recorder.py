"""Episode records, KPI summaries, and deterministic chart rendering.

The recorder is an append-only store fed by the environment at the end of
every episode. It flushes to two delimited files (``episodes.csv`` with one
row per agent per episode, ``flows.csv`` with one row per edge per episode),
reduces to per-episode KPIs, and renders the KPI series as SVG line charts.

Chart rendering is pinned to reproducible output: the Agg backend, a fixed
``svg.hashsalt``, no embedded creation date, and text kept as text elements
so downstream tooling can read axis labels.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean

EPISODES_HEADER = (
    "episode",
    "phase",
    "id",
    "kind",
    "origin",
    "dest",
    "route_index",
    "departure",
    "travel_time",
    "reward",
)
FLOWS_HEADER = ("episode", "edge", "flow")
CHART_NAMES = ("travel_times.svg", "rewards.svg", "route_fractions.svg")
_SVG_HASHSALT = "routesim"


@dataclass(frozen=True)
class EpisodeRow:
    episode: int
    phase: str
    agent_id: int
    kind: str
    origin: str
    dest: str
    route_index: int
    departure: int
    travel_time: float
    reward: float | None


@dataclass(frozen=True)
class EpisodeKpi:
    """Per-episode key performance indicators.

    Group means are None when the group is empty that episode; the
    human-to-vehicle travel time ratio is None unless both groups exist.
    Route fractions are keyed ``"origin->dest"`` and sum to 1 per O-D pair.
    """

    episode: int
    phase: str
    mean_tt_human: float | None
    mean_tt_av: float | None
    mean_tt_all: float
    mean_reward_av: float | None
    tt_ratio: float | None
    route_fractions: dict[str, list[float]]


@dataclass(frozen=True)
class KpiSummary:
    episodes: list[EpisodeKpi]


class Recorder:
    """Append-only sink for episode rows; one recorder per environment."""

    def __init__(self):
        self.rows: list[EpisodeRow] = []
        self.flows: list[tuple[int, str, int]] = []

    def record(self, rows, flow_rows) -> None:
        self.rows.extend(rows)
        self.flows.extend(flow_rows)

    def flush(self, out_dir) -> tuple[Path, Path]:
        """Write ``episodes.csv`` and ``flows.csv`` under ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        episodes_path = out_dir / "episodes.csv"
        with episodes_path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(EPISODES_HEADER)
            for row in self.rows:
                writer.writerow(
                    [
                        row.episode,
                        row.phase,
                        row.agent_id,
                        row.kind,
                        row.origin,
                        row.dest,
                        row.route_index,
                        row.departure,
                        repr(row.travel_time),
                        "" if row.reward is None else repr(row.reward),
                    ]
                )
        flows_path = out_dir / "flows.csv"
        with flows_path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(FLOWS_HEADER)
            for episode, edge, flow in self.flows:
                writer.writerow([episode, edge, flow])
        return episodes_path, flows_path

    @classmethod
    def load(cls, episodes_path, flows_path=None) -> "Recorder":
        """Rebuild a recorder from flushed CSV files (exact round trip)."""
        recorder = cls()
        episodes_path = Path(episodes_path)
        with episodes_path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != EPISODES_HEADER:
                raise ValueError(
                    f"{episodes_path}: expected header {','.join(EPISODES_HEADER)!r}"
                )
            for row in reader:
                recorder.rows.append(
                    EpisodeRow(
                        episode=int(row["episode"]),
                        phase=row["phase"],
                        agent_id=int(row["id"]),
                        kind=row["kind"],
                        origin=row["origin"],
                        dest=row["dest"],
                        route_index=int(row["route_index"]),
                        departure=int(row["departure"]),
                        travel_time=float(row["travel_time"]),
                        reward=float(row["reward"]) if row["reward"] else None,
                    )
                )
        if flows_path is not None:
            flows_path = Path(flows_path)
            with flows_path.open(newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle)
                if tuple(reader.fieldnames or ()) != FLOWS_HEADER:
                    raise ValueError(f"{flows_path}: expected header {','.join(FLOWS_HEADER)!r}")
                for row in reader:
                    recorder.flows.append((int(row["episode"]), row["edge"], int(row["flow"])))
        return recorder

    def summarize(self) -> KpiSummary:
        """Reduce the store to per-episode KPIs; a pure function of the rows."""
        by_episode: dict[int, list[EpisodeRow]] = {}
        route_counts: dict[str, int] = {}
        for row in self.rows:
            by_episode.setdefault(row.episode, []).append(row)
            od = f"{row.origin}->{row.dest}"
            route_counts[od] = max(route_counts.get(od, 0), row.route_index + 1)
        episodes = []
        for episode in sorted(by_episode):
            rows = by_episode[episode]
            human_tt = [r.travel_time for r in rows if r.kind == "human"]
            av_tt = [r.travel_time for r in rows if r.kind == "av"]
            rewards = [r.reward for r in rows if r.reward is not None]
            mean_human = fmean(human_tt) if human_tt else None
            mean_av = fmean(av_tt) if av_tt else None
            ratio = None
            if mean_human is not None and mean_av is not None and mean_av != 0:
                ratio = mean_human / mean_av
            fractions: dict[str, list[float]] = {}
            for od in sorted(route_counts):
                od_rows = [r for r in rows if f"{r.origin}->{r.dest}" == od]
                if not od_rows:
                    continue
                counts = [0] * route_counts[od]
                for r in od_rows:
                    counts[r.route_index] += 1
                fractions[od] = [c / len(od_rows) for c in counts]
            episodes.append(
                EpisodeKpi(
                    episode=episode,
                    phase=rows[0].phase,
                    mean_tt_human=mean_human,
                    mean_tt_av=mean_av,
                    mean_tt_all=fmean(r.travel_time for r in rows),
                    mean_reward_av=fmean(rewards) if rewards else None,
                    tt_ratio=ratio,
                    route_fractions=fractions,
                )
            )
        return KpiSummary(episodes)


def _sig6(value):
    """Clamp a float to 6 significant decimal digits for stable JSON."""
    if value is None:
        return None
    return float(f"{value:.6g}")


def write_kpis_json(summary: KpiSummary, path) -> Path:
    """Serialize the KPI summary as UTF-8 JSON with sorted keys."""
    path = Path(path)
    payload = {
        "episodes": [
            {
                "episode": kpi.episode,
                "phase": kpi.phase,
                "mean_tt_human": _sig6(kpi.mean_tt_human),
                "mean_tt_av": _sig6(kpi.mean_tt_av),
                "mean_tt_all": _sig6(kpi.mean_tt_all),
                "mean_reward_av": _sig6(kpi.mean_reward_av),
                "tt_ratio": _sig6(kpi.tt_ratio),
                "route_fractions": {
                    od: [_sig6(f) for f in fractions]
                    for od, fractions in kpi.route_fractions.items()
                },
            }
            for kpi in summary.episodes
        ]
    }
    with path.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")
    return path


def _axis_ticks(episodes: list[int]) -> list[int]:
    lo, hi = min(episodes), max(episodes)
    if lo == hi:
        return [lo]
    span = [lo + (hi - lo) * i / 5 for i in range(6)]
    return sorted({int(round(v)) for v in span})


def _finish_axis(ax, episodes: list[int], ylabel: str) -> None:
    ax.set_xlabel("episode")
    ax.set_ylabel(ylabel)
    if min(episodes) != max(episodes):
        ax.set_xlim(min(episodes), max(episodes))
    ax.set_xticks(_axis_ticks(episodes))
    ax.grid(True, alpha=0.3)


def render_charts(summary: KpiSummary, out_dir) -> list[Path]:
    """Render three SVG line charts of the KPI series.

    travel_times.svg : mean travel time per group vs episode
    rewards.svg : mean vehicle-agent reward vs episode
    route_fractions.svg : per-route choice fractions vs episode

    Output bytes depend only on the summary contents and the installed
    matplotlib version, so identical runs produce identical files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not summary.episodes:
        raise ValueError("cannot render charts for an empty summary")
    episodes = [kpi.episode for kpi in summary.episodes]
    rc = {"svg.hashsalt": _SVG_HASHSALT, "svg.fonttype": "none"}
    written = []
    with plt.rc_context(rc):
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        series = [
            ("human", [kpi.mean_tt_human for kpi in summary.episodes]),
            ("av", [kpi.mean_tt_av for kpi in summary.episodes]),
            ("all", [kpi.mean_tt_all for kpi in summary.episodes]),
        ]
        for label, values in series:
            points = [(e, v) for e, v in zip(episodes, values) if v is not None]
            if points:
                ax.plot(
                    [p[0] for p in points],
                    [p[1] for p in points],
                    marker="o",
                    markersize=2.5,
                    linewidth=1.2,
                    label=label,
                )
        _finish_axis(ax, episodes, "mean travel time (s)")
        ax.legend(loc="upper right")
        path = out_dir / CHART_NAMES[0]
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        points = [
            (e, kpi.mean_reward_av)
            for e, kpi in zip(episodes, summary.episodes)
            if kpi.mean_reward_av is not None
        ]
        if points:
            ax.plot(
                [p[0] for p in points],
                [p[1] for p in points],
                marker="o",
                markersize=2.5,
                linewidth=1.2,
                color="tab:purple",
            )
        _finish_axis(ax, episodes, "mean vehicle-agent reward")
        path = out_dir / CHART_NAMES[1]
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        ods = sorted({od for kpi in summary.episodes for od in kpi.route_fractions})
        for od in ods:
            n_routes = max(
                len(kpi.route_fractions.get(od, [])) for kpi in summary.episodes
            )
            for index in range(n_routes):
                points = []
                for e, kpi in zip(episodes, summary.episodes):
                    fractions = kpi.route_fractions.get(od)
                    if fractions is not None and index < len(fractions):
                        points.append((e, fractions[index]))
                if points:
                    ax.plot(
                        [p[0] for p in points],
                        [p[1] for p in points],
                        marker="o",
                        markersize=2.5,
                        linewidth=1.2,
                        label=f"{od} route {index}",
                    )
        ax.set_ylim(-0.02, 1.02)
        _finish_axis(ax, episodes, "route choice fraction")
        if ods:
            ax.legend(loc="upper right", fontsize=8)
        path = out_dir / CHART_NAMES[2]
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
