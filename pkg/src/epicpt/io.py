"""CSV and JSON serialization for the CLI.

CSV files start with ``# key=value`` comment lines (seed, grid, run settings)
followed by a header row; readers skip comment lines, so the files stay
consumable by standard tooling.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mcmc import PosteriorSamples
from .sir import IncidenceSeries, ObservationGrid

SCHEMA_VERSION = 1


def _fmt_grid(times: np.ndarray) -> str:
    return ",".join(repr(float(t)) for t in times)


def write_incidence_csv(path, grid: ObservationGrid, series: IncidenceSeries,
                        seed) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["t_start", "t_end", "count"])
        for k, count in enumerate(series.counts):
            writer.writerow([repr(float(grid.times[k])),
                             repr(float(grid.times[k + 1])), int(count)])


def read_incidence_csv(path) -> tuple[ObservationGrid, IncidenceSeries]:
    times: list[float] = []
    counts: list[int] = []
    with open(path) as fh:
        lineno = 0
        header_seen = False
        for raw in fh:
            lineno += 1
            if raw.startswith("#") or not raw.strip():
                continue
            row = next(csv.reader([raw]))
            if not header_seen:
                if [c.strip() for c in row] != ["t_start", "t_end", "count"]:
                    raise ConfigError(
                        f"{path}:{lineno}: expected header 't_start,t_end,count'")
                header_seen = True
                continue
            try:
                t_start, t_end, count = float(row[0]), float(row[1]), int(row[2])
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}:{lineno}: malformed row: {exc}") from exc
            if not times:
                times.append(t_start)
            elif t_start != times[-1]:
                raise ConfigError(f"{path}:{lineno}: intervals are not contiguous")
            times.append(t_end)
            counts.append(count)
    if not counts:
        raise ConfigError(f"{path}: no data rows found")
    try:
        return ObservationGrid(np.array(times)), IncidenceSeries(np.array(counts))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def samples_columns(n_intervals: int) -> list[str]:
    cols = ["iteration", "chain"]
    cols += [f"beta_interval_{k}" for k in range(1, n_intervals + 1)]
    cols += [f"delta_{k}" for k in range(1, n_intervals)]
    cols += ["pi01", "pi11", "gamma", "log_likelihood"]
    return cols


def write_samples_csv(path, chains: list[PosteriorSamples], seed) -> None:
    first = chains[0]
    k = first.n_intervals
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(f"# grid={_fmt_grid(first.grid_times)}\n")
        fh.write(f"# iterations={first.iterations}\n")
        fh.write(f"# burn_in={first.burn_in}\n")
        fh.write(f"# thin={first.thin}\n")
        fh.write(f"# mode={first.mode}\n")
        fh.write("# wall_clock_s="
                 + ",".join(repr(c.wall_clock_s) for c in chains) + "\n")
        writer = csv.writer(fh)
        writer.writerow(samples_columns(k))
        for chain in chains:
            for i in range(chain.n_draws):
                row = [chain.burn_in + i * chain.thin, chain.chain_id]
                row += [repr(float(v)) for v in chain.beta_interval[i]]
                row += [int(v) for v in chain.delta[i]]
                row += [repr(float(chain.pi01[i])), repr(float(chain.pi11[i])),
                        repr(float(chain.gamma[i])), repr(float(chain.log_lik[i]))]
                writer.writerow(row)


def read_samples_csv(path) -> list[PosteriorSamples]:
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    header: list[str] | None = None
    with open(path) as fh:
        lineno = 0
        for raw in fh:
            lineno += 1
            if raw.startswith("#"):
                key, _, value = raw[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if not raw.strip():
                continue
            row = next(csv.reader([raw]))
            if header is None:
                header = [c.strip() for c in row]
                continue
            rows.append(row)
    if header is None or not rows:
        raise ConfigError(f"{path}: no sample rows found")
    if "grid" not in meta:
        raise ConfigError(f"{path}: missing '# grid=' metadata line")
    grid_times = np.array([float(v) for v in meta["grid"].split(",")])
    k = grid_times.size - 1
    if header != samples_columns(k):
        raise ConfigError(f"{path}: unexpected column schema")

    data = np.array(rows, dtype=float)
    wall = [float(v) for v in meta.get("wall_clock_s", "0").split(",")]
    out = []
    for cid in np.unique(data[:, 1]).astype(int):
        sub = data[data[:, 1] == cid]
        out.append(PosteriorSamples(
            grid_times=grid_times,
            delta=sub[:, 2 + k:2 + k + (k - 1)].astype(np.int8),
            beta_interval=sub[:, 2:2 + k],
            beta_segments=[],
            pi01=sub[:, -4], pi11=sub[:, -3],
            gamma=sub[:, -2], log_lik=sub[:, -1],
            acceptance={},
            iterations=int(meta.get("iterations", len(sub))),
            burn_in=int(meta.get("burn_in", 0)),
            thin=int(meta.get("thin", 1)),
            seed=int(meta.get("seed", 0)),
            mode=meta.get("mode", "learn"),
            chain_id=int(cid),
            wall_clock_s=wall[cid] if cid < len(wall) else 0.0))
    return out


def write_json(path, payload: dict, seed) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "seed": seed, **payload}
    Path(path).write_text(json.dumps(payload, indent=2, default=_jsonify) + "\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")
