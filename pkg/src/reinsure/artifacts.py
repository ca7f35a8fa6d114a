"""Deterministic CSV and JSON emission for all batch outputs.

Floats are written with 17 significant digits so artifacts are
byte-identical across runs and unambiguous for downstream tolerance
checks.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def write_events_csv(path: str, claim_paths) -> None:
    """(path_id, event_index, time, state, claim_size) rows."""

    def rows():
        for pid, cp in enumerate(claim_paths):
            for j, (t, z) in enumerate(zip(cp.times, cp.sizes)):
                yield (pid, j, t, cp.chain.state_at(float(t)), z)

    write_csv(path, ["path_id", "event_index", "time", "state", "claim_size"], rows())


def write_wealth_csv(path: str, samples) -> None:
    """(path_id, time, wealth) rows."""

    def rows():
        for pid, ws in enumerate(samples):
            for t, x in zip(ws.times, ws.wealth):
                yield (pid, t, x)

    write_csv(path, ["path_id", "time", "wealth"], rows())


def write_filter_csv(path: str, traj) -> None:
    """(time, pi_1..pi_M, is_jump) rows."""
    m = traj.pi.shape[1]
    header = ["time"] + [f"pi_{i + 1}" for i in range(m)] + ["is_jump"]
    rows = (
        (traj.times[k], *traj.pi[k], bool(traj.is_jump[k])) for k in range(traj.times.shape[0])
    )
    write_csv(path, header, rows)


def write_tables_csv(path: str, value_table, policy_table) -> None:
    """(t, pi_1..pi_M, v, u_star, tag) rows over the full grid."""
    m = value_table.grid.points.shape[1]
    header = ["t"] + [f"pi_{i + 1}" for i in range(m)] + ["v", "u_star", "tag"]

    def rows():
        for k, t in enumerate(value_table.times):
            for j, p in enumerate(value_table.grid.points):
                yield (t, *p, value_table.values[k, j], policy_table.u[k, j],
                       int(policy_table.tags[k, j]))

    write_csv(path, header, rows())


def write_sweep_csv(path: str, sweep) -> None:
    """theta-sweep retentions, one column per loading."""
    m = sweep.lattice.shape[1]
    header = (
        ["t"] + [f"pi_{i + 1}" for i in range(m)] + [f"u_theta_{fmt(th)}" for th in sweep.thetas]
    )

    def rows():
        for k, t in enumerate(sweep.times):
            for j, p in enumerate(sweep.lattice):
                yield (t, *p, *[sweep.u[s, k, j] for s in range(len(sweep.thetas))])

    write_csv(path, header, rows())


def write_comparison_csv(path: str, report) -> None:
    """(t, pi_1..pi_M, u_partial, u_full, jump_margin) rows."""
    m = report.lattice.shape[1]
    header = ["t"] + [f"pi_{i + 1}" for i in range(m)] + ["u_partial", "u_full"]

    def rows():
        for k, t in enumerate(report.times):
            for j, p in enumerate(report.lattice):
                yield (t, *p, report.u_partial[k, j], report.u_full[k])

    write_csv(path, header, rows())
