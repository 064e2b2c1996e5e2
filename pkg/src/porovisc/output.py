"""CSV and JSON outputs of a run; every float is written with 17 significant digits."""

from __future__ import annotations

import csv
import json
import os
import platform

import numpy as np

SNAPSHOT_CAP = 256


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def snapshot_steps(n_steps, every=None):
    """Steps with stored snapshots: all for N <= 256, else 256 evenly spaced plus the endpoints."""
    if every:
        picked = set(range(0, n_steps + 1, int(every)))
    elif n_steps <= SNAPSHOT_CAP:
        picked = set(range(n_steps + 1))
    else:
        picked = set(np.round(np.linspace(0, n_steps, SNAPSHOT_CAP)).astype(int).tolist())
    return picked | {0, n_steps}


def versions():
    import scipy

    from . import __version__

    return {"porovisc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class _Csv:
    def __init__(self, path):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh)
        self.header = None

    def row(self, row):
        if self.header is None:
            self.header = list(row)
            self.writer.writerow(self.header)
        self.writer.writerow([fmt(row.get(k, float("nan"))) for k in self.header])
        self.fh.flush()

    def close(self):
        self.fh.close()


class OutputWriter:
    """Writes steps.csv, diagnostics.csv, snapshots/ and run.json under ``directory``."""

    def __init__(self, directory, config, grid):
        self.directory = os.fspath(directory)
        os.makedirs(os.path.join(self.directory, "snapshots"), exist_ok=True)
        self.config = config
        self.grid = grid
        self.steps_csv = _Csv(os.path.join(self.directory, "steps.csv"))
        self.diag_csv = _Csv(os.path.join(self.directory, "diagnostics.csv"))
        self.snap_at = snapshot_steps(config.n_steps, config.snapshot_every)

    def wants_snapshot(self, k, n_steps):
        return k in self.snap_at

    def step(self, step_row, diag_row):
        self.steps_csv.row(step_row)
        self.diag_csv.row(diag_row)

    def snapshot(self, k, t, chi, c, mu):
        g = self.grid
        J = g.grad @ chi
        base = os.path.join(self.directory, "snapshots")
        with open(os.path.join(base, f"nodes_{k:06d}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "chi"])
            for x, v in zip(g.nodes, chi):
                w.writerow([fmt(t), fmt(x), fmt(v)])
        with open(os.path.join(base, f"cells_{k:06d}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "c", "mu", "det_grad_chi", "c_spatial"])
            for row in zip(g.centers, c, mu, J, c / J):
                w.writerow([fmt(t)] + [fmt(v) for v in row])

    def finish(self, result):
        self.steps_csv.close()
        self.diag_csv.close()
        traj, ledger = result.trajectory, result.ledger
        summary = {
            "steps_completed": traj.n_steps,
            "initial_energy": ledger.energy[0],
            "final_energy": ledger.energy[-1],
            "min_edi_slack": min(ledger.slack[1:]) if len(ledger.slack) > 1 else 0.0,
            "edi_tolerance": ledger.tolerance,
            "mass_balance_error": ledger.mass_balance_error(ledger.n_steps),
            "min_concentration": float(min(np.min(c) for c in traj.c)),
        }
        if traj.n_steps:
            summary["interpolant_gaps"] = traj.interpolant_gaps()
        doc = {"config": self.config.to_dict(), "versions": versions(), "status": result.status.to_dict(),
               "summary": summary}
        write_json(os.path.join(self.directory, "run.json"), doc)


def _default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(type(x))


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        # shortest round-trip reprs: at most 17 significant digits
        json.dump(doc, fh, indent=2, default=_default, allow_nan=True)
        fh.write("\n")
