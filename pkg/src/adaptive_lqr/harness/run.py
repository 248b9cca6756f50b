"""Replicate orchestration and CSV emission."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..estimation import EpisodeSchedule
from ..geometry import construct_p0, subspace_side_information
from ..policies import (ce_policy, default_perturbation_rule, gce_policy, initial_estimate,
                        optimal_policy, rce_policy, ts_policy)
from ..regret import compute_regret, decompose, log_grid
from ..sideinfo import SideInformation
from ..system import NoiseModel, Trajectory, draw_noise, simulate_coupled
from .config import ExperimentConfig, replicate_seed, stream_seeds

log = logging.getLogger(__name__)


def prefix(traj: Trajectory, n: int) -> Trajectory:
    """The first ``n`` steps of ``traj``."""
    return Trajectory(states=traj.states[:n + 1], inputs=traj.inputs[:n], noises=traj.noises[:n],
                      costs=traj.costs[:n], gains=None if traj.gains is None else traj.gains[:n])


def side_information(cfg: ExperimentConfig, theta0, cost) -> SideInformation:
    block = cfg.policy.get("side", {"kind": "exact_support"})
    kind = block["kind"]
    if kind == "exact_support":
        return SideInformation.support(theta0.matrix != 0.0)
    if kind == "full":
        return SideInformation.full(theta0.p, theta0.q)
    if kind == "subspace":
        return subspace_side_information(theta0, cost)
    mask = block.get("mask")
    if mask is None:
        mask = yaml.safe_load(cfg.resolve(block["file"]).read_text())["mask"]
    return SideInformation.support(np.asarray(mask, dtype=bool))


def build_policy(cfg: ExperimentConfig, theta0, cost, seeds: dict):
    """The configured policy. ``theta0`` is used only to pick the starting
    estimate and the side information, never handed to the policy itself."""
    kind = cfg.policy["kind"]
    if kind == "optimal":
        return optimal_policy(theta0, cost)
    init = initial_estimate(theta0, cost, seed=seeds["init"], relative_scale=cfg.initial_scale)
    schedule = EpisodeSchedule(cfg.gamma)
    if kind == "ce":
        return ce_policy(schedule, init, cost)
    if kind == "rce":
        return rce_policy(schedule, float(cfg.policy.get("sigma0", 0.1)), init, cost,
                          seed=seeds["policy"])
    if kind == "ts":
        scale = float(cfg.policy.get("sigma0_scale", 1.0))
        return ts_policy(schedule, scale * np.eye(theta0.q), init, cost, seed=seeds["policy"])
    rule = default_perturbation_rule(float(cfg.policy.get("c_lambda", 0.0)))
    return gce_policy(schedule, side_information(cfg, theta0, cost), rule, init, cost,
                      seed=seeds["policy"])


def run_replicate(cfg: ExperimentConfig, index: int) -> dict:
    """Simulate one replicate and reduce it to grid-level series."""
    seed = replicate_seed(cfg.seed, index)
    seeds = stream_seeds(seed)
    out = {"index": index, "seed": seed, "error": None}
    try:
        theta0, cost = cfg.dynamics()
        model = NoiseModel(cfg.noise_covariance(), seed=seeds["noise"],
                           kind=cfg.noise.get("kind", "gaussian"))
        noise = draw_noise(model, cfg.horizon)
        policy = build_policy(cfg, theta0, cost, seeds)
        x0 = None if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
        traj, opt = simulate_coupled(theta0, cost, policy, optimal_policy(theta0, cost), noise, x0)
        if traj.diverged or opt.diverged:
            n = min(traj.horizon, opt.horizon)
            traj, opt = prefix(traj, n), prefix(opt, n)
            out["diverged"] = True
        else:
            out["diverged"] = False
        ledger = compute_regret(traj, opt, theta0, cost)
        grid = log_grid(traj.horizon, cfg.points_per_decade)
        out["grid"] = grid
        out["regret"] = ledger.regret[grid - 1]
        out["chi"] = ledger.chi[grid - 1]
        out["rho"] = ledger.rho[grid - 1]
        out["diagnostics"] = dict(traj.meta)
        if hasattr(policy, "estimate_at"):
            ests = [policy.estimate_at(int(n)) for n in grid]
            out["estimation_error"] = np.array([np.linalg.norm(e - theta0.matrix, 2) for e in ests])
            if cfg.policy["kind"] == "gce":
                p0 = construct_p0(theta0, cost)
                out["p0_distance"] = np.array([np.linalg.norm(e - p0.project(e), 2) for e in ests])
        rows = []
        for n in cfg.decomposition_horizons:
            n = int(n)
            if n > traj.horizon:
                continue
            terms = decompose(prefix(traj, n), theta0, cost)
            r_n = float(ledger.regret[n - 1])
            rows.append((n, r_n, terms.z, terms.s, terms.t, terms.total,
                         abs(r_n - terms.total) / (1.0 + abs(r_n))))
        out["decomposition"] = rows
    except Exception as exc:  # recorded per replicate; the batch continues
        log.warning("replicate %d failed: %s", index, exc)
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class RunRecord:
    config_hash: str
    replicates: list
    summary: dict
    files: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [r for r in self.replicates if r["error"]]


def _f(v) -> str:
    return repr(float(v))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _normalizers(grid):
    nf = grid.astype(float)
    logn = np.log(nf)
    return nf, logn


def summarize(reps: list, grid_key: str = "grid") -> dict:
    """Median, min and max across replicates of every normalized series,
    on the grid shared by all successful replicates."""
    ok = [r for r in reps if not r["error"]]
    if not ok:
        return {}
    length = min(len(r[grid_key]) for r in ok)
    grid = ok[0][grid_key][:length]
    nf, logn = _normalizers(grid)
    series = {"normalized_regret": [r["regret"][:length] / (np.sqrt(nf) * logn) for r in ok],
              "regret_over_log2": [r["regret"][:length] / logn ** 2 for r in ok]}
    if all("estimation_error" in r for r in ok):
        series["normalized_error"] = [r["estimation_error"][:length] * nf ** 0.25 / np.sqrt(logn)
                                      for r in ok]
    if all("p0_distance" in r for r in ok):
        series["scaled_sq_error"] = [nf * r["p0_distance"][:length] ** 2 / logn for r in ok]
    out = {"n": grid}
    for name, vals in series.items():
        vals = np.array(vals)
        out[f"{name}_median"] = np.median(vals, axis=0)
        out[f"{name}_min"] = vals.min(axis=0)
        out[f"{name}_max"] = vals.max(axis=0)
    return out


PLOT_SCRIPT = '''"""Plot the normalized curves written next to this script (requires matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
rows = list(csv.DictReader(open(here / "summary.csv")))
n = [float(r["n"]) for r in rows]
panels = [c for c in ("normalized_regret", "normalized_error", "regret_over_log2", "scaled_sq_error")
          if rows and f"{c}_median" in rows[0]]
fig, axes = plt.subplots(len(panels), 1, figsize=(6, 3 * len(panels)), squeeze=False)
for ax, col in zip(axes[:, 0], panels):
    med = [float(r[f"{col}_median"]) for r in rows]
    lo = [float(r[f"{col}_min"]) for r in rows]
    hi = [float(r[f"{col}_max"]) for r in rows]
    ax.fill_between(n, lo, hi, alpha=0.3)
    ax.plot(n, med)
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel(col.replace("_", " "))
fig.tight_layout()
fig.savefig(here / "curves.png", dpi=150)
'''


def write_outputs(cfg: ExperimentConfig, record: RunRecord, directory: Path) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    ok = [r for r in record.replicates if not r["error"]]
    regret_rows, est_rows, dec_rows = [], [], []
    for r in ok:
        nf, logn = _normalizers(r["grid"])
        for i, n in enumerate(r["grid"]):
            regret_rows.append([r["index"], int(n), _f(r["regret"][i]), _f(r["chi"][i]),
                                _f(r["rho"][i]), _f(r["regret"][i] / (math.sqrt(nf[i]) * logn[i])),
                                _f(r["regret"][i] / logn[i] ** 2)])
            if "estimation_error" in r:
                e = r["estimation_error"][i]
                row = [r["index"], int(n), _f(e), _f(e * nf[i] ** 0.25 / math.sqrt(logn[i]))]
                if "p0_distance" in r:
                    dist = r["p0_distance"][i]
                    row += [_f(dist), _f(nf[i] * dist ** 2 / logn[i])]
                est_rows.append(row)
        for n, r_n, z, s, t, total, resid in r["decomposition"]:
            dec_rows.append([r["index"], n, _f(r_n), _f(z), _f(s), _f(t), _f(total), _f(resid)])
    est_header = ["replicate", "n", "error", "normalized_error"]
    if cfg.policy["kind"] == "gce":
        est_header += ["p0_distance", "scaled_sq_error"]
    texts = {
        "regret.csv": _csv(regret_rows, ["replicate", "n", "regret", "chi", "rho",
                                         "normalized_regret", "regret_over_log2"]),
        "estimation.csv": _csv(est_rows, est_header),
        "decomposition.csv": _csv(dec_rows, ["replicate", "n", "regret", "z", "s", "t", "total",
                                             "relative_residual"]),
    }
    summary = record.summary
    if summary:
        cols = [k for k in summary if k != "n"]
        rows = [[int(n)] + [_f(summary[c][i]) for c in cols] for i, n in enumerate(summary["n"])]
        texts["summary.csv"] = _csv(rows, ["n"] + cols)
    manifest = {
        "name": cfg.name,
        "config_hash": record.config_hash,
        "config": cfg.canonical(),
        "replicates": [{"index": r["index"], "seed": r["seed"], "error": r["error"],
                        "diverged": r.get("diverged", False),
                        "diagnostics": r.get("diagnostics", {})} for r in record.replicates],
    }
    texts["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n"
    texts["plot_curves.py"] = PLOT_SCRIPT
    files = {}
    for name, text in texts.items():
        path = directory / name
        path.write_text(text)
        files[name] = path
    return files


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunRecord:
    """Run every replicate (in parallel when ``cfg.workers > 1``) and write the outputs."""
    cfg.validate()
    indices = list(range(cfg.replicates))
    if cfg.workers > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.replicates)) as pool:
            reps = list(pool.map(run_replicate, [cfg] * len(indices), indices))
    else:
        reps = [run_replicate(cfg, i) for i in indices]
    reps.sort(key=lambda r: r["index"])
    record = RunRecord(cfg.digest(), reps, summarize(reps))
    if write:
        record.files = write_outputs(cfg, record, cfg.output_dir())
    return record
