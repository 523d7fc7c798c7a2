"""Result files: aggregated CSV, raw per-seed series (npz), SVG plots and a
reader for the CSV.

File names are ``<env>_<algorithm>_<fingerprint>.<ext>``.  Everything written
here is a pure function of its inputs: CSV floats use ``repr``, the npz
archive is written with fixed member timestamps and the SVG with a fixed
hash salt and no date, so identical results give identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import zipfile

import numpy as np

from ..errors import LabError

__all__ = [
    "CSV_HEADER",
    "ResultSet",
    "result_set_from_points",
    "aggregate",
    "csv_rows",
    "write_csv",
    "read_csv",
    "write_npz",
    "read_npz",
    "write_svg",
    "write_summary",
    "stem",
]

CSV_HEADER = ("t", "metric", "mean", "std", "n", "algorithm", "eta", "env", "sweep_key", "sweep_value")
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class ResultSet:
    """Raw per-seed series for every sweep point of one experiment.

    ``points`` is a list of dicts with keys ``index, eta, sweep_key,
    sweep_value, seeds, t`` and ``series`` (metric -> array of shape
    ``(n_seeds, len(t))``).
    """

    def __init__(self, env, algorithm, fingerprint, points, meta=None):
        self.env = env
        self.algorithm = algorithm
        self.fingerprint = fingerprint
        self.points = points
        self.meta = meta or {}

    @property
    def metrics(self):
        return list(self.points[0]["series"]) if self.points else []


def result_set_from_points(config, point_results) -> ResultSet:
    points = []
    for pr in point_results:
        points.append({
            "index": pr.index,
            "eta": pr.eta,
            "sweep_key": pr.sweep_key.split(".")[-1],
            "sweep_value": pr.sweep_value,
            "seeds": [r.seed for r in pr.runs],
            "t": pr.t,
            "series": {m: pr.stacked(m) for m in pr.runs[0].series},
        })
    meta = {"config": json.loads(config.canonical())}
    return ResultSet(config.env_name, config.algorithm_name, config.fingerprint(), points, meta)


def stem(rs: ResultSet) -> str:
    return f"{rs.env}_{rs.algorithm}_{rs.fingerprint}"


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def aggregate(values):
    """Mean, population std (ddof 0) and count over the seed axis."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    with np.errstate(invalid="ignore"):
        std = values.std(axis=0)
    # blow-up markers (inf) carry no spread
    return mean, np.where(np.isfinite(mean), std, 0.0), values.shape[0]


def csv_rows(rs: ResultSet):
    for pt in rs.points:
        for metric, values in pt["series"].items():
            mean, std, n = aggregate(values)
            for k, t in enumerate(pt["t"]):
                yield (int(t), metric, mean[k], std[k], n, rs.algorithm, pt["eta"], rs.env,
                       pt["sweep_key"], pt["sweep_value"])


def _target(out_dir, name):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise LabError(f"cannot create output directory {out_dir}: {exc.strerror}") from None
    path = os.path.join(out_dir, name)
    if not os.access(out_dir, os.W_OK):
        raise LabError(f"output directory {out_dir} is not writable")
    return path


def write_csv(rs: ResultSet, out_dir) -> str:
    path = _target(out_dir, stem(rs) + ".csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in csv_rows(rs):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Rows of a result CSV as dicts with numeric fields converted."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise LabError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            row["t"] = int(row["t"])
            row["n"] = int(row["n"])
            for k in ("mean", "std", "eta"):
                row[k] = float(row[k])
            try:
                row["sweep_value"] = float(row["sweep_value"])
            except ValueError:
                pass
            out.append(row)
    return out


def _member(zf, name, array):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asarray(array), allow_pickle=False)
    info = zipfile.ZipInfo(name + ".npy", date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, buf.getvalue())


def write_npz(rs: ResultSet, out_dir) -> str:
    path = _target(out_dir, stem(rs) + ".npz")
    header = {
        "env": rs.env,
        "algorithm": rs.algorithm,
        "fingerprint": rs.fingerprint,
        "meta": rs.meta,
        "points": [{k: (v if k != "sweep_value" or isinstance(v, str) else float(v))
                    for k, v in pt.items() if k in ("index", "eta", "sweep_key", "sweep_value", "seeds")}
                   for pt in rs.points],
        "metrics": rs.metrics,
    }
    with zipfile.ZipFile(path, "w") as zf:
        _member(zf, "header", np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8))
        for i, pt in enumerate(rs.points):
            _member(zf, f"p{i}_t", pt["t"])
            for m, v in pt["series"].items():
                _member(zf, f"p{i}_{m}", v)
    return path


def read_npz(path) -> ResultSet:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        points = []
        for i, pt in enumerate(header["points"]):
            pt = dict(pt)
            pt["t"] = z[f"p{i}_t"]
            pt["series"] = {m: z[f"p{i}_{m}"] for m in header["metrics"]}
            points.append(pt)
    return ResultSet(header["env"], header["algorithm"], header["fingerprint"], points, header["meta"])


def write_summary(config, point_results, out_dir, name) -> str:
    """Per-run termination and tracking statistics as JSON lines."""
    path = _target(out_dir, name + ".runs.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for pr in point_results:
            for r in pr.runs:
                rec = {
                    "sweep_index": r.sweep_index, "eta": r.eta,
                    "sweep_key": pr.sweep_key.split(".")[-1], "sweep_value": pr.sweep_value,
                    "seed": r.seed, "fingerprint": r.fingerprint, "termination": r.termination,
                    "cap_step": r.cap_step, "max_value_error": r.max_value_error,
                    "first_above": {_fmt(k): v for k, v in r.first_above.items()},
                    "drift_violations": r.drift_violations,
                    "max_drift_excess": None if math.isinf(r.max_drift_excess) else r.max_drift_excess,
                    "w_final": None if r.w_final is None else [float(v) for v in r.w_final],
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def write_svg(rs: ResultSet, out_dir, metric=None) -> str:
    """Mean curve with a shaded one-standard-deviation band per sweep point."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metric = metric or ("value_error" if "value_error" in rs.metrics else rs.metrics[0])
    path = _target(out_dir, stem(rs) + ".svg")
    with matplotlib.rc_context({"svg.hashsalt": "targetnet-lab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        if metric == "fixed_point_error":
            _plot_table(ax, rs, metric)
        else:
            _plot_curves(ax, rs, metric)
        xlabel = rs.points[0]["sweep_key"] if metric == "fixed_point_error" else "step"
        ax.set_xlabel(xlabel)
        ax.set_ylabel(metric)
        if metric in ("value_error", "w_norm", "theta_norm", "fixed_point_error"):
            ax.set_yscale("log")
        ax.set_title(f"{rs.env} / {rs.algorithm}")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def _plot_curves(ax, rs, metric):
    for pt in rs.points:
        mean, std, _ = aggregate(pt["series"][metric])
        x = np.asarray(pt["t"], dtype=float)
        label = f"eta={pt['eta']:g}"
        if pt["sweep_key"] and pt["sweep_key"] != "eta":
            label += f", {pt['sweep_key']}={pt['sweep_value']}"
        finite = np.isfinite(mean)
        line, = ax.plot(x[finite], mean[finite], label=label, linewidth=1.2)
        ax.fill_between(x[finite], (mean - std)[finite], (mean + std)[finite],
                        color=line.get_color(), alpha=0.2, linewidth=0)


def _plot_table(ax, rs, metric):
    """One line per ridge weight against the swept value; blow-ups become
    vertical markers."""
    by_eta = {}
    for pt in rs.points:
        by_eta.setdefault(pt["eta"], []).append((float(pt["sweep_value"]), float(pt["series"][metric][0, 0])))
    for eta, pairs in by_eta.items():
        pairs.sort()
        x = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        finite = np.isfinite(y)
        line, = ax.plot(x[finite], y[finite], label=f"eta={eta:g}", linewidth=1.2)
        for xv in x[~finite]:
            ax.axvline(xv, color=line.get_color(), linestyle=":", linewidth=0.8)
