"""Report emission: JSON, per-estimate CSV tables, optional SVG rate plots."""

from __future__ import annotations

import csv
import os

from ._svg import loglog_svg
from .harness import report_to_json


def write_report(report, outdir, plots=False):
    """Write report.json, tables/<spec>.csv and (optionally) plots/<spec>.svg.

    Returns the list of files written.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        fh.write(report_to_json(report))
    written.append(path)

    tables = os.path.join(outdir, "tables")
    os.makedirs(tables, exist_ok=True)
    for name, spec in report.get("specs", {}).items():
        tpath = os.path.join(tables, f"{name}.csv")
        with open(tpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "zeta_re", "zeta_im", "phi", "tag", "measured",
                        "normalized", "spread", "panel", "failed"])
            for p in spec["points"]:
                w.writerow([p["eps"], p["zeta"][0], p["zeta"][1], p["phi"], p["tag"],
                            p.get("measured", ""), p.get("normalized", ""),
                            p.get("spread", ""), p.get("panel", ""), p["failed"]])
        written.append(tpath)

    if plots:
        plots_dir = os.path.join(outdir, "plots")
        os.makedirs(plots_dir, exist_ok=True)
        for name, spec in report.get("specs", {}).items():
            eps_pts = [p for p in spec["points"] if p["tag"] == "eps" and not p["failed"]]
            series = []
            if len(eps_pts) >= 2:
                series.append((name, [p["eps"] for p in eps_pts],
                               [p["measured"] for p in eps_pts]))
                slope = spec["fits"].get("eps", {}).get("slope")
                if slope is not None:
                    x0, y0 = eps_pts[0]["eps"], eps_pts[0]["measured"]
                    xs = [p["eps"] for p in eps_pts]
                    series.append((f"slope {slope:.2f}", xs,
                                   [y0 * (x / x0) ** slope for x in xs]))
            zeta_pts = [p for p in spec["points"] if p["tag"] == "zeta" and not p["failed"]]
            if len(zeta_pts) >= 2:
                series.append((f"{name} (|zeta|)",
                               [abs(complex(*p["zeta"])) for p in zeta_pts],
                               [p["measured"] for p in zeta_pts]))
            if series:
                spath = os.path.join(plots_dir, f"{name}.svg")
                with open(spath, "w") as fh:
                    fh.write(loglog_svg(series, title=name, xlabel="eps  /  |zeta|",
                                        ylabel="measured"))
                written.append(spath)
    return written
