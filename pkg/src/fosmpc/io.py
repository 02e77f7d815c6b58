"""CSV, config and SVG input/output."""

from __future__ import annotations

import csv
import json
import os
import xml.etree.ElementTree as ET
from typing import Optional, Sequence

import numpy as np

from .fos_core import SimulationTrace

__all__ = [
    "DataError",
    "ConfigError",
    "FLOAT_FMT",
    "ingest_eeg_csv",
    "write_channels_csv",
    "write_trace_csv",
    "read_trace_csv",
    "parse_config",
    "load_config",
    "overlay_svg",
    "write_overlay_svg",
]

FLOAT_FMT = "{:.12g}"


class DataError(Exception):
    """Unreadable or malformed data file."""


class ConfigError(Exception):
    """Invalid experiment configuration."""


def _fmt(v: float) -> str:
    return FLOAT_FMT.format(float(v))


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest_eeg_csv(path, expected_channels: Optional[int] = None) -> np.ndarray:
    """Read a samples-by-channels CSV; a non-numeric first row is taken as a header."""
    try:
        with open(path, newline="") as f:
            rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    if not rows:
        raise DataError(f"{path}: file is empty")
    start = 0
    if not all(_is_number(c.strip()) for c in rows[0]):
        start = 1
    out = []
    for i, row in enumerate(rows[start:], start=start + 1):
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                vals.append(float(cell.strip()))
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {i}, column {j}") from None
        out.append(vals)
    if not out:
        raise DataError(f"{path}: no data rows")
    widths = {len(r) for r in out}
    if len(widths) != 1:
        raise DataError(f"{path}: rows have differing column counts {sorted(widths)}")
    data = np.array(out)
    if expected_channels is not None and data.shape[1] != expected_channels:
        raise DataError(f"{path}: expected {expected_channels} channels, found {data.shape[1]}")
    return data


def write_channels_csv(path, data, header: bool = True) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        if header:
            w.writerow([f"ch{i + 1}" for i in range(data.shape[1])])
        for row in data:
            w.writerow([_fmt(v) for v in row])


def _trace_header(n: int, n_u: int) -> list:
    return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(n_u)]
            + [f"d{i + 1}" for i in range(n)] + ["event"])


def write_trace_csv(path, trace: SimulationTrace) -> None:
    """Columns ``t, x1..xn, u1..u_nu, d1..dn, event``; several events on one
    step are joined with ``;``."""
    n, n_u = trace.states.shape[1], trace.inputs.shape[1]
    labels = {}
    for step, label in trace.events:
        labels.setdefault(int(step), []).append(str(label))
    t = trace.time
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(_trace_header(n, n_u))
        for k in range(trace.T):
            w.writerow([_fmt(t[k])] + [_fmt(v) for v in trace.states[k]]
                       + [_fmt(v) for v in trace.inputs[k]]
                       + [_fmt(v) for v in trace.disturbances[k]]
                       + [";".join(labels.get(k, []))])


def read_trace_csv(path) -> SimulationTrace:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from e
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = rows[0]
    n = sum(1 for h in header if h.startswith("x"))
    n_u = sum(1 for h in header if h.startswith("u"))
    if header != _trace_header(n, n_u):
        raise DataError(f"{path}: not a trace file (header {header})")
    body = rows[1:]
    try:
        num = np.array([[float(c) for c in r[:-1]] for r in body]).reshape(len(body), -1)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None
    events = [(k, lab) for k, r in enumerate(body) if r[-1] for lab in r[-1].split(";")]
    dt = float(num[1, 0] - num[0, 0]) if len(body) > 1 else 0.0
    return SimulationTrace(dt, num[:, 1:1 + n], num[:, 1 + n:1 + n + n_u],
                           num[:, 1 + n + n_u:], events)


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Values are JSON when
    they parse as JSON and plain strings otherwise."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = _parse_value(value)
    return out


def load_config(path) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    return parse_config(text, str(path))


SERIES_COLORS = {"uncontrolled": "#1f77b4", "controlled": "#d62728", "input": "#ff9f1c"}
PANEL_W, PANEL_H = 960, 320


def _points(t, y, t0, t1, ylim):
    x = (np.asarray(t) - t0) / max(t1 - t0, 1e-300) * (PANEL_W - 40) + 30
    yc = np.clip(np.asarray(y, dtype=float), -ylim, ylim)
    py = PANEL_H / 2 - yc / ylim * (PANEL_H / 2 - 20)
    return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, py))


def overlay_svg(t, uncontrolled, controlled, inputs, title: str = "") -> str:
    """One 960x320 panel per channel overlaying the uncontrolled (blue) and
    controlled (red) traces with the stimulus (orange).

    The vertical range follows the controlled trace and the stimulus; the
    uncontrolled trace is clipped to the panel.
    """
    unc = np.atleast_2d(np.asarray(uncontrolled, dtype=float))
    con = np.atleast_2d(np.asarray(controlled, dtype=float))
    u = np.asarray(inputs, dtype=float).reshape(len(t), -1)
    n = con.shape[1]
    u_line = u.sum(axis=1)
    ylim = max(float(np.abs(con).max(initial=0.0)), float(np.abs(u_line).max(initial=0.0)), 1e-12)
    ylim *= 1.05
    t0, t1 = float(t[0]), float(t[-1])
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(PANEL_W), height=str(PANEL_H * n),
                      viewBox=f"0 0 {PANEL_W} {PANEL_H * n}")
    if title:
        ET.SubElement(root, "title").text = title
    for ch in range(n):
        panel = ET.SubElement(root, "svg", x="0", y=str(PANEL_H * ch), width=str(PANEL_W),
                              height=str(PANEL_H), viewBox=f"0 0 {PANEL_W} {PANEL_H}")
        ET.SubElement(panel, "rect", x="0", y="0", width=str(PANEL_W), height=str(PANEL_H),
                      fill="white", stroke="#cccccc")
        ET.SubElement(panel, "line", x1="30", y1=str(PANEL_H / 2), x2=str(PANEL_W - 10),
                      y2=str(PANEL_H / 2), stroke="#dddddd")
        label = ET.SubElement(panel, "text", x="34", y="16", fill="#333333")
        label.set("font-size", "12")
        label.text = f"x{ch + 1}  (range ±{ylim:.3g})"
        for name, y in (("uncontrolled", unc[:, ch]), ("controlled", con[:, ch]),
                        ("input", u_line)):
            line = ET.SubElement(panel, "polyline", fill="none", stroke=SERIES_COLORS[name],
                                 points=_points(t, y, t0, t1, ylim))
            line.set("stroke-width", "1")
            line.set("class", name)
    return ET.tostring(root, encoding="unicode")


def write_overlay_svg(path, t, uncontrolled, controlled, inputs, title: str = "") -> None:
    with open(path, "w") as f:
        f.write(overlay_svg(t, uncontrolled, controlled, inputs, title))
        f.write("\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
