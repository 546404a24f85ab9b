"""Synthetic pose traces and the trace CSV format.

CSV layout: header ``t_us,px,py,pz,qx,qy,qz,qw``, one row per sample,
timestamps strictly increasing.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from . import quat
from .predictor import Pose

TRACE_FIELDS = ["t_us", "px", "py", "pz", "qx", "qy", "qz", "qw"]

TRACE_KINDS = ("static", "linear", "sinusoid", "orbit")


def save_trace_csv(path, trace: list[Pose]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_FIELDS)
        for pose in trace:
            writer.writerow([pose.timestamp_us, *pose.position, *pose.rotation])


def load_trace_csv(path) -> list[Pose]:
    trace: list[Pose] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if [h.strip() for h in header] != TRACE_FIELDS:
            raise ValueError(f"bad trace header {header!r}")
        last_t = None
        for row in reader:
            t = int(row[0])
            if last_t is not None and t <= last_t:
                raise ValueError(f"trace timestamps must be strictly increasing at t={t}")
            last_t = t
            vals = [float(v) for v in row[1:8]]
            trace.append(Pose(t, vals[0:3], vals[3:7]))
    return trace


def generate_trace(kind: str, duration_s: float, rate_hz: float, **params) -> list[Pose]:
    """Deterministic synthetic camera trace, endpoints inclusive.

    Kinds:
      static    fixed pose; params: position, rotation
      linear    constant velocity; params: start, velocity
      sinusoid  one axis oscillates; params: center, axis, amplitude, freq_hz
      orbit     circle the origin facing the center, quaternion continuous;
                params: radius, period_s, height
    """
    if rate_hz <= 0:
        raise ValueError("rate must be > 0")
    if kind not in TRACE_KINDS:
        raise ValueError(f"unknown trace kind {kind!r}, pick one of {TRACE_KINDS}")
    n = int(round(duration_s * rate_hz))
    trace = []
    for k in range(n + 1):
        t = k / rate_hz
        t_us = round(k * 1e6 / rate_hz)
        if kind == "static":
            pos = np.asarray(params.get("position", (0.0, 0.0, 3.0)), dtype=np.float64)
            rot = np.asarray(params.get("rotation", quat.IDENTITY), dtype=np.float64)
        elif kind == "linear":
            start = np.asarray(params.get("start", (0.0, 0.0, 3.0)), dtype=np.float64)
            vel = np.asarray(params.get("velocity", (1.0, 0.0, 0.0)), dtype=np.float64)
            pos = start + vel * t
            rot = quat.IDENTITY
        elif kind == "sinusoid":
            center = np.asarray(params.get("center", (0.0, 0.0, 3.0)), dtype=np.float64)
            axis = int(params.get("axis", 0))
            amplitude = float(params.get("amplitude", 0.5))
            freq = float(params.get("freq_hz", 1.0))
            pos = center.copy()
            pos[axis] += amplitude * math.sin(2.0 * math.pi * freq * t)
            rot = quat.IDENTITY
        else:  # orbit
            radius = float(params.get("radius", 3.0))
            period = float(params.get("period_s", 8.0))
            height = float(params.get("height", 0.0))
            theta = 2.0 * math.pi * t / period
            pos = np.array([radius * math.sin(theta), height, radius * math.cos(theta)])
            # yaw by theta keeps the camera facing the center; parametrizing the
            # half angle directly keeps consecutive quaternion dots positive
            rot = np.array([0.0, math.sin(theta / 2.0), 0.0, math.cos(theta / 2.0)])
        trace.append(Pose(int(t_us), pos, rot))
    return trace
