"""6DoF pose prediction from past movement.

The server renders the view the user will have when the frame reaches them,
so the predictor extrapolates the camera pose one lookahead interval into the
future. Incoming samples arrive with network jitter; they are first resampled
onto a uniform tick grid (linear interpolation for position, spherical for
rotation), then each of the seven channels (3 position + 4 quaternion
components) is fit with an autoregressive model of order p, no intercept,
solved by ridge-regularized normal equations. Multi-step prediction iterates
the one-step model; the predicted quaternion is renormalized.

Quaternion channels are kept hemisphere-aligned (a sample is sign-flipped when
its dot product with the previous sample is negative) so the per-component
fit never sees the q/-q double-cover jump.

A ZeroOrderHold predictor (return the latest pose unchanged) is the built-in
fallback and baseline; any object with push_sample/predict can be plugged in.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import quat


class NotReady(Exception):
    """Raised by fit() when the history is too short for the model order."""


@dataclass(eq=False)
class Pose:
    timestamp_us: int
    position: np.ndarray
    rotation: np.ndarray  # unit quaternion (x, y, z, w)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if not quat.is_unit(self.rotation):
            raise ValueError("pose rotation must be a unit quaternion")

    def channels(self) -> np.ndarray:
        """Stacked (7,) channel vector: position then quaternion."""
        return np.concatenate((self.position, self.rotation))


@dataclass
class PredictorConfig:
    order_p: int = 2
    window_w: int = 60          # history length in resampled ticks
    tick_hz: float = 60.0       # resampling rate
    ridge_lambda: float = 1e-12  # keeps the normal equations solvable on degenerate histories
    lookahead_us: int = 60_000  # default horizon, operator-estimated M2P latency

    def __post_init__(self):
        if self.order_p < 1:
            raise ValueError("order_p must be >= 1")
        if self.window_w <= self.order_p + 1:
            raise ValueError("window_w must exceed order_p + 1")
        if self.tick_hz <= 0:
            raise ValueError("tick_hz must be > 0")
        if self.lookahead_us < 0:
            raise ValueError("lookahead_us must be >= 0")


class ZeroOrderHold:
    """Baseline predictor: the future pose is the latest pose."""

    def __init__(self, config: PredictorConfig | None = None):
        self.config = config or PredictorConfig()
        self._last: Pose | None = None
        self.dropped_samples = 0

    def push_sample(self, pose: Pose) -> None:
        if self._last is not None and pose.timestamp_us <= self._last.timestamp_us:
            self.dropped_samples += 1
            return
        self._last = pose

    def predict(self, lookahead_us: int | None = None) -> Pose | None:
        if self._last is None:
            return None
        lookahead_us = self.config.lookahead_us if lookahead_us is None else lookahead_us
        return Pose(self._last.timestamp_us + lookahead_us, self._last.position.copy(), self._last.rotation.copy())


class AutoRegressivePredictor:
    """Per-channel AR(p) pose extrapolation over a uniformly resampled window."""

    def __init__(self, config: PredictorConfig | None = None):
        self.config = config or PredictorConfig()
        self._dt_us = 1e6 / self.config.tick_hz
        self._grid: deque[np.ndarray] = deque(maxlen=self.config.window_w)
        self._anchor_us: float | None = None
        self._next_k = 0
        self._last_raw: Pose | None = None
        self.dropped_samples = 0

    @property
    def grid_len(self) -> int:
        return len(self._grid)

    def history(self) -> np.ndarray:
        """Copy of the resampled window, shape (n, 7)."""
        return np.asarray(self._grid).reshape(-1, 7).copy()

    def push_sample(self, pose: Pose) -> None:
        """Fold one raw sample into the tick-rate history.

        Stale samples (timestamp not newer than the last) are dropped and
        counted. Grid points between the previous and this sample are filled
        by interpolating the raw pair.
        """
        if self._last_raw is not None and pose.timestamp_us <= self._last_raw.timestamp_us:
            self.dropped_samples += 1
            return
        if self._last_raw is None:
            self._anchor_us = float(pose.timestamp_us)
            self._grid.append(pose.channels())
            self._next_k = 1
            self._last_raw = pose
            return
        prev = self._last_raw
        t_prev, t_new = float(prev.timestamp_us), float(pose.timestamp_us)
        while True:
            t_grid = self._anchor_us + self._next_k * self._dt_us
            if t_grid > t_new:
                break
            u = (t_grid - t_prev) / (t_new - t_prev)
            pos = prev.position + u * (pose.position - prev.position)
            rot = quat.slerp(prev.rotation, pose.rotation, u)
            rot = quat.align(rot, self._grid[-1][3:7])
            self._grid.append(np.concatenate((pos, rot)))
            self._next_k += 1
        self._last_raw = pose

    def fit(self) -> np.ndarray:
        """Fit AR coefficients; returns (7, p), row = channel, column i = lag i+1.

        Per channel the coefficients minimize the one-step squared residual
        over the window, with a ridge_lambda * I term so a degenerate history
        (for example all zeros) still yields finite coefficients.
        """
        p = self.config.order_p
        n = len(self._grid)
        if n < p + 2:
            raise NotReady(f"need at least {p + 2} grid samples, have {n}")
        hist = np.asarray(self._grid)  # (n, 7)
        rows = n - p
        coeffs = np.empty((7, p))
        eye = self.config.ridge_lambda * np.eye(p)
        for c in range(7):
            x = hist[:, c]
            design = np.empty((rows, p))
            for i in range(p):
                design[:, i] = x[p - 1 - i : n - 1 - i]
            target = x[p:]
            coeffs[c] = np.linalg.solve(design.T @ design + eye, design.T @ target)
        return coeffs

    def predict(self, lookahead_us: int | None = None) -> Pose | None:
        """Pose k = round(lookahead * tick_hz) ticks ahead of the latest sample.

        Degrades gracefully: with no samples returns None; with too little
        history for the model, falls back to zero-order hold on the latest
        raw pose. The returned timestamp is latest sample time + lookahead.
        """
        if self._last_raw is None:
            return None
        lookahead_us = self.config.lookahead_us if lookahead_us is None else lookahead_us
        ts_out = self._last_raw.timestamp_us + lookahead_us
        k = int(round(lookahead_us * self.config.tick_hz / 1e6))
        p = self.config.order_p
        if len(self._grid) < p + 2:
            return Pose(ts_out, self._last_raw.position.copy(), self._last_raw.rotation.copy())
        if k == 0:
            latest = self._grid[-1]
            return Pose(ts_out, latest[:3].copy(), quat.normalize(latest[3:7]))
        coeffs = self.fit()
        hist = np.asarray(self._grid)[-p:]  # (p, 7) oldest to newest
        state = [hist[i] for i in range(p)]
        for _ in range(k):
            nxt = np.zeros(7)
            for i in range(p):
                nxt += coeffs[:, i] * state[-(i + 1)]
            state.append(nxt)
            state = state[-p:]
        out = state[-1]
        rot = out[3:7]
        norm = float(np.linalg.norm(rot))
        if not np.isfinite(norm) or norm < 1e-12:
            rot = self._last_raw.rotation.copy()
        else:
            rot = rot / norm
        return Pose(ts_out, out[:3], rot)


def make_predictor(kind: str, config: PredictorConfig | None = None):
    kind = kind.lower()
    if kind == "ar":
        return AutoRegressivePredictor(config)
    if kind == "zoh":
        return ZeroOrderHold(config)
    raise ValueError(f"unknown predictor kind {kind!r}")
