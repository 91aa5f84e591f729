"""Synthetic test images: piecewise-constant layouts under a multiplicative
bias field, with the generating partition returned as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import IndicatorSet
from .errors import ConfigError

__all__ = ["Shape", "SynthSpec", "generate"]


@dataclass(frozen=True)
class Shape:
    """One region primitive: kind in {'disk', 'rect', 'ring'}.

    params: disk (cx, cy, r); rect (x, y, w, h); ring (cx, cy, r_in, r_out).
    Later shapes paint over earlier ones.
    """

    kind: str
    params: tuple
    intensity: float

    def mask(self, height: int, width: int) -> np.ndarray:
        yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
        if self.kind == "disk":
            cx, cy, r = self.params
            return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        if self.kind == "rect":
            x, y, w, h = self.params
            return (xx >= x) & (xx < x + w) & (yy >= y) & (yy < y + h)
        if self.kind == "ring":
            cx, cy, r_in, r_out = self.params
            rr = (xx - cx) ** 2 + (yy - cy) ** 2
            return (rr >= r_in * r_in) & (rr <= r_out * r_out)
        raise ConfigError(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class SynthSpec:
    size: tuple[int, int]            # (height, width)
    background: float = 60.0
    shapes: tuple = ()
    bias_kind: str = "none"          # none | ramp | gaussian
    bias_lo: float = 1.0             # ramp: value at the left edge
    bias_hi: float = 1.0             # ramp: value at the right edge
    bias_amplitude: float = 2.0      # gaussian: max/min ratio of the bump
    bias_width: float | None = None  # gaussian: std in pixels (default size/3)

    def validate(self) -> "SynthSpec":
        h, w = self.size
        if h < 1 or w < 1:
            raise ConfigError("synthetic image size must be positive")
        for s in self.shapes:
            if not 0.0 <= s.intensity <= 255.0:
                raise ConfigError("region intensities must lie in [0, 255]")
        if not 0.0 <= self.background <= 255.0:
            raise ConfigError("background intensity must lie in [0, 255]")
        if self.bias_kind not in ("none", "ramp", "gaussian"):
            raise ConfigError(f"unknown bias kind {self.bias_kind!r}")
        if self.bias_kind == "ramp" and (self.bias_lo <= 0 or self.bias_hi <= 0):
            raise ConfigError("ramp bias must be strictly positive")
        if self.bias_kind == "gaussian" and self.bias_amplitude < 1.0:
            raise ConfigError("gaussian bias amplitude is a max/min ratio >= 1")
        return self


def _bias_field(spec: SynthSpec) -> np.ndarray:
    h, w = spec.size
    if spec.bias_kind == "none":
        return np.ones((h, w))
    if spec.bias_kind == "ramp":
        ramp = np.linspace(spec.bias_lo, spec.bias_hi, w)
        return np.tile(ramp, (h, 1))
    # centered bump, max 1 at the center falling to 1/amplitude
    std = spec.bias_width if spec.bias_width is not None else max(h, w) / 3.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rr = (xx - (w - 1) / 2.0) ** 2 + (yy - (h - 1) / 2.0) ** 2
    lo = 1.0 / spec.bias_amplitude
    return lo + (1.0 - lo) * np.exp(-rr / (2.0 * std * std))


def generate(spec: SynthSpec) -> tuple[np.ndarray, IndicatorSet, np.ndarray]:
    """Render (clean, truth, bias): clean = bias * piecewise-constant layout.

    Phase 0 is the background; shape k paints phase k+1 (later shapes win).
    Fully deterministic: same spec, same arrays.
    """
    spec.validate()
    h, w = spec.size
    labels = np.zeros((h, w), dtype=np.int64)
    values = np.full((h, w), float(spec.background))
    for k, shape in enumerate(spec.shapes):
        m = shape.mask(h, w)
        labels[m] = k + 1
        values[m] = shape.intensity
    bias = _bias_field(spec)
    truth = IndicatorSet.from_labels(labels, len(spec.shapes) + 1)
    return values * bias, truth, bias
