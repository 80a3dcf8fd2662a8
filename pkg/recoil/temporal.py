"""Photon wavepackets, detection-window geometry, yield and the window-variance factor."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc


@dataclass(frozen=True)
class DetectionWindows:
    """Detection windows in seconds.

    Both detectors open at ``known_offset`` (δt₀, the delay of emitter B's excitation) and
    stay open for ``detector_window`` (T_D, may be infinite). Events whose detection times
    differ by more than ``difference_window`` (T_Δ) are vetoed.
    """

    difference_window: float
    detector_window: float = math.inf
    known_offset: float = 0.0

    def __post_init__(self):
        if not self.difference_window > 0:
            raise ValueError(f"difference window must be > 0, got {self.difference_window}")
        if self.difference_window > self.detector_window:
            raise ValueError(
                f"difference window ({self.difference_window}) exceeds the detector window "
                f"({self.detector_window})"
            )
        if not (self.known_offset >= 0 and math.isfinite(self.known_offset)):
            raise ValueError(f"known offset must be finite and >= 0, got {self.known_offset}")

    @classmethod
    def from_w(cls, w, lifetime, detector_window=math.inf, known_offset=0.0):
        """Windows with T_Δ = w·τ."""
        return cls(
            difference_window=w * lifetime,
            detector_window=detector_window,
            known_offset=known_offset,
        )

    @property
    def start(self):
        return self.known_offset

    @property
    def stop(self):
        return self.known_offset + self.detector_window

    def w(self, lifetime):
        return self.difference_window / lifetime


def wavepacket(t, lifetime):
    """Field envelope e^{-t/2τ}/√τ for t ≥ 0, zero before emission."""
    if not lifetime > 0:
        raise ValueError(f"lifetime must be positive, got {lifetime}")
    t = np.asarray(t, dtype=float)
    envelope = np.where(t >= 0, np.exp(-np.maximum(t, 0.0) / (2 * lifetime)), 0.0)
    envelope = envelope / math.sqrt(lifetime)
    return envelope if envelope.ndim else float(envelope)


def detection_yield(windows: DetectionWindows, lifetime):
    """Probability that both photons land inside the windows and pass the veto.

    The offset enters as e^{-δt₀/τ}: emitter A's photon must survive until the windows open.
    """
    if not lifetime > 0:
        raise ValueError(f"lifetime must be positive, got {lifetime}")
    t_d = windows.detector_window / lifetime
    t_delta = windows.difference_window / lifetime
    if math.isinf(t_d):
        y = -math.expm1(-t_delta)
    else:
        y = 1 - math.exp(-t_delta) - math.exp(-(2 * t_d - t_delta)) + math.exp(-2 * t_d)
    return math.exp(-windows.known_offset / lifetime) * y


def window_variance_factor(w):
    """W(w) = [1 - (1 + w + w²/2)e^{-w}] / (1 - e^{-w}), with W(0) = 0.

    Rises from 0 to 1 with the window size; ⟨t_Δ²⟩ over an infinite detector window is 2τ²W.
    """
    if w < 0:
        raise ValueError(f"w must be >= 0, got {w}")
    if w == 0:
        return 0.0
    if math.isinf(w):
        return 1.0
    return float(gammainc(3, w) / -math.expm1(-w))


def difference_variance(w, lifetime):
    """⟨t_Δ²⟩ of the detection-time difference restricted to |t_Δ| ≤ wτ."""
    return 2 * lifetime**2 * window_variance_factor(w)
