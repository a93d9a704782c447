"""Sequential stopping rules as incremental state machines.

Each detector consumes one increment at a time (a log-likelihood ratio, or a
raw observation for the moving-average rule in statistic form) and reports
whether it has stopped.  Likelihood-ratio statistics are kept in log domain
(w = log V, recursion w' = max(0, w) + llr + log(1 - rho)) because the raw
products overflow doubles within a few hundred steps; thresholds are
log-transformed on entry.

A stopped detector is frozen: stepping it again raises, reuse requires an
explicit ``reset()``.  Stop conditions use >= throughout.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

__all__ = [
    "StopReport",
    "DetectorStoppedError",
    "ModifiedCusum",
    "Cusum",
    "Fma",
    "WlCusum",
    "run_to_stop",
]


class DetectorStoppedError(RuntimeError):
    """Raised when a stopped detector is stepped without a reset."""


@dataclass(frozen=True)
class StopReport:
    stopped: bool
    stop_time: Optional[int]
    statistic_at_stop: float

    def __post_init__(self):
        if self.stopped != (self.stop_time is not None):
            raise ValueError("stopped flag and stop_time must agree")


def _log_cusum_step(w: float, llr_value: float, log_discount: float) -> float:
    # max{1, V} Lambda (1-rho) in log domain; shared so rho=0 modified CUSUM
    # and plain CUSUM are bit-identical.
    return max(0.0, w) + llr_value + log_discount


class _LogRatioDetector:
    """Common machinery for the CUSUM-style rules."""

    def __init__(self, threshold: float, log_discount: float):
        if not threshold > 0.0:
            raise ValueError(f"threshold must be positive, got {threshold}")
        self._threshold = threshold
        self._log_threshold = math.log(threshold)
        self._log_discount = log_discount
        self.reset()

    def reset(self) -> None:
        self._w = 0.0  # log V, V(0) = 1
        self._n = 0
        self._stopped = False

    def step(self, llr_value: float) -> StopReport:
        if self._stopped:
            raise DetectorStoppedError("detector already stopped; reset() first")
        if not math.isfinite(llr_value):
            raise ValueError(f"llr increment must be finite, got {llr_value}")
        self._n += 1
        self._w = _log_cusum_step(self._w, llr_value, self._log_discount)
        if self._w >= self._log_threshold:
            self._stopped = True
            return StopReport(True, self._n, self.statistic)
        return StopReport(False, None, self.statistic)

    @property
    def n(self) -> int:
        return self._n

    @property
    def stopped(self) -> bool:
        return self._stopped

    @property
    def log_statistic(self) -> float:
        return self._w

    @property
    def statistic(self) -> float:
        """Current V(n); may overflow to inf for extreme paths."""
        try:
            return math.exp(self._w)
        except OverflowError:
            return math.inf


class ModifiedCusum(_LogRatioDetector):
    """CUSUM with per-step discount: V(n) = max{1, V(n-1)} * Lambda_n * (1-rho)."""

    def __init__(self, rho: float, threshold_b: float):
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {rho}")
        self.rho = rho
        self.threshold_b = threshold_b
        super().__init__(threshold_b, math.log1p(-rho) if rho else 0.0)

    def copy(self) -> "ModifiedCusum":
        other = ModifiedCusum(self.rho, self.threshold_b)
        other._w, other._n, other._stopped = self._w, self._n, self._stopped
        return other


class Cusum(_LogRatioDetector):
    """Page's rule: V(n) = max{1, V(n-1)} * Lambda_n, alarm at V >= C."""

    def __init__(self, threshold_c: float):
        self.threshold_c = threshold_c
        super().__init__(threshold_c, 0.0)

    def copy(self) -> "Cusum":
        other = Cusum(self.threshold_c)
        other._w, other._n, other._stopped = self._w, self._n, self._stopped
        return other


class Fma:
    """Finite moving average: alarm at the first n >= L with the window sum
    of the last L increments at or above the threshold.

    ``form`` records whether increments are LLRs or raw observations (the
    monotone-statistic variant); the update is identical either way.
    """

    def __init__(self, window_len: int, threshold: float, form: str = "llr"):
        if window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {window_len}")
        if form not in ("llr", "statistic"):
            raise ValueError(f"form must be 'llr' or 'statistic', got {form!r}")
        self.window_len = window_len
        self.threshold = threshold
        self.form = form
        self.reset()

    def reset(self) -> None:
        self._buf = deque(maxlen=self.window_len)
        self._sum = 0.0
        self._n = 0
        self._stopped = False

    def step(self, increment: float) -> StopReport:
        if self._stopped:
            raise DetectorStoppedError("detector already stopped; reset() first")
        if not math.isfinite(increment):
            raise ValueError(f"increment must be finite, got {increment}")
        self._n += 1
        if len(self._buf) == self.window_len:
            self._sum -= self._buf[0]
        self._buf.append(increment)
        self._sum += increment
        if self._n >= self.window_len and self._sum >= self.threshold:
            self._stopped = True
            return StopReport(True, self._n, self._sum)
        return StopReport(False, None, self._sum)

    @property
    def n(self) -> int:
        return self._n

    @property
    def stopped(self) -> bool:
        return self._stopped

    @property
    def statistic(self) -> float:
        return self._sum

    @property
    def window_sum_recomputed(self) -> float:
        """Window sum recomputed from the buffer (drift check)."""
        return math.fsum(self._buf)

    def copy(self) -> "Fma":
        other = Fma(self.window_len, self.threshold, self.form)
        other._buf = deque(self._buf, maxlen=self.window_len)
        other._sum, other._n, other._stopped = self._sum, self._n, self._stopped
        return other


class WlCusum:
    """Window-limited CUSUM: alarm at the first n >= L where some suffix of
    the last L LLRs clears its lag-dependent threshold A(k).

    The threshold map may be a callable k -> A(k) or a length-L sequence; the
    default constant map keeps the rule testable without claiming optimality.
    """

    def __init__(self, window_len: int, threshold_fn: Union[Callable[[int], float], Sequence[float], float]):
        if window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {window_len}")
        self.window_len = window_len
        if callable(threshold_fn):
            self._a = [float(threshold_fn(k)) for k in range(1, window_len + 1)]
        elif isinstance(threshold_fn, (int, float)):
            self._a = [float(threshold_fn)] * window_len
        else:
            self._a = [float(v) for v in threshold_fn]
            if len(self._a) != window_len:
                raise ValueError("threshold sequence length must equal window_len")
        self.reset()

    def threshold_at(self, k: int) -> float:
        if not 1 <= k <= self.window_len:
            raise ValueError(f"lag k must lie in 1..{self.window_len}, got {k}")
        return self._a[k - 1]

    def reset(self) -> None:
        self._buf = deque(maxlen=self.window_len)
        self._n = 0
        self._stopped = False
        self._stat = -math.inf

    def step(self, llr_value: float) -> StopReport:
        if self._stopped:
            raise DetectorStoppedError("detector already stopped; reset() first")
        if not math.isfinite(llr_value):
            raise ValueError(f"llr increment must be finite, got {llr_value}")
        self._n += 1
        self._buf.append(llr_value)
        self._stat = self._suffix_margin()
        if self._n >= self.window_len and self._stat >= 0.0:
            self._stopped = True
            return StopReport(True, self._n, self._stat)
        return StopReport(False, None, self._stat)

    def _suffix_margin(self) -> float:
        # max over k of (sum of the newest k increments) - A(k)
        best = -math.inf
        acc = 0.0
        for k, value in enumerate(reversed(self._buf), start=1):
            acc += value
            best = max(best, acc - self._a[k - 1])
        return best

    @property
    def n(self) -> int:
        return self._n

    @property
    def stopped(self) -> bool:
        return self._stopped

    @property
    def statistic(self) -> float:
        return self._stat

    def copy(self) -> "WlCusum":
        other = WlCusum(self.window_len, self._a)
        other._buf = deque(self._buf, maxlen=self.window_len)
        other._n, other._stopped, other._stat = self._n, self._stopped, self._stat
        return other


Detector = Union[ModifiedCusum, Cusum, Fma, WlCusum]


def run_to_stop(detector: Detector, increments, cap: int) -> StopReport:
    """Feed increments until the detector stops or ``cap`` steps elapse."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    report = StopReport(False, None, getattr(detector, "statistic", 0.0))
    for i, value in enumerate(increments):
        if i >= cap:
            break
        report = detector.step(value)
        if report.stopped:
            return report
    return report
