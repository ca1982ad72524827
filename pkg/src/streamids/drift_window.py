"""Adaptive sliding window over a 0/1 error stream (exponential-histogram buckets)."""

from __future__ import annotations

import math

STABLE = "stable"
WARNING = "warning"
DRIFT = "drift"


class DriftWindow:
    """Detects a change in the mean of a bit stream.

    Every ``clock`` updates, the window is cut at each bucket boundary and the
    two sub-window means are compared against a Hoeffding-style radius at
    confidence ``delta`` (drift) and ``warning_factor * delta`` (warning). On
    drift the oldest buckets are discarded until no cut separates the window.

    ``increased`` tells whether the last detected change raised the mean.
    """

    def __init__(self, delta: float = 0.002, warning_factor: float = 10.0, clock: int = 32,
                 max_buckets: int = 5, min_window: int = 10, min_sub_window: int = 5):
        if not 0 < delta < 1:
            raise ValueError("delta must be in (0, 1)")
        self.delta = delta
        self.warning_delta = min(delta * warning_factor, 0.999)
        self.clock = clock
        self.max_buckets = max_buckets
        self.min_window = min_window
        self.min_sub_window = min_sub_window
        # rows[i] holds buckets of 2**i items, oldest first; each bucket is [total, m2]
        self.rows: list[list[list[float]]] = [[]]
        self.width = 0
        self.total = 0.0
        self.m2 = 0.0
        self.ticks = 0
        self.state = STABLE
        self.increased = False

    @property
    def mean(self) -> float:
        return self.total / self.width if self.width else 0.0

    @property
    def variance(self) -> float:
        return self.m2 / self.width if self.width else 0.0

    def update(self, bit: float) -> str:
        if self.width:
            mean = self.total / self.width
            self.m2 += self.width * (bit - mean) ** 2 / (self.width + 1)
        self.width += 1
        self.total += bit
        self.rows[0].append([float(bit), 0.0])
        self._compress()
        self.ticks += 1
        if self.ticks % self.clock or self.width < self.min_window:
            return self.state if self.state != DRIFT else STABLE
        drift, warn, up = self._scan()
        if drift:
            self.increased = up
            while drift:
                self._drop_oldest()
                drift, _, _ = self._scan()
            self.state = DRIFT
        elif warn:
            self.increased = up
            self.state = WARNING
        else:
            self.state = STABLE
        return self.state

    def _compress(self) -> None:
        i = 0
        while len(self.rows[i]) > self.max_buckets:
            (t1, v1), (t2, v2) = self.rows[i][0], self.rows[i][1]
            del self.rows[i][:2]
            n = 1 << i
            m2 = v1 + v2 + n * n * (t1 / n - t2 / n) ** 2 / (2 * n)
            if i + 1 == len(self.rows):
                self.rows.append([])
            self.rows[i + 1].append([t1 + t2, m2])
            i += 1

    def _drop_oldest(self) -> None:
        i = len(self.rows) - 1
        while not self.rows[i]:
            i -= 1
        t, v = self.rows[i].pop(0)
        n = 1 << i
        new_w = self.width - n
        if new_w <= 0:
            self.rows = [[]]
            self.width, self.total, self.m2 = 0, 0.0, 0.0
            return
        rest_mean = (self.total - t) / new_w
        self.m2 -= v + n * new_w * (t / n - rest_mean) ** 2 / self.width
        self.m2 = max(self.m2, 0.0)
        self.width = new_w
        self.total -= t
        while len(self.rows) > 1 and not self.rows[-1]:
            self.rows.pop()

    def _radius(self, n0: int, n1: int, delta: float) -> float:
        dd = math.log(2.0 * math.log(self.width) / delta)
        m = 1.0 / n0 + 1.0 / n1
        return math.sqrt(2.0 * m * self.variance * dd) + 2.0 / 3.0 * m * dd

    def _scan(self) -> tuple[bool, bool, bool]:
        """Test every bucket boundary; returns (drift, warning, mean_went_up)."""
        if self.width < self.min_window:
            return False, False, False
        n0, t0 = 0, 0.0
        warn = False
        up = False
        for i in range(len(self.rows) - 1, -1, -1):
            size = 1 << i
            for t, _ in self.rows[i]:
                n0 += size
                t0 += t
                n1 = self.width - n0
                if n0 < self.min_sub_window or n1 < self.min_sub_window:
                    continue
                diff = (self.total - t0) / n1 - t0 / n0
                gap = abs(diff)
                if gap > self._radius(n0, n1, self.delta):
                    return True, True, diff > 0
                if not warn and gap > self._radius(n0, n1, self.warning_delta):
                    warn, up = True, diff > 0
        return False, warn, up


def drift_window_update(window: DriftWindow, error_bit: int) -> str:
    if error_bit not in (0, 1):
        raise ValueError("error_bit must be 0 or 1")
    return window.update(error_bit)
