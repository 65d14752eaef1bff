"""Latency budgets shared by every provider call.

A Budget tracks how much of a deadline one stage has spent. Providers that
inject latency (scripted backends) call ``spend`` instead of sleeping
directly, so the same code path supports two modes:

* real mode — ``spend`` actually sleeps and ``elapsed`` is wall-clock time,
  which is what the live service uses;
* simulated mode — ``spend`` only accounts the time, which is what the
  replay harness uses to keep seeded runs byte-identical and fast.

The 100 ms grace constant bounds how far past its deadline any call may
return in real mode.
"""

from __future__ import annotations

import time

from .errors import DeadlineExceeded

DEADLINE_GRACE = 0.100  # seconds a call may overshoot its deadline


class Budget:
    """Remaining-time tracker for one stage or one provider call."""

    def __init__(self, deadline: float, *, real_time: bool = True):
        if deadline <= 0:
            raise ValueError("deadline must be positive")
        self.deadline = float(deadline)
        self.real_time = real_time
        self._start = time.monotonic()
        self._simulated = 0.0

    def elapsed(self) -> float:
        if self.real_time:
            return time.monotonic() - self._start
        return self._simulated

    def remaining(self) -> float:
        return max(0.0, self.deadline - self.elapsed())

    @property
    def expired(self) -> bool:
        return self.remaining() <= 0.0

    def spend(self, duration: float) -> None:
        """Consume ``duration`` seconds of the budget, raising if it does
        not fit. In real mode the call sleeps for the time it consumes, so a
        too-slow scripted provider still returns by the deadline."""
        if duration < 0:
            raise ValueError("duration must be non-negative")
        left = self.remaining()
        if duration > left:
            if self.real_time and left > 0:
                time.sleep(left)
            else:
                self._simulated += left
            raise DeadlineExceeded(elapsed=self.elapsed())
        if self.real_time:
            if duration > 0:
                time.sleep(duration)
        else:
            self._simulated += duration

    def check(self) -> None:
        """Raise DeadlineExceeded if the budget is already gone."""
        if self.expired:
            raise DeadlineExceeded(elapsed=self.elapsed())
