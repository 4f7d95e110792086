"""Per-link MIMD codeword rate controller.

Each codeword sent shrinks the rate by the factor ``1 - alpha*gamma``; each
loss event reported by the receiver grows it by ``1 + alpha``.  In expectation
the rate is stationary exactly when the receiver's loss frequency is
``gamma``.
"""

from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_GAMMA = 0.02
DEFAULT_ALPHA = 0.1
DEFAULT_TAU = 0.0005
DEFAULT_R0 = 100.0
DEFAULT_R_MIN = 1.0
DEFAULT_R_MAX = 1e6


@dataclass
class RateController:
    r: float = DEFAULT_R0
    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    r_min: float = DEFAULT_R_MIN
    r_max: float = DEFAULT_R_MAX
    next_send: float = 0.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.r_min <= self.r_max:
            raise ConfigError(f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        self.r = min(self.r_max, max(self.r_min, float(self.r)))
        self._down = 1.0 - self.alpha * self.gamma
        self._up = 1.0 + self.alpha

    def on_codeword_sent(self):
        r = self.r * self._down
        self.r = r if r > self.r_min else self.r_min
        return self.r

    def on_loss_report(self, events=1):
        if events < 1:
            raise ValueError(f"a loss report carries at least one event, got {events}")
        r = self.r
        for _ in range(events):
            r *= self._up
            if r >= self.r_max:
                r = self.r_max
                break
        self.r = r
        return r

    def next_send_time(self, now):
        self.next_send = now + 1.0 / self.r
        return self.next_send
