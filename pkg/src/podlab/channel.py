"""Event-driven emulator of the centralised controller's communication channel.

Models stochastic per-message delay, a limited message rate, optional value
quantization, and the measurement pipeline used to characterise the channel
(delay campaign and per-second throughput statistics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .errors import ChannelError

__all__ = [
    "DelayDistribution",
    "ChannelConfig",
    "DelayLog",
    "default_delay_distribution",
    "sample_delay",
    "ChannelInstance",
    "transmit",
    "measure_campaign",
    "throughput_stats",
    "nyquist_limit",
]


@dataclass(frozen=True)
class DelayDistribution:
    """Delay PDF f(theta) with support [tau_min, tau_max] and mean theta."""

    kind: str  # empirical-histogram | uniform | truncated-normal | point-mass
    tau_min: float
    tau_max: float
    mean_s: float
    bin_edges: tuple[float, ...] = ()
    bin_probs: tuple[float, ...] = ()
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if not (0 <= self.tau_min <= self.tau_max):
            raise ChannelError("require 0 <= tau_min <= tau_max")
        if self.kind == "empirical-histogram":
            total = sum(self.bin_probs)
            if abs(total - 1.0) > 1e-12:
                raise ChannelError(f"histogram mass {total} != 1")

    @classmethod
    def point_mass(cls, value: float) -> "DelayDistribution":
        return cls(kind="point-mass", tau_min=value, tau_max=value, mean_s=value)

    @classmethod
    def uniform(cls, low: float, high: float) -> "DelayDistribution":
        if not low < high:
            raise ChannelError("uniform delay requires low < high")
        return cls(kind="uniform", tau_min=low, tau_max=high, mean_s=0.5 * (low + high))

    @classmethod
    def empirical(cls, bin_edges, bin_probs) -> "DelayDistribution":
        edges = tuple(float(e) for e in bin_edges)
        probs = tuple(float(p) for p in bin_probs)
        if len(edges) != len(probs) + 1:
            raise ChannelError("need len(bin_edges) == len(bin_probs) + 1")
        if any(b < 0 for b in probs):
            raise ChannelError("negative bin probability")
        if any(e1 <= e0 for e0, e1 in zip(edges, edges[1:])):
            raise ChannelError("bin edges must be strictly increasing")
        centers = [0.5 * (e0 + e1) for e0, e1 in zip(edges, edges[1:])]
        mean = sum(p * c for p, c in zip(probs, centers))
        return cls(
            kind="empirical-histogram",
            tau_min=edges[0],
            tau_max=edges[-1],
            mean_s=mean,
            bin_edges=edges,
            bin_probs=probs,
        )

    @classmethod
    def truncated_normal(cls, mu: float, sigma: float, low: float, high: float) -> "DelayDistribution":
        if sigma <= 0 or not low < high:
            raise ChannelError("truncated normal requires sigma > 0 and low < high")
        a, b = (low - mu) / sigma, (high - mu) / sigma
        mean = float(scipy.stats.truncnorm.mean(a, b, loc=mu, scale=sigma))
        return cls(
            kind="truncated-normal", tau_min=low, tau_max=high, mean_s=mean, mu=mu, sigma=sigma
        )

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "tau_min": self.tau_min, "tau_max": self.tau_max,
             "mean_s": self.mean_s}
        if self.kind == "empirical-histogram":
            d["bin_edges"] = list(self.bin_edges)
            d["bin_probs"] = list(self.bin_probs)
        elif self.kind == "truncated-normal":
            d["mu"] = self.mu
            d["sigma"] = self.sigma
        return d


def default_delay_distribution(
    mean_s: float = 0.3,
    spread: float = 0.27,
    support: tuple[float, float] = (0.05, 1.5),
    n_bins: int = 20,
) -> DelayDistribution:
    """Right-skewed 20-bin stand-in histogram with an exactly pinned mean.

    The shape is a discretised lognormal; the location parameter is solved by
    bisection so the histogram mean (uniform-within-bin convention) equals
    ``mean_s`` to machine precision.
    """
    edges = np.linspace(support[0], support[1], n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    s2 = math.log(1.0 + spread**2)

    def hist_mean(mu: float) -> float:
        pdf = np.exp(-((np.log(centers) - mu) ** 2) / (2.0 * s2)) / centers
        probs = pdf / pdf.sum()
        return float(np.dot(probs, centers))

    lo, hi = math.log(mean_s) - 1.0, math.log(mean_s) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hist_mean(mid) < mean_s:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    pdf = np.exp(-((np.log(centers) - mu) ** 2) / (2.0 * s2)) / centers
    probs = pdf / pdf.sum()
    # re-normalise exactly and push any residual rounding into the modal bin
    probs[int(np.argmax(probs))] += 1.0 - probs.sum()
    return DelayDistribution.empirical(edges, probs)


@dataclass(frozen=True)
class ChannelConfig:
    delay: DelayDistribution
    rate_hz: float
    quantization_step: float = 0.0
    seed: int = 0
    emission: str = "jittered-periodic"  # or "poisson"

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise ChannelError("rate_hz must be positive")
        if self.quantization_step < 0:
            raise ChannelError("quantization_step must be non-negative")
        if self.emission not in ("jittered-periodic", "poisson"):
            raise ChannelError(f"unknown emission mode {self.emission!r}")


@dataclass(frozen=True)
class DelayLog:
    records: tuple[tuple[float, float], ...]  # (t_sent, t_received)

    def __post_init__(self):
        if any(r < s for s, r in self.records):
            raise ChannelError("negative delay in log")

    @property
    def delays(self) -> np.ndarray:
        return np.array([r - s for s, r in self.records])

    @property
    def t_sent(self) -> np.ndarray:
        return np.array([s for s, _ in self.records])

    @property
    def t_received(self) -> np.ndarray:
        return np.array([r for _, r in self.records])

    def csv_rows(self) -> list[str]:
        rows = ["t_sent_s,t_received_s"]
        rows.extend(f"{s:.9g},{r:.9g}" for s, r in self.records)
        return rows


def sample_delay(dist: DelayDistribution, rng: np.random.Generator) -> float:
    """One delay draw; deterministic for a fixed generator state."""
    if dist.kind == "point-mass":
        return dist.mean_s
    if dist.kind == "uniform":
        return float(rng.uniform(dist.tau_min, dist.tau_max))
    if dist.kind == "empirical-histogram":
        edges = np.asarray(dist.bin_edges)
        cum = np.cumsum(dist.bin_probs)
        u = rng.uniform()
        i = int(np.searchsorted(cum, u * cum[-1], side="right"))
        i = min(i, len(dist.bin_probs) - 1)
        return float(rng.uniform(edges[i], edges[i + 1]))
    if dist.kind == "truncated-normal":
        # inverse-CDF through the uniform keeps the draw stream reproducible
        a = (dist.tau_min - dist.mu) / dist.sigma
        b = (dist.tau_max - dist.mu) / dist.sigma
        u = rng.uniform()
        return float(scipy.stats.truncnorm.ppf(u, a, b, loc=dist.mu, scale=dist.sigma))
    raise ChannelError(f"unknown delay kind {dist.kind!r}")


def _emission_times(cfg: ChannelConfig, duration_s: float, rng: np.random.Generator) -> np.ndarray:
    """Message send instants over [0, duration]."""
    n = int(math.ceil(duration_s * cfg.rate_hz)) + 4
    period = 1.0 / cfg.rate_hz
    if cfg.emission == "jittered-periodic":
        intervals = period * (1.0 + rng.uniform(-0.2, 0.2, size=n))
    else:
        intervals = rng.exponential(period, size=n)
    t = np.cumsum(intervals)
    return t[t <= duration_s]


class ChannelInstance:
    """Single-owner event queue for one receiver.

    Send instants and per-message delays are drawn up-front from the
    instance's RNG stream; message payloads are captured online as simulated
    time passes each send instant.  Out-of-order arrivals older than the
    currently applied message are discarded (latest-timestamp-wins) and the
    receiver holds the last applied value.
    """

    def __init__(self, cfg: ChannelConfig, duration_s: float, rng: np.random.Generator | None = None):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.t_send = _emission_times(cfg, duration_s, rng)
        delays = np.array([sample_delay(cfg.delay, rng) for _ in self.t_send])
        self.t_arrive = self.t_send + delays
        self._values = np.zeros_like(self.t_send)
        self._arrival_order = np.argsort(self.t_arrive, kind="stable")
        self._send_ptr = 0
        self._arr_ptr = 0
        self._applied_send_t = -math.inf
        self._held = 0.0
        self.applied_times: list[float] = []

    def _quantize(self, v: float) -> float:
        q = self.cfg.quantization_step
        if q > 0:
            return round(v / q) * q
        return v

    def step(self, t: float, current_value: float) -> float:
        """Advance to time t, capturing sends and applying arrivals due by t."""
        while self._send_ptr < len(self.t_send) and self.t_send[self._send_ptr] <= t:
            self._values[self._send_ptr] = self._quantize(current_value)
            self._send_ptr += 1
        while self._arr_ptr < len(self._arrival_order):
            i = self._arrival_order[self._arr_ptr]
            if self.t_arrive[i] > t:
                break
            if i >= self._send_ptr:
                # not sent yet at this resolution (zero-delay edge); wait
                break
            self._arr_ptr += 1
            if self.t_send[i] > self._applied_send_t:
                self._applied_send_t = self.t_send[i]
                self._held = self._values[i]
                self.applied_times.append(float(self.t_arrive[i]))
        return self._held


def transmit(
    inputs: np.ndarray,
    sample_rate_hz: float,
    cfg: ChannelConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pass a uniformly sampled signal through the channel.

    Returns the receiver-side zero-order-hold trace on the same time grid.
    """
    if sample_rate_hz < 100.0 * cfg.rate_hz:
        raise ChannelError(
            f"simulation rate {sample_rate_hz:g} Hz too low: require >= "
            f"{100.0 * cfg.rate_hz:g} Hz for rate_hz={cfg.rate_hz:g}"
        )
    u = np.asarray(inputs, dtype=float)
    dt = 1.0 / sample_rate_hz
    inst = ChannelInstance(cfg, duration_s=len(u) * dt, rng=rng)
    out = np.empty_like(u)
    for k in range(len(u)):
        out[k] = inst.step(k * dt, u[k])
    return out


def measure_campaign(
    cfg: ChannelConfig, n_messages: int, rng: np.random.Generator | None = None
) -> DelayLog:
    """Delay-measurement campaign: one message per second, n_messages total."""
    if n_messages < 1:
        raise ChannelError("n_messages must be >= 1")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    records = []
    for i in range(n_messages):
        t_sent = float(i)
        records.append((t_sent, t_sent + sample_delay(cfg.delay, rng)))
    return DelayLog(tuple(records))


def throughput_stats(
    events, window_s: float = 1.0
) -> tuple[dict[int, float], int]:
    """Histogram of message counts per window, plus the modal count.

    ``events`` is a DelayLog (arrival times are used) or an array of event
    times.
    """
    if isinstance(events, DelayLog):
        times = events.t_received
    else:
        times = np.asarray(events, dtype=float)
    if len(times) == 0:
        raise ChannelError("no events")
    span = times.max() - times.min()
    if span < 10.0 * window_s:
        raise ChannelError(
            f"trace spans {span:g} s; need at least {10.0 * window_s:g} s"
        )
    # anchor windows at multiples of window_s so "per second" means calendar
    # seconds, not offsets from the first arrival
    start = math.floor(times.min() / window_s) * window_s
    stop = math.ceil(times.max() / window_s) * window_s
    edges = np.arange(start, stop + 0.5 * window_s, window_s)
    counts = np.histogram(times, bins=edges)[0]
    vals, freq = np.unique(counts, return_counts=True)
    hist = {int(v): float(c) / counts.size for v, c in zip(vals, freq)}
    mode = int(vals[int(np.argmax(freq))])
    return hist, mode


def nyquist_limit(f_s: float) -> float:
    """Highest frequency conveyable by a channel sampling at f_s messages/s."""
    if not f_s > 0:
        raise ChannelError("message rate must be positive")
    return f_s / 2.0
