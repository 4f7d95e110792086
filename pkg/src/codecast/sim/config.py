"""Experiment configuration: YAML in, validated dataclasses out.

Every field has a default; protocol defaults are the evaluation parameters of
the design (k=50, Robust Soliton c=0.03 / delta=0.5, tau=0.5 ms, gamma=0.02,
alpha=0.1, ell=128).  Errors name the offending field by its dotted path.
"""

import copy
import math
from dataclasses import asdict, dataclass, field, fields

import yaml

from ..errors import ConfigError
from ..node import ProtocolParams

SCHEMES = ("coded", "flooding", "bitcoin", "shrec")
ADVERSARY_MODES = ("none", "censor", "silent", "zero_delay")


@dataclass
class TopologyConfig:
    generator: str = "random_regular"  # random_regular | file
    n: int = 100
    degree: int = 8
    file: str = None
    delay_model: str = "lognormal"  # lognormal | constant | file
    median_ms: float = 70.0  # lognormal mu = ln(median_ms)
    sigma: float = 0.5
    constant_ms: float = 50.0


@dataclass
class WorkloadConfig:
    tps: float = 400.0  # aggregate over all transaction-creating nodes
    tx_size: int = 128
    sizes: dict = None  # {size: weight}; set for variable-size mode (fragmented)


@dataclass
class AdversaryConfig:
    mode: str = "none"
    fraction: float = 0.0  # censor / silent: share of nodes
    count: int = 0  # zero_delay: attacker nodes added
    censored_fraction: float = 0.0


@dataclass
class BitcoinConfig:
    jitter_max: float = 0.0  # seconds


@dataclass
class ShrecConfig:
    request_timeout: float = 30.0  # seconds


@dataclass
class FloodingConfig:
    exclude_sender: bool = False


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    scheme: str = "coded"
    seed: int = 1
    duration: float = 100.0
    warmup: float = 0.2  # fraction of duration excluded from metrics
    drain: float = 10.0  # seconds simulated after the last transaction
    sample_interval: float = 1.0
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    bitcoin: BitcoinConfig = field(default_factory=BitcoinConfig)
    shrec: ShrecConfig = field(default_factory=ShrecConfig)
    flooding: FloodingConfig = field(default_factory=FloodingConfig)

    def validate(self):
        err = _err
        if self.scheme not in SCHEMES:
            err("scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.duration > 0:
            err("duration", "must be positive")
        if not 0 <= self.warmup < 1:
            err("warmup", "is a fraction in [0, 1)")
        if self.drain < 0:
            err("drain", "must be >= 0")
        if not self.sample_interval > 0:
            err("sample_interval", "must be positive")
        t = self.topology
        if t.generator not in ("random_regular", "file"):
            err("topology.generator", f"unknown generator {t.generator!r}")
        if t.generator == "file" and not t.file:
            err("topology.file", "required when generator is 'file'")
        if t.generator == "random_regular" and (t.degree < 1 or t.degree >= t.n or (t.n * t.degree) % 2):
            err("topology.degree", f"no {t.degree}-regular graph on {t.n} nodes")
        if t.delay_model not in ("lognormal", "constant", "file"):
            err("topology.delay_model", f"unknown model {t.delay_model!r}")
        if not t.median_ms > 0:
            err("topology.median_ms", "must be positive")
        if t.sigma < 0:
            err("topology.sigma", "must be >= 0")
        if t.constant_ms < 0:
            err("topology.constant_ms", "must be >= 0")
        w = self.workload
        if not w.tps > 0:
            err("workload.tps", "must be positive")
        if w.tx_size < 1:
            err("workload.tx_size", "must be >= 1")
        if w.sizes is not None:
            if not w.sizes or any(int(s) < 1 or float(v) < 0 for s, v in w.sizes.items()):
                err("workload.sizes", "needs positive sizes with non-negative weights")
            if self.scheme != "coded":
                err("workload.sizes", "variable-size mode is implemented for the coded scheme only")
        a = self.adversary
        if a.mode not in ADVERSARY_MODES:
            err("adversary.mode", f"must be one of {ADVERSARY_MODES}")
        if not 0 <= a.fraction < 1:
            err("adversary.fraction", "must lie in [0, 1)")
        if not 0 <= a.censored_fraction <= 1:
            err("adversary.censored_fraction", "must lie in [0, 1]")
        if a.count < 0:
            err("adversary.count", "must be >= 0")
        if self.bitcoin.jitter_max < 0:
            err("bitcoin.jitter_max", "must be >= 0")
        if not self.shrec.request_timeout > 0:
            err("shrec.request_timeout", "must be positive")
        try:
            self.protocol.validate()
        except ConfigError as e:
            raise ConfigError(str(e)) from None
        if self.workload.sizes is None and self.protocol.t != self.workload.tx_size:
            err("protocol.t", "must equal workload.tx_size")
        if self.workload.sizes is not None and self.protocol.t != self.protocol.ell:
            err("protocol.t", "must equal protocol.ell in variable-size mode")
        return self

    @property
    def measure_start(self):
        return self.warmup * self.duration

    @property
    def median_mu(self):
        return math.log(self.topology.median_ms)

    def to_dict(self):
        return asdict(self)


def _err(path, msg):
    raise ConfigError(f"{path}: {msg}")


_SECTIONS = {
    "topology": TopologyConfig,
    "workload": WorkloadConfig,
    "protocol": ProtocolParams,
    "adversary": AdversaryConfig,
    "bitcoin": BitcoinConfig,
    "shrec": ShrecConfig,
    "flooding": FloodingConfig,
}
_META_KEYS = {"runs", "expect", "output", "description", "budget_s"}


def _build(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        _err(path, "expected a mapping")
    names = {f.name for f in fields(cls) if not f.name.startswith("_")}
    unknown = set(data) - names
    if unknown:
        _err(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0], "unknown field")
    try:
        return cls(**data)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}" if path else str(e)) from None
    except TypeError as e:
        _err(path or "config", str(e))


def config_from_dict(data):
    data = dict(data or {})
    kwargs = {}
    for key in list(data):
        if key in _META_KEYS:
            data.pop(key)
    proto = dict(data.get("protocol") or {})
    if "t" not in proto:
        # the codeword payload size follows the workload unless pinned
        wl = data.get("workload") or {}
        if wl.get("sizes"):
            proto["t"] = proto.get("ell", ProtocolParams.ell)
        else:
            proto["t"] = wl.get("tx_size", WorkloadConfig.tx_size)
    data["protocol"] = proto
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _build(cls, data.pop(key), key)
    cfg = _build(ExperimentConfig, {**data, **kwargs}, "")
    return cfg.validate()


def set_dotted(data, dotted, value):
    cur = data
    parts = dotted.split(".")
    for p in parts[:-1]:
        nxt = cur.get(p)
        if nxt is None:
            nxt = cur[p] = {}
        elif not isinstance(nxt, dict):
            _err(dotted, "cannot descend into a scalar")
        cur = nxt
    cur[parts[-1]] = value


def expand_runs(raw):
    """Base config plus one override mapping per entry of ``runs``.

    Overrides use dotted keys (``bitcoin.jitter_max: 2.0``).  Without ``runs``
    the recipe describes a single experiment.
    """
    runs = raw.get("runs") or [{}]
    out = []
    for i, over in enumerate(runs):
        if not isinstance(over, dict):
            _err(f"runs[{i}]", "expected a mapping of dotted overrides")
        data = copy.deepcopy({k: v for k, v in raw.items() if k not in _META_KEYS})
        for dotted, value in over.items():
            set_dotted(data, dotted, value)
        try:
            out.append(config_from_dict(data))
        except ConfigError as e:
            raise ConfigError(f"runs[{i}]: {e}") from None
    return out


def load_recipe(path):
    with open(path) as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not valid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw
