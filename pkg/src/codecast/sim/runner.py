"""Build a network from an ExperimentConfig and run it."""

import logging
import time

import numpy as np

from ..errors import ConfigError
from .network import CENSOR, HONEST, SILENT, CodedNetwork, subseed
from .topology import load_topology, lognormal_delays, random_regular_topology

log = logging.getLogger(__name__)


def build_topology(cfg):
    t = cfg.topology
    if t.generator == "file":
        topo = load_topology(t.file)
    else:
        topo = random_regular_topology(t.n, t.degree, seed=subseed(cfg.seed, "topology"))
    if t.delay_model == "lognormal":
        topo = lognormal_delays(topo, cfg.median_mu, t.sigma, seed=subseed(cfg.seed, "delays"))
    elif t.delay_model == "constant":
        topo = topo.with_delays([t.constant_ms] * len(topo.edges))
    elif t.generator != "file":
        raise ConfigError("topology.delay_model: 'file' needs generator 'file'")
    return topo


def assign_roles(cfg, topo):
    """Returns (topology, roles, creators).

    Adversarial nodes never create transactions and are not measured.
    ``zero_delay`` appends attacker nodes linked to everyone with no latency.
    """
    a = cfg.adversary
    n = topo.n
    roles = [HONEST] * n
    if a.mode in ("censor", "silent"):
        bad = int(round(a.fraction * n))
        if bad >= n:
            raise ConfigError("adversary.fraction leaves no honest node")
        rng = np.random.default_rng(subseed(cfg.seed, "roles"))
        for i in sorted(rng.permutation(n)[:bad].tolist()):
            roles[i] = CENSOR if a.mode == "censor" else SILENT
    elif a.mode == "zero_delay" and a.count:
        topo = topo.add_hub(a.count, 0.0)
        roles += [CENSOR] * a.count
    creators = [i for i in range(n) if roles[i] == HONEST]
    return topo, roles, creators


def network_class(scheme):
    if scheme == "coded":
        return CodedNetwork
    from . import baselines
    return {"flooding": baselines.FloodingNetwork, "bitcoin": baselines.BitcoinNetwork,
            "shrec": baselines.ShrecNetwork}[scheme]


def run_simulation(cfg, topology=None):
    """Run one experiment; returns a MetricsReport."""
    cfg.validate()
    topo = topology if topology is not None else build_topology(cfg)
    topo, roles, creators = assign_roles(cfg, topo)
    net = network_class(cfg.scheme)(cfg, topo, roles, creators)
    t0 = time.perf_counter()
    report = net.run()
    log.info("%s: %d events in %.1f s", cfg.name, net.q.processed, time.perf_counter() - t0)
    report.config = cfg.to_dict()
    report.network = net
    return report
