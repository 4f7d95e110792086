"""Per-node latency / delivery / overhead and their cross-node summaries."""

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

CSV_COLUMNS = ("node_id", "mean_latency_s", "delivery_rate", "overhead")


def report_schema():
    """JSON schema that every ``MetricsReport.to_json`` document satisfies."""
    return json.loads(resources.files("codecast").joinpath("schemas", "report.schema.json").read_text())


def summarize(values):
    """mean, p5, p95 (linear interpolation) of a list; NaN-free input only."""
    if not values:
        return {"mean": None, "p5": None, "p95": None}
    a = np.asarray(values, dtype=float)
    return {
        "mean": float(a.mean()),
        "p5": float(np.percentile(a, 5)),
        "p95": float(np.percentile(a, 95)),
    }


@dataclass
class NodeMetrics:
    node_id: int
    mean_latency_s: float
    delivery_rate: float
    overhead: float
    received: int = 0
    expected: int = 0
    censored_received: int = 0
    censored_expected: int = 0
    censored_latency_s: float = None


@dataclass
class MetricsReport:
    name: str
    scheme: str
    seed: int
    nodes: list
    summary: dict
    censored: dict = None
    link_rates: list = field(default_factory=list)  # [(u, v, codewords/s)]
    time_series: list = field(default_factory=list)  # [{"t": ..., ...}]
    counters: dict = field(default_factory=dict)
    config: dict = None

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for m in self.nodes:
            w.writerow([m.node_id, _fmt(m.mean_latency_s), _fmt(m.delivery_rate), _fmt(m.overhead)])
        return buf.getvalue()

    def to_json_dict(self):
        return {
            "name": self.name,
            "scheme": self.scheme,
            "seed": self.seed,
            "summary": self.summary,
            "censored": self.censored,
            "link_rates": [{"src": u, "dst": v, "rate": r} for u, v, r in self.link_rates],
            "time_series": self.time_series,
            "counters": self.counters,
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def get(self, dotted):
        """Look up ``summary.overhead.p95``-style paths in the JSON view."""
        cur = self.to_json_dict()
        for part in dotted.split("."):
            if not isinstance(cur, dict) or part not in cur:
                raise KeyError(dotted)
            cur = cur[part]
        return cur

    def p95_line(self):
        s = self.summary
        return (f"{self.name} [{self.scheme}] p95 latency {_fmt(s['latency']['p95'])} s | "
                f"p5 delivery {_fmt(s['delivery']['p5'])} | p95 overhead {_fmt(s['overhead']['p95'])}")


def _fmt(x):
    if x is None:
        return ""
    return f"{x:.6f}"


class Collector:
    """Accumulates deliveries at measured nodes for transactions created in the window.

    A transaction counts when it was created in ``[start, end]``; a node's
    own transactions are excluded from its numerator and denominator.
    """

    def __init__(self, n, measured, start, end, t):
        self.n = n
        self.measured = set(measured)
        self.start = start
        self.end = end
        self.t = t
        self.recv = [0] * n
        self.lat = [0.0] * n
        self.c_recv = [0] * n
        self.c_lat = [0.0] * n
        self.created = 0
        self.created_by = [0] * n
        self.c_created = 0
        self.c_created_by = [0] * n
        self.bytes_at = {}
        self.decoded_at = {}

    def on_create(self, tx):
        if self.start <= tx.created_at <= self.end:
            self.created += 1
            self.created_by[tx.origin] += 1
            if tx.censored:
                self.c_created += 1
                self.c_created_by[tx.origin] += 1

    def on_deliver(self, node, tx, now):
        if node not in self.measured or tx.origin == node:
            return
        ca = tx.created_at
        if ca < self.start or ca > self.end:
            return
        self.recv[node] += 1
        self.lat[node] += now - ca
        if tx.censored:
            self.c_recv[node] += 1
            self.c_lat[node] += now - ca

    def snapshot(self, label, bytes_down, decoded_bytes):
        self.bytes_at[label] = list(bytes_down)
        self.decoded_at[label] = list(decoded_bytes)

    def node_metrics(self):
        out = []
        b0, b1 = self.bytes_at["start"], self.bytes_at["end"]
        d0, d1 = self.decoded_at["start"], self.decoded_at["end"]
        for i in sorted(self.measured):
            expected = self.created - self.created_by[i]
            c_expected = self.c_created - self.c_created_by[i]
            recv = self.recv[i]
            dec = d1[i] - d0[i]
            out.append(NodeMetrics(
                node_id=i,
                mean_latency_s=self.lat[i] / recv if recv else None,
                delivery_rate=recv / expected if expected else None,
                overhead=(b1[i] - b0[i]) / dec if dec else None,
                received=recv,
                expected=expected,
                censored_received=self.c_recv[i],
                censored_expected=c_expected,
                censored_latency_s=self.c_lat[i] / self.c_recv[i] if self.c_recv[i] else None,
            ))
        return out

    def summary(self, nodes):
        def col(name):
            return [getattr(m, name) for m in nodes if getattr(m, name) is not None]

        return {
            "latency": summarize(col("mean_latency_s")),
            "delivery": summarize(col("delivery_rate")),
            "overhead": summarize(col("overhead")),
            "created": self.created,
            "nodes": len(nodes),
        }

    def censored_summary(self, nodes):
        if not self.c_created:
            return None
        recv = sum(m.censored_received for m in nodes)
        expected = sum(m.censored_expected for m in nodes)
        per_node = [m.censored_received / m.censored_expected for m in nodes if m.censored_expected]
        lat = sum(self.c_lat[m.node_id] for m in nodes)
        return {
            "created": self.c_created,
            "delivery": recv / expected if expected else None,
            "delivery_nodes": summarize(per_node),
            "latency_mean": lat / recv if recv else None,
        }
