"""Inline recipe assertions.

A recipe's ``expect`` list holds checks over the JSON summaries of its runs::

    expect:
      - metric: summary.overhead.mean     # dotted path into the run's JSON
        run: flood                        # run name; omitted = every run
        approx: 8
        rel: 0.10
      - metric: summary.latency.p95
        max: 1.5
      - metric: summary.overhead.p95
        run: coded
        lt: {run: flood, factor: 0.25}    # coded < 0.25 * flood

Bounds: ``min``, ``max``, ``approx`` (with ``rel`` or ``abs``) and the
cross-run comparisons ``lt``, ``le``, ``gt``, ``ge``.
"""

import operator

from .errors import ConfigError

_CMP = {"lt": operator.lt, "le": operator.le, "gt": operator.gt, "ge": operator.ge}
_KEYS = {"metric", "run", "min", "max", "approx", "rel", "abs", "note"} | set(_CMP)


def lookup(summary, dotted):
    cur = summary
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(dotted)
        cur = cur[part]
    return cur


def validate_expect(expect, run_names):
    if expect is None:
        return []
    if not isinstance(expect, list):
        raise ConfigError("expect: expected a list of checks")
    for i, chk in enumerate(expect):
        where = f"expect[{i}]"
        if not isinstance(chk, dict) or "metric" not in chk:
            raise ConfigError(f"{where}: each check needs a 'metric'")
        extra = set(chk) - _KEYS
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
        if chk.get("run") is not None and chk["run"] not in run_names:
            raise ConfigError(f"{where}.run: no run named {chk['run']!r}")
        for op in _CMP:
            ref = chk.get(op)
            if ref is not None and (not isinstance(ref, dict) or ref.get("run") not in run_names):
                raise ConfigError(f"{where}.{op}: needs {{run: <name>}} naming a run of this recipe")
        if "approx" in chk and "rel" not in chk and "abs" not in chk:
            raise ConfigError(f"{where}: 'approx' needs 'rel' or 'abs'")
    return expect


def check(expect, results):
    """Evaluate checks against ``{run name: JSON summary}``.

    Returns ``[(ok, message)]``; a missing metric counts as a failure.
    """
    out = []
    for chk in expect:
        metric = chk["metric"]
        runs = [chk["run"]] if chk.get("run") is not None else list(results)
        for name in runs:
            try:
                value = lookup(results[name], metric)
            except KeyError:
                out.append((False, f"{name}: {metric} missing"))
                continue
            out.extend(_check_one(chk, name, metric, value, results))
    return out


def _check_one(chk, name, metric, value, results):
    res = []
    label = f"{name}: {metric} = {_num(value)}"
    if value is None:
        return [(False, f"{label} (no value)")]
    if "min" in chk:
        res.append((value >= chk["min"], f"{label} >= {chk['min']}"))
    if "max" in chk:
        res.append((value <= chk["max"], f"{label} <= {chk['max']}"))
    if "approx" in chk:
        target = chk["approx"]
        tol = chk["rel"] * abs(target) if "rel" in chk else chk["abs"]
        res.append((abs(value - target) <= tol, f"{label} ~ {target} +- {_num(tol)}"))
    for op, fn in _CMP.items():
        ref = chk.get(op)
        if ref is None:
            continue
        try:
            other = lookup(results[ref["run"]], ref.get("metric", metric))
        except KeyError:
            other = None
        if other is None:
            res.append((False, f"{label} {op} ? ({ref['run']} has no value)"))
            continue
        bound = other * ref.get("factor", 1.0) + ref.get("offset", 0.0)
        res.append((fn(value, bound), f"{label} {op} {_num(bound)} (from {ref['run']})"))
    return res


def _num(x):
    return f"{x:.6g}" if isinstance(x, (int, float)) else repr(x)
