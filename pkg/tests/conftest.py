import pytest


def pytest_addoption(parser):
    parser.addoption("--paper-scale", action="store_true", default=False,
                     help="run full-size experiments (hours)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--paper-scale"):
        return
    skip = pytest.mark.skip(reason="paper-scale run; enable with --paper-scale")
    for item in items:
        if "paper_scale" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, whatever the verbosity."""
    rows = {}
    for outcome in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            if rep.when != "call" and outcome not in ("skipped", "error"):
                continue
            detail = dict(rep.user_properties).get("detail", "")
            if outcome == "skipped" and not detail:
                detail = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else ""
            rows[nodeid] = (outcome.upper(), detail)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (status, detail) in sorted(rows.items()):
        name = nodeid.split("::")[-1].removeprefix("test_")
        terminalreporter.write_line(f"{status:7s} {name}: {detail}")


import numpy as np
import scipy.sparse as sp

from rcvalley.esn import EsnHyperParams, EsnModel, InputMap, make_input_map
from rcvalley.targets.series import Encoding, FieldSeries
from rcvalley.topology import (ReservoirNetwork, TopologyKind, TopologySpec,
                               build_reservoir)


def small_model(n=32, m=4, rho=0.9, alpha=0.5, ridge=1e-6, transient=5, seed=0):
    hyper = EsnHyperParams(n=n, input_dim=m, input_scale=alpha, ridge=ridge,
                           transient_steps=transient)
    res = build_reservoir(TopologySpec(TopologyKind.DIRECTED_RANDOM, n, 3.0, seed=seed),
                          rho, weight_seed=seed + 1)
    return EsnModel(hyper, make_input_map(n, m, alpha, seed + 2), res)


def series_of(data, dt=1.0):
    data = np.asarray(data, dtype=float)
    return FieldSeries(data, dt, np.arange(data.shape[0], dtype=float), Encoding.REAL)


def explicit_model(w_res, w_in_values, input_dim=1, readout=None, ridge=0.0):
    w_res = sp.csr_matrix(np.atleast_2d(w_res))
    n = w_res.shape[0]
    hyper = EsnHyperParams(n=n, input_dim=input_dim, ridge=ridge, transient_steps=0)
    per = n // input_dim
    w_in = sp.csr_matrix((np.asarray(w_in_values, float), np.repeat(np.arange(input_dim), per),
                          np.arange(n + 1)), shape=(n, input_dim))
    rho = float(np.max(np.abs(np.linalg.eigvals(w_res.toarray())))) if n else 0.0
    return EsnModel(hyper, InputMap(w_in), ReservoirNetwork(w_res, rho), readout)
