import numpy as np
import pytest

import nphmm.fit as fit_module
from nphmm.hmm import GaussianEmission, HmmParams

from oracles import random_stochastic

RECORDED_TRACES = []
ACCEPTANCE_LINES = []
_original_run_em = fit_module._run_em


def _recording_run_em(*args, **kwargs):
    params, trace, converged = _original_run_em(*args, **kwargs)
    RECORDED_TRACES.append(list(trace))
    return params, trace, converged


def pytest_configure(config):
    fit_module._run_em = _recording_run_em


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if RECORDED_TRACES:
        worst = min(np.min(np.diff(t)) if len(t) > 1 else 0.0 for t in RECORDED_TRACES)
        terminalreporter.write_line(
            f"EM traces recorded: {len(RECORDED_TRACES)}, worst per-step change {worst:.3g}")


def pytest_sessionfinish(session, exitstatus):
    bad = [t for t in RECORDED_TRACES if len(t) > 1 and np.min(np.diff(t)) < -1e-8]
    if bad and session.exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture
def acceptance_line():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
    return record


def random_gaussian_hmm(rng, K, floor=0.0):
    Q = random_stochastic(rng, K, floor)
    pi = floor + (1 - K * floor) * rng.dirichlet(np.ones(K))
    emissions = [GaussianEmission(rng.normal(0, 2), rng.uniform(0.5, 2.0)) for _ in range(K)]
    return HmmParams(pi, Q, emissions)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_collection_modifyitems(session, config, items):
    # acceptance criteria run after the unit tests so that the EM-ascent
    # criterion sees every trace recorded in the session
    def rank(item):
        if item.module.__name__.endswith("test_acceptance"):
            return 2 if "trace" in item.name else 1
        return 0
    items.sort(key=rank)
