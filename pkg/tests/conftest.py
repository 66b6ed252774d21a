"""Shared fixtures: small discretisations and cached runs of the bundled configs."""

from __future__ import annotations

import numpy as np
import pytest

from dampedplate import DomainSpec, build_operator
from dampedplate.config import parse_config, shipped_config

PI2 = np.pi**2


@pytest.fixture
def square8():
    dom = DomainSpec(2, (1.0, 1.0), 8)
    return dom, build_operator(dom, "plate")


@pytest.fixture
def interval16():
    dom = DomainSpec(1, (1.0,), 16)
    return dom, build_operator(dom, "wave")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class ShippedRuns:
    """Runs each bundled config at most once per test session."""

    def __init__(self, base):
        self.base = base
        self._cache = {}

    def config(self, name, overrides=None):
        return parse_config(shipped_config(name), overrides or {}, use_env=False)

    def simulate(self, name, overrides=None):
        from dampedplate import runs

        key = (name, tuple(sorted((overrides or {}).items())))
        if key not in self._cache:
            cfg = self.config(name, overrides)
            out = self.base / f"{name}_{len(self._cache)}"
            self._cache[key] = (cfg, runs.run_simulate(cfg, out), out)
        return self._cache[key]


@pytest.fixture(scope="session")
def shipped(tmp_path_factory):
    return ShippedRuns(tmp_path_factory.mktemp("shipped"))
