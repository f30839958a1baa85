"""Shared fixtures: synthesized designs for the three canned problems."""

import copy
import os

import numpy as np
import pytest

from cooplift import config as cfgmod
from cooplift import controller as ctl
from cooplift import dynamics as dyn
from cooplift import simulator as simr
from cooplift import synthesis as synth

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


class Design:
    """A solved design problem bundled with everything tests need."""

    def __init__(self, config_name):
        self.cfg = cfgmod.load_config(os.path.join(CONFIG_DIR, config_name))
        self.c0, self.d0 = cfgmod.controller_matrices_from_config(self.cfg)
        self.model, self.layout = cfgmod.nominal_design_point(self.cfg)
        self.spec = cfgmod.fluctuation_from_config(self.cfg, self.layout)
        self.vertices = synth.enumerate_vertices(self.model, self.layout,
                                                 self.spec, self.c0, self.d0)
        self.nominal = dyn.build_error_system(
            self.model, self.layout, dyn.FailureVector.nominal(self.layout),
            self.c0, self.d0)
        self.result = synth.synthesize(
            self.nominal.a, self.vertices, self.c0, self.d0,
            eps=float(self.cfg["controller"]["epsilon"]),
            gravity=self.model.gravity,
            gain_cap=self.cfg["controller"]["gain_cap"],
            cond_cap=self.cfg["controller"]["cond_cap"],
            solver_options=self.cfg["controller"]["solver"])
        self.d0_hat = ctl.default_d0_hat(self.d0, self.nominal)
        self.controller_cfg = ctl.ControllerConfig(
            f=self.result.f, g=self.result.g, c0=self.c0, d0=self.d0,
            d0_hat=self.d0_hat, dt_c=float(self.cfg["controller"]["dt_c"]))

    def scenario(self, mass=None, com=None, **overrides):
        cfg = copy.deepcopy(self.cfg)
        if mass is not None:
            cfg["scenario"]["mass"] = mass
        if com is not None:
            cfg["scenario"]["com"] = list(com)
        for key, value in overrides.items():
            cfg["scenario"][key] = value
        return cfgmod.scenario_from_config(cfg, self.controller_cfg)

    def run(self, mass=None, com=None, **overrides):
        scen = self.scenario(mass, com, **overrides)
        log = simr.run_scenario(scen)
        return scen, log


@pytest.fixture(scope="session")
def rect_design():
    return Design("rectangle_iv.yaml")


@pytest.fixture(scope="session")
def lshape_design():
    return Design("lshape_iv.yaml")


@pytest.fixture(scope="session")
def proto_design():
    return Design("prototype_v.yaml")


@pytest.fixture(scope="session")
def rect_runs(rect_design):
    """The three (mass, COM) rectangle scenarios with robot-8 failure at 2.5 s."""
    pairs = {"COM1": (2.0, (0.0, 0.0)),
             "COM2": (1.0, (0.0, 0.25)),
             "COM3": (3.0, (0.0, -0.25))}
    out = {}
    for tag, (mass, com) in pairs.items():
        scen, log = rect_design.run(mass=mass, com=com)
        out[tag] = (scen, log, simr.metrics(log, scen.refs.targets))
    return out


@pytest.fixture(scope="session")
def lshape_runs(lshape_design):
    pairs = {"COM1": (2.0, (0.0, 0.0)),
             "COM2": (1.0, (-0.05, 0.05)),
             "COM3": (3.0, (0.15, -0.15))}
    out = {}
    for tag, (mass, com) in pairs.items():
        scen, log = lshape_design.run(mass=mass, com=com)
        out[tag] = (scen, log, simr.metrics(log, scen.refs.targets))
    return out


def random_fluctuation_point(rng, spec):
    mass = rng.uniform(*spec.mass_range)
    com = (rng.uniform(*spec.com_x), rng.uniform(*spec.com_y))
    sigma = spec.failures[rng.integers(len(spec.failures))]
    return mass, com, sigma
