"""Configuration schema, defaults, and builders for the library objects.

Configuration files are YAML documents with the sections payload, layout,
fluctuation, controller, assc, scenario, and output. Unknown keys are
rejected. All physical quantities are SI: metres, kilograms, seconds,
newtons, radians. Robot indices in configuration files are 1-based to
match the usual numbering (robot 8 sits in the -y front quadrant).

Defaults reproduce the rectangle transport study: a 0.2 x 1.6 m plate
carried by 8 robots (two per quadrant at the mount points), mass fluctuation
1..3 kg, COM fluctuation +-0.05 m in x and +-0.25 m in y, one possible
robot failure, references (3, 2, 1) m / 0.3 rad, failure of robot 8 at
2.5 s, 1 ms physics step, 5 ms controller period and 200 ms logging.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from . import controller as ctl
from . import dynamics as dyn
from . import simulator as simr
from . import synthesis as synth
from .errors import ConfigError

_C0_DEFAULT = [
    [1.0, 1.5, 2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -1.0, -1.5, 2.0, 0.5, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.5, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.5],
]

_DEFAULT = {
    "payload": {
        "shape": {
            "kind": "rectangle",
            "length_x": 0.2,
            "length_y": 1.6,
            "rects": None,
        },
        "gravity": 9.81,
        "include_robot_mass": False,
        "robot_mass": 0.25,
    },
    "layout": {
        "mounts": [[0.1, 0.6], [-0.1, 0.6], [-0.1, -0.6], [0.1, -0.6]],
        "spins": [1, -1, 1, -1],
        "c_q": 0.02,
        "u_max": 20.0,
        "robots_per_quadrant": 2,
    },
    "fluctuation": {
        "mass_range": [1.0, 3.0],
        "com_x": [-0.05, 0.05],
        "com_y": [-0.25, 0.25],
        "single_failure": True,
    },
    "controller": {
        "c0": _C0_DEFAULT,
        "d0_scale": 2.0,
        "dt_c": 0.005,
        "accel_cutoff_hz": 20.0,
        "epsilon": 0.001,
        "gain_cap": 10000.0,
        "cond_cap": 2000.0,
        "solver": {
            "method": "dr",
            "max_iter": 50000,
            "tol": 1.0e-8,
            "over_relax": 1.7,
            "overshoot": 0.5,
            "deepen": 0.5,
            "margin_slack": 0.05,
        },
    },
    "assc": {
        "k": 10.0,
        "u_p": 20.0,
        "u_n": 0.0,
        "phi_p": 20.0,
        "initial_thrust_mass": 2.0,
        "phi_clamp": None,
    },
    "scenario": {
        "mass": 2.0,
        "com": [0.0, 0.0],
        "refs": {"x": 3.0, "y": 2.0, "z": 1.0, "psi": 0.3},
        "profile": {"kind": "step", "ramp_time": 10.0},
        "initial_z": 1.0,
        "duration": 30.0,
        "dt": 0.001,
        "failure": {"robot": 8, "time": 2.5},
        "noise": None,
    },
    "output": {
        "log_period": 0.2,
        "directory": "out",
        "divergence_limit": 100.0,
    },
}

# keys whose value may be a mapping or null
_NULLABLE = {
    ("payload", "shape", "rects"),
    ("scenario", "failure"),
    ("scenario", "noise"),
    ("assc", "phi_clamp"),
}

# mappings whose defaults don't enumerate their keys
_FREEFORM = {
    ("scenario", "failure"): {"robot": int, "time": float},
    ("scenario", "noise"): {"std": list, "seed": int},
    ("payload", "shape", "rects"): None,  # list of patch mappings
}


def default_config() -> dict:
    return copy.deepcopy(_DEFAULT)


def _merge(default, user, path):
    if user is None and path in _NULLABLE:
        return None
    if path in _FREEFORM:
        allowed = _FREEFORM[path]
        if allowed is None:
            # structure checked by the object builder
            return copy.deepcopy(user)
        if not isinstance(user, dict):
            raise ConfigError(f"{'.'.join(path)}: expected a mapping")
        extra = set(user) - set(allowed)
        if extra:
            raise ConfigError(
                f"unknown key {'.'.join(path + (sorted(extra)[0],))!r}")
        return copy.deepcopy(user)
    if isinstance(default, dict):
        if not isinstance(user, dict):
            raise ConfigError(f"{'.'.join(path)}: expected a mapping")
        out = copy.deepcopy(default)
        for key, value in user.items():
            if key in default:
                out[key] = _merge(default[key], value, path + (key,))
            else:
                raise ConfigError(f"unknown key {'.'.join(path + (key,))!r}")
        return out
    return copy.deepcopy(user)


def _validate_leaf_types(cfg, default, path=()):
    for key, ref in default.items():
        if key not in cfg:
            continue
        val = cfg[key]
        here = path + (key,)
        if isinstance(ref, dict):
            if val is None:
                if here not in _NULLABLE:
                    raise ConfigError(f"{'.'.join(here)} may not be null")
                continue
            if not isinstance(val, dict):
                raise ConfigError(f"{'.'.join(here)}: expected a mapping")
            _validate_leaf_types(val, ref, here)
        elif isinstance(ref, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"{'.'.join(here)}: expected a boolean")
        elif isinstance(ref, (int, float)) and not isinstance(ref, bool):
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{'.'.join(here)}: expected a number")


def load_config(path) -> dict:
    """Read, merge over defaults, and validate a YAML configuration file."""
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path!r}: {exc}") from exc
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError("top level of the config must be a mapping")
    merged = {}
    for section, template in _DEFAULT.items():
        merged[section] = copy.deepcopy(template)
    for section, value in user.items():
        if section not in _DEFAULT:
            raise ConfigError(f"unknown section {section!r}")
        merged[section] = _merge(_DEFAULT[section], value, (section,))
    _validate_leaf_types(merged, _DEFAULT)
    return merged


def dump_config(cfg, stream):
    yaml.safe_dump(cfg, stream, sort_keys=True, default_flow_style=None)


# ---------------------------------------------------------------------------
# builders


def shape_from_config(cfg):
    sh = cfg["payload"]["shape"]
    kind = sh["kind"]
    if kind == "rectangle":
        return dyn.Rectangle(length_x=float(sh["length_x"]),
                             length_y=float(sh["length_y"]))
    if kind == "l_shape":
        rects = sh.get("rects")
        if not rects or len(rects) != 2:
            raise ConfigError("l_shape needs exactly two rects")
        patches = []
        for r in rects:
            extra = set(r) - {"length_x", "length_y", "offset_x", "offset_y"}
            if extra:
                raise ConfigError(f"unknown rect keys {sorted(extra)}")
            patches.append(dyn.RectPatch(float(r["length_x"]), float(r["length_y"]),
                                         float(r["offset_x"]), float(r["offset_y"])))
        return dyn.LShape(patches[0], patches[1])
    raise ConfigError(f"unknown shape kind {kind!r}")


def model_from_config(cfg, mass=None, com=None) -> dyn.PayloadModel:
    shape = shape_from_config(cfg)
    pay = cfg["payload"]
    mass = float(cfg["scenario"]["mass"] if mass is None else mass)
    com = np.asarray(cfg["scenario"]["com"] if com is None else com, dtype=float)
    model = dyn.build_payload_model(shape, mass, com, float(pay["gravity"]))
    if pay["include_robot_mass"]:
        mounts = np.asarray(cfg["layout"]["mounts"], dtype=float)
        per = int(cfg["layout"]["robots_per_quadrant"])
        points = np.repeat(mounts, per, axis=0) - com
        m_r = float(pay["robot_mass"])
        n = points.shape[0]
        total = mass + n * m_r
        inertia = model.inertia + dyn.point_mass_inertia(m_r, points)
        model = dyn.PayloadModel(mass=total, inertia=inertia, com_offset=com,
                                 gravity=model.gravity, shape=shape)
    return model


def layout_from_config(cfg, com=None) -> dyn.AttachmentLayout:
    lay = cfg["layout"]
    com = np.asarray(cfg["scenario"]["com"] if com is None else com, dtype=float)
    return dyn.layout_from_mounts(lay["mounts"], com, lay["spins"],
                                  float(lay["c_q"]), float(lay["u_max"]),
                                  int(lay["robots_per_quadrant"]))


def fluctuation_from_config(cfg, layout) -> synth.FluctuationSpec:
    fl = cfg["fluctuation"]
    if fl["single_failure"]:
        return synth.FluctuationSpec.with_single_failures(
            layout, fl["mass_range"], fl["com_x"], fl["com_y"])
    return synth.FluctuationSpec(tuple(fl["mass_range"]), tuple(fl["com_x"]),
                                 tuple(fl["com_y"]),
                                 (dyn.FailureVector.nominal(layout),))


def controller_matrices_from_config(cfg):
    c0 = np.asarray(cfg["controller"]["c0"], dtype=float)
    if c0.shape != (4, 12):
        raise ConfigError("controller.c0 must be 4x12")
    d0 = dyn.default_d0(float(cfg["controller"]["d0_scale"]))
    return c0, d0


def nominal_design_point(cfg):
    """Mid-mass, centred-COM, all-robots-active model used for D0_hat."""
    lo, hi = cfg["fluctuation"]["mass_range"]
    mass = 0.5 * (float(lo) + float(hi))
    model = model_from_config(cfg, mass=mass, com=(0.0, 0.0))
    layout = layout_from_config(cfg, com=(0.0, 0.0))
    return model, layout


def assc_from_config(cfg, thrust_mass=None) -> ctl.ASSCParams:
    a = cfg["assc"]
    n = 4 * int(cfg["layout"]["robots_per_quadrant"])
    g = float(cfg["payload"]["gravity"])
    mass = float(a["initial_thrust_mass"] if thrust_mass is None else thrust_mass)
    clamp = tuple(a["phi_clamp"]) if a["phi_clamp"] is not None else None
    return ctl.ASSCParams.from_initial_thrust(
        k=float(a["k"]), u_p=float(a["u_p"]), u_n=float(a["u_n"]),
        phi_p=float(a["phi_p"]), thrust=mass * g / n, phi_clamp=clamp)


def controller_from_synthesis(cfg, synth_file, feedback_enabled=True) -> ctl.ControllerConfig:
    return ctl.ControllerConfig(
        f=synth_file.f, g=synth_file.g, c0=synth_file.c0, d0=synth_file.d0,
        d0_hat=synth_file.d0_hat, dt_c=float(cfg["controller"]["dt_c"]),
        feedback_enabled=feedback_enabled,
        accel_cutoff_hz=float(cfg["controller"]["accel_cutoff_hz"]))


def controller_without_synthesis(cfg) -> ctl.ControllerConfig:
    """Identity output mixer; only valid with the feedback share disabled."""
    c0, d0 = controller_matrices_from_config(cfg)
    model, layout = nominal_design_point(cfg)
    sigma = dyn.FailureVector.nominal(layout)
    nominal = dyn.build_error_system(model, layout, sigma, c0, d0)
    return ctl.ControllerConfig(
        f=np.zeros((4, 12)), g=np.eye(4), c0=c0, d0=d0,
        d0_hat=ctl.default_d0_hat(d0, nominal),
        dt_c=float(cfg["controller"]["dt_c"]), feedback_enabled=False,
        accel_cutoff_hz=float(cfg["controller"]["accel_cutoff_hz"]))


def scenario_from_config(cfg, controller_cfg, failure=None, seed=None) -> simr.Scenario:
    sc = cfg["scenario"]
    model = model_from_config(cfg)
    layout = layout_from_config(cfg)
    initial = dyn.FullState()
    initial.position[2] = float(sc["initial_z"])

    refs_t = np.array([sc["refs"]["x"], sc["refs"]["y"], sc["refs"]["z"],
                       sc["refs"]["psi"]], dtype=float)
    prof = sc["profile"]
    start = np.array([initial.position[0], initial.position[1],
                      initial.position[2], initial.attitude[2]])
    profile = simr.ReferenceProfile(targets=refs_t, kind=prof["kind"],
                                    ramp_time=float(prof["ramp_time"]),
                                    start=start)

    if failure is None:
        failure = sc["failure"]
        if failure is not None:
            failure = (int(failure["robot"]) - 1, float(failure["time"]))
    noise = sc["noise"]
    if noise is not None:
        noise = simr.NoiseSpec(std=np.asarray(noise["std"], dtype=float),
                               seed=int(noise["seed"] if seed is None else seed))

    return simr.Scenario(
        model=model, layout=layout, controller_cfg=controller_cfg,
        assc=assc_from_config(cfg), refs=profile, initial_state=initial,
        duration=float(sc["duration"]), dt=float(sc["dt"]),
        failure=failure, noise=noise,
        log_period=float(cfg["output"]["log_period"]),
        divergence_limit=float(cfg["output"]["divergence_limit"]))


__all__ = [
    "default_config", "load_config", "dump_config",
    "shape_from_config", "model_from_config", "layout_from_config",
    "fluctuation_from_config", "controller_matrices_from_config",
    "nominal_design_point", "assc_from_config", "controller_from_synthesis",
    "controller_without_synthesis", "scenario_from_config",
]
