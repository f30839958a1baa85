"""Command-line front end.

Verbs: synthesize, simulate, verify, print-config. Exit codes are a stable
contract: 0 success, 1 configuration/usage error, 2 synthesis infeasible,
3 simulation divergence abort, 4 certificate violation.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import controller as ctl
from . import dynamics as dyn
from . import matio
from . import simulator as simr
from . import synthesis as synth
from .errors import (ConfigError, ContractError, ModelError, SimulationAbort,
                     SynthesisInfeasible)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3
EXIT_CERTIFICATE = 4

_USAGE_ERRORS = (ConfigError, ModelError, ContractError, OSError, KeyError)


def _build_problem(cfg):
    c0, d0 = cfgmod.controller_matrices_from_config(cfg)
    model, layout = cfgmod.nominal_design_point(cfg)
    spec = cfgmod.fluctuation_from_config(cfg, layout)
    vertices = synth.enumerate_vertices(model, layout, spec, c0, d0)
    nominal = dyn.build_error_system(model, layout,
                                     dyn.FailureVector.nominal(layout), c0, d0)
    return c0, d0, model, layout, spec, vertices, nominal


def cmd_synthesize(args) -> int:
    try:
        cfg = cfgmod.load_config(args.config)
        c0, d0, model, layout, spec, vertices, nominal = _build_problem(cfg)
        eps = float(cfg["controller"]["epsilon"])
        opts = dict(cfg["controller"]["solver"])
        result = synth.synthesize(nominal.a, vertices, c0, d0, eps=eps,
                                  gravity=model.gravity,
                                  gain_cap=cfg["controller"]["gain_cap"],
                                  cond_cap=cfg["controller"]["cond_cap"],
                                  solver_options=opts)
    except SynthesisInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    d0_hat = ctl.default_d0_hat(d0, nominal)
    matio.save_synthesis(args.out, result, c0, d0, d0_hat)
    print(f"vertices: {result.vertex_count}")
    print(f"iterations: {result.iterations}")
    print(f"epsilon: {result.eps:g}")
    print(f"margin: {result.margin:.6e}")
    print(f"max |F|: {np.abs(result.f).max():.3f}")
    print(f"written: {args.out}")
    return EXIT_OK


def _parse_failure(text):
    try:
        fields = dict(part.split("=", 1) for part in text.split(","))
        return int(fields["robot"]) - 1, float(fields["t"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad --failure spec {text!r}; "
                          "expected robot=<id>,t=<seconds>") from exc


def cmd_simulate(args) -> int:
    try:
        cfg = cfgmod.load_config(args.config)
        if args.disable_feedback:
            if args.synthesis:
                sf = matio.load_synthesis(args.synthesis)
                controller_cfg = cfgmod.controller_from_synthesis(
                    cfg, sf, feedback_enabled=False)
            else:
                controller_cfg = cfgmod.controller_without_synthesis(cfg)
        else:
            if not args.synthesis:
                raise ConfigError("a synthesis file is required unless "
                                  "--disable-feedback is given")
            sf = matio.load_synthesis(args.synthesis)
            controller_cfg = cfgmod.controller_from_synthesis(cfg, sf)
        failure = _parse_failure(args.failure) if args.failure else None
        scenario = cfgmod.scenario_from_config(cfg, controller_cfg,
                                               failure=failure, seed=args.seed)
        os.makedirs(args.out, exist_ok=True)
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    csv_path = os.path.join(args.out, "trajectory.csv")
    summary_path = os.path.join(args.out, "summary.txt")
    try:
        log = simr.run_scenario(scenario)
    except SimulationAbort as exc:
        with open(summary_path, "w") as fh:
            fh.write(f"abort: {exc.reason}\n")
            fh.write(f"abort_time: {exc.time:.6g}\n")
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    log.save_csv(csv_path)
    refs = scenario.refs.targets
    mets = simr.metrics(log, refs)
    with open(summary_path, "w") as fh:
        for key in sorted(mets):
            fh.write(f"{key}: {mets[key]:.10g}\n")
    for key in sorted(mets):
        print(f"{key}: {mets[key]:.10g}")
    print(f"written: {csv_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        if args.samples <= 0:
            raise ConfigError("--samples must be positive")
        cfg = cfgmod.load_config(args.config)
        sf = matio.load_synthesis(args.synthesis)
        model, layout = cfgmod.nominal_design_point(cfg)
        spec = cfgmod.fluctuation_from_config(cfg, layout)
        nominal = dyn.build_error_system(model, layout,
                                         dyn.FailureVector.nominal(layout),
                                         sf.c0, sf.d0)
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    worst = -math.inf
    worst_label = ""
    count = 0
    for label, b in synth.sample_interior(model, layout, spec, args.samples,
                                          args.seed, sf.c0, sf.d0):
        margin = synth.verify_spr(nominal.a, b, sf.f, sf.g, sf.c0, sf.d0, sf.p)
        abscissa = float(np.linalg.eigvals(nominal.a - b @ sf.f).real.max())
        count += 1
        value = max(margin, abscissa)
        if value > worst:
            worst, worst_label = value, label
    print(f"samples: {count}")
    print(f"worst margin: {worst:.6e} ({worst_label})")
    if worst >= 0:
        print(f"certificate violated at {worst_label}", file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_print_config(args) -> int:
    cfg = cfgmod.default_config()
    if args.out:
        with open(args.out, "w") as fh:
            cfgmod.dump_config(cfg, fh)
    else:
        cfgmod.dump_config(cfg, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cooplift",
                                description="Robust decentralized transport "
                                            "controller synthesis and simulation")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synthesize", help="solve the robust SPR design")
    ps.add_argument("config")
    ps.add_argument("--out", default="synthesis.txt")
    ps.set_defaults(func=cmd_synthesize)

    pr = sub.add_parser("simulate", help="run a closed-loop scenario")
    pr.add_argument("config")
    pr.add_argument("synthesis", nargs="?", default=None)
    pr.add_argument("--disable-feedback", action="store_true")
    pr.add_argument("--failure", default=None,
                    help="override: robot=<1-based id>,t=<seconds>")
    pr.add_argument("--out", default="out")
    pr.add_argument("--seed", type=int, default=None)
    pr.set_defaults(func=cmd_simulate)

    pv = sub.add_parser("verify", help="re-check the certificate on interior samples")
    pv.add_argument("synthesis")
    pv.add_argument("config")
    pv.add_argument("--samples", type=int, default=100)
    pv.add_argument("--seed", type=int, default=0)
    pv.set_defaults(func=cmd_verify)

    pc = sub.add_parser("print-config", help="emit the default configuration")
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=cmd_print_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
