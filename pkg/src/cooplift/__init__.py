"""Robust decentralized control for cooperative aerial payload transport.

Subpackages:
  dynamics    payload model, near-hover dynamics, linear error system
  lmi         affine matrix-inequality feasibility solver
  synthesis   robust SPR feedback design over a fluctuation set
  controller  per-robot switching controller and feedback share
  simulator   fixed-step closed-loop simulation, logging, metrics
  config      YAML schema and object builders
  cli         command-line front end
"""

from . import (cli, config, controller, dynamics, errors, lmi, matio,
               simulator, synthesis)

__all__ = ["cli", "config", "controller", "dynamics", "errors", "lmi",
           "matio", "simulator", "synthesis"]
__version__ = "0.1.0"
