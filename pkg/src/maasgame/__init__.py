"""maasgame: assignment-game solver for MaaS platforms combining fixed-route
transit and congested mobility-on-demand services.

Core entry points:

* :func:`maasgame.scenario.load_scenario` / :func:`maasgame.scenario.validate`
* :func:`maasgame.network.expand`
* :func:`maasgame.bb.solve_matching` (exact) / :func:`maasgame.bb.solve_stable`
  (bounded heuristic with stability and subsidy hooks)
* :mod:`maasgame.stability` for stable-outcome vertices, the instability
  diagnostic, and minimum subsidies
* ``python -m maasgame.cli`` (or the ``maasgame`` script) for the
  validate/solve/report/audit commands
"""

__version__ = "0.1.0"

from . import scenario, network, lp, assignment, lagrangian, stability  # noqa: F401
