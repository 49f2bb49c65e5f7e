"""crosslight: a deterministic single-intersection traffic simulator with
rule-based, learned, and agent-orchestrated signal controllers, plus a
reproducible benchmark harness."""

__version__ = "0.1.0"

from .topology import IntersectionTopology, load_topology  # noqa: F401
from .scenarios import Scenario, get_scenario  # noqa: F401
