"""Monte Carlo laboratory for the viscous stochastic mean curvature flow of graphs on the flat torus."""
from .config import SimConfig, parse_config
from .grid import GridSpec, make_grid

__all__ = ["GridSpec", "make_grid", "SimConfig", "parse_config"]
__version__ = "0.1.0"
