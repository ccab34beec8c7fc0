"""Two-phase melting benchmark: exact solution, finite-difference reference,
and physics-informed network training with several loss-balancing strategies."""

from .physics import StefanConfig

__all__ = ["StefanConfig"]
__version__ = "0.1.0"
