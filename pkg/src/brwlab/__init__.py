"""Large-deviation laboratory for branching random walks with stretched-exponential steps."""

from __future__ import annotations

__version__ = "0.1.0"
